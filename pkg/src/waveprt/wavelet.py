"""Orthonormal non-standard 2D Haar transform over cubemap faces.

Each 2x2 analysis step uses +-1/2 weights, so the transform is orthonormal
(Parseval holds against the plain texel sum).  Coefficients are stored
in place in the recursive quadrant layout: the face's single scaling
coefficient sits at (u, v) = (0, 0) and the three detail quadrants of each
level fill the rest, giving every coefficient a unique 2D address.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cubemap import Cubemap, luminance, solid_angle_map


@dataclass(frozen=True)
class WaveletIndex:
    face: int
    u: int
    v: int

    def flat(self, face_res: int) -> int:
        return (self.face * face_res + self.v) * face_res + self.u

    @classmethod
    def from_flat(cls, flat: int, face_res: int) -> "WaveletIndex":
        face, rem = divmod(int(flat), face_res * face_res)
        v, u = divmod(rem, face_res)
        return cls(face, u, v)


@dataclass(frozen=True)
class WaveletCoeffs:
    """Haar coefficients per face, shape (6, R, R, 3), quadrant layout."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 4 or c.shape[0] != 6 or c.shape[1] != c.shape[2] or c.shape[3] != 3:
            raise ValueError(f"expected coeffs of shape (6, R, R, 3), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def face_res(self) -> int:
        return self.coeffs.shape[1]


def _require_pow2(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"face resolution must be a power of two, got {n}")


def forward_array(img: np.ndarray) -> np.ndarray:
    """Non-standard Haar analysis of (..., R, R, C) images (any sign)."""
    img = np.asarray(img, dtype=np.float64)
    r = img.shape[-2]
    if img.shape[-3] != r:
        raise ValueError("faces must be square")
    _require_pow2(r)
    out = img.copy()
    s = r
    while s > 1:
        blk = out[..., :s, :s, :]
        a = blk[..., 0::2, 0::2, :]
        b = blk[..., 0::2, 1::2, :]
        c = blk[..., 1::2, 0::2, :]
        d = blk[..., 1::2, 1::2, :]
        h = s // 2
        new = np.empty_like(blk)
        new[..., :h, :h, :] = (a + b + c + d) * 0.5
        new[..., :h, h:, :] = (a - b + c - d) * 0.5
        new[..., h:, :h, :] = (a + b - c - d) * 0.5
        new[..., h:, h:, :] = (a - b - c + d) * 0.5
        out[..., :s, :s, :] = new
        s = h
    return out


def inverse_array(coeffs: np.ndarray) -> np.ndarray:
    """Exact inverse of `forward_array`."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    r = coeffs.shape[-2]
    if coeffs.shape[-3] != r:
        raise ValueError("coefficient planes must be square")
    _require_pow2(r)
    out = coeffs.copy()
    s = 2
    while s <= r:
        h = s // 2
        blk = out[..., :s, :s, :]
        ll = blk[..., :h, :h, :]
        lh = blk[..., :h, h:, :]
        hl = blk[..., h:, :h, :]
        hh = blk[..., h:, h:, :]
        new = np.empty_like(blk)
        new[..., 0::2, 0::2, :] = (ll + lh + hl + hh) * 0.5
        new[..., 0::2, 1::2, :] = (ll - lh + hl - hh) * 0.5
        new[..., 1::2, 0::2, :] = (ll + lh - hl - hh) * 0.5
        new[..., 1::2, 1::2, :] = (ll - lh - hl + hh) * 0.5
        out[..., :s, :s, :] = new
        s *= 2
    return out


def forward(c: Cubemap) -> WaveletCoeffs:
    """Transform raw radiance (no solid-angle premultiply) to Haar coefficients."""
    return WaveletCoeffs(forward_array(c.faces))


def inverse(w: WaveletCoeffs) -> Cubemap:
    img = inverse_array(w.coeffs)
    lo = img.min()
    if lo < -1e-6 * max(1.0, np.abs(img).max()):
        raise ValueError("coefficients do not reconstruct a radiance map (negative values)")
    return Cubemap(np.maximum(img, 0.0))


@lru_cache(maxsize=8)
def _support_geometry(face_res: int):
    """Per-coefficient support block (u0, v0, size) arrays, each (R, R)."""
    _require_pow2(face_res)
    r = face_res
    u = np.arange(r)[None, :].repeat(r, axis=0)
    v = np.arange(r)[:, None].repeat(r, axis=1)
    m = np.maximum(u, v)
    level = np.zeros((r, r), dtype=np.int64)
    nz = m > 0
    level[nz] = np.floor(np.log2(m[nz])).astype(np.int64)
    size = r >> level  # support edge length in texels
    bu = np.where(u >= (1 << level), u - (1 << level), u)
    bv = np.where(v >= (1 << level), v - (1 << level), v)
    u0 = bu * size
    v0 = bv * size
    # (0,0) and the three coarsest details fall out with level 0, size r
    return u0, v0, size


@lru_cache(maxsize=8)
def support_area_map(face_res: int) -> np.ndarray:
    """Solid angle (sr) of every coefficient's spatial support, shape (R, R)."""
    sa = solid_angle_map(face_res)
    integ = np.zeros((face_res + 1, face_res + 1))
    integ[1:, 1:] = sa.cumsum(axis=0).cumsum(axis=1)
    u0, v0, size = _support_geometry(face_res)
    u1, v1 = u0 + size, v0 + size
    area = integ[v1, u1] - integ[v0, u1] - integ[v1, u0] + integ[v0, u0]
    return area


def support_area(idx: WaveletIndex, face_res: int) -> float:
    """Solid angle of one wavelet's spatial support square."""
    if not (0 <= idx.face < 6 and 0 <= idx.u < face_res and 0 <= idx.v < face_res):
        raise ValueError(f"wavelet index {idx} out of range for res {face_res}")
    return float(support_area_map(face_res)[idx.v, idx.u])


def _scores(w: WaveletCoeffs, mode: str, score: str) -> np.ndarray:
    mags = np.abs(w.coeffs)
    if score == "luminance":
        base = luminance(mags)
    elif score == "max_channel":
        base = mags.max(axis=-1)
    else:
        raise ValueError(f"unknown score {score!r}")
    if mode == "magnitude":
        return base
    if mode == "area_weighted":
        return base * support_area_map(w.face_res)[None, :, :]
    raise ValueError(f"unknown selection mode {mode!r}")


def topk_flat(w: WaveletCoeffs, k: int, mode: str = "magnitude",
              score: str = "luminance") -> np.ndarray:
    """Flat indices of the k best coefficients, sorted by descending score.

    Ties break by (face, u, v) lexicographic order for determinism.
    """
    r = w.face_res
    total = 6 * r * r
    if not (1 <= k <= total):
        raise ValueError(f"k must be in 1..{total}, got {k}")
    sc = _scores(w, mode, score).reshape(-1)  # flat = (face*R + v)*R + u
    flat = np.arange(total)
    face = flat // (r * r)
    v = (flat // r) % r
    u = flat % r
    order = np.lexsort((v, u, face, -sc))
    return order[:k]


def select_topk(w: WaveletCoeffs, k: int, mode: str = "magnitude",
                score: str = "luminance"):
    """The k highest-scoring coefficients as (WaveletIndex, rgb) pairs."""
    flat = topk_flat(w, k, mode=mode, score=score)
    r = w.face_res
    vals = w.coeffs.reshape(-1, 3)[flat]
    return [(WaveletIndex.from_flat(int(f), r), vals[i].copy()) for i, f in enumerate(flat)]


def energy_curve(w: WaveletCoeffs, mode: str = "magnitude",
                 score: str = "luminance") -> np.ndarray:
    """Cumulative fraction of total L2 energy retained by the top-k prefix.

    Returns shape (6*R*R,); entry k-1 is the fraction for the best k
    coefficients under the given ranking.
    """
    order = topk_flat(w, 6 * w.face_res ** 2, mode=mode, score=score)
    sq = (w.coeffs.reshape(-1, 3) ** 2).sum(axis=1)
    total = sq.sum()
    if total == 0:
        return np.ones_like(sq)
    return np.cumsum(sq[order]) / total
