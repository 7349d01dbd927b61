"""Cubemap environment maps: texel addressing, solid angles, HDR ingestion.

Face order is fixed as +X, -X, +Y, -Y, +Z, -Z.  For a face of resolution R,
texel (u, v) has face-plane coordinates s = 2(u+0.5)/R - 1 (along the face's
"right" axis) and t = 2(v+0.5)/R - 1 (down the face), with the direction
tables below.  This convention is serialized into checkpoints; training and
rendering must agree on it, nothing else depends on the particular choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgio import read_hdr, read_pfm

#: Rec.709 luma weights, used everywhere an RGB triple is reduced to a scalar.
LUMA = np.array([0.2126, 0.7152, 0.0722])

_FACE_NAMES = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")


def luminance(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb) @ LUMA


@dataclass(frozen=True)
class Cubemap:
    """6-face RGB radiance map, linear HDR values, shape (6, R, R, 3)."""

    faces: np.ndarray

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=np.float64)
        if faces.ndim != 4 or faces.shape[0] != 6 or faces.shape[3] != 3:
            raise ValueError(f"expected faces of shape (6, R, R, 3), got {faces.shape}")
        if faces.shape[1] != faces.shape[2] or faces.shape[1] < 1:
            raise ValueError("cubemap faces must be square and non-empty")
        if not np.all(np.isfinite(faces)):
            raise ValueError("cubemap radiance must be finite")
        if np.any(faces < 0):
            raise ValueError("cubemap radiance must be >= 0")
        object.__setattr__(self, "faces", faces)

    @property
    def face_res(self) -> int:
        return self.faces.shape[1]

    @classmethod
    def constant(cls, value, face_res: int = 64) -> "Cubemap":
        rgb = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
        return cls(np.tile(rgb, (6, face_res, face_res, 1)))

    def sample_nearest(self, d: np.ndarray) -> np.ndarray:
        """Radiance of the texel containing direction(s) d; d shape (..., 3)."""
        face, u, v = dir_to_texel_batch(d, self.face_res)
        return self.faces[face, v, u]

    def sample_bilinear(self, d: np.ndarray) -> np.ndarray:
        """Bilinear lookup within the face hit by d (clamped at face edges)."""
        face, s, t = _dir_to_face_st(np.asarray(d, dtype=np.float64))
        r = self.face_res
        fu = (s + 1.0) * 0.5 * r - 0.5
        fv = (t + 1.0) * 0.5 * r - 0.5
        u0 = np.clip(np.floor(fu).astype(np.int64), 0, r - 1)
        v0 = np.clip(np.floor(fv).astype(np.int64), 0, r - 1)
        u1 = np.minimum(u0 + 1, r - 1)
        v1 = np.minimum(v0 + 1, r - 1)
        au = np.clip(fu - u0, 0.0, 1.0)[..., None]
        av = np.clip(fv - v0, 0.0, 1.0)[..., None]
        f = self.faces
        top = f[face, v0, u0] * (1 - au) + f[face, v0, u1] * au
        bot = f[face, v1, u0] * (1 - au) + f[face, v1, u1] * au
        return top * (1 - av) + bot * av

    def total_flux(self) -> np.ndarray:
        """Per-channel integral of radiance against solid angle (W-ish units)."""
        sa = solid_angle_map(self.face_res)
        return np.einsum("uv,fuvc->c", sa, self.faces)


# direction tables: dir = axis + s * right + t * down, before normalization
_AXIS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)
_RIGHT = np.array([[0, 0, -1], [0, 0, 1], [1, 0, 0], [1, 0, 0], [1, 0, 0], [-1, 0, 0]], dtype=np.float64)
_DOWN = np.array([[0, -1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1], [0, -1, 0], [0, -1, 0]], dtype=np.float64)


def texel_to_dir(face: int, u: int, v: int, face_res: int) -> np.ndarray:
    """Unit direction through the center of texel (face, u, v)."""
    _check_texel(face, u, v, face_res)
    s = 2.0 * (u + 0.5) / face_res - 1.0
    t = 2.0 * (v + 0.5) / face_res - 1.0
    d = _AXIS[face] + s * _RIGHT[face] + t * _DOWN[face]
    return d / np.linalg.norm(d)


def texel_dirs(face_res: int) -> np.ndarray:
    """All texel-center directions, shape (6, R, R, 3)."""
    idx = (np.arange(face_res) + 0.5) * 2.0 / face_res - 1.0
    t, s = np.meshgrid(idx, idx, indexing="ij")  # t varies along v (rows)
    d = (_AXIS[:, None, None, :]
         + s[None, :, :, None] * _RIGHT[:, None, None, :]
         + t[None, :, :, None] * _DOWN[:, None, None, :])
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def _dir_to_face_st(d: np.ndarray):
    d = np.asarray(d, dtype=np.float64)
    norms = np.linalg.norm(d, axis=-1)
    if np.any(norms == 0):
        raise ValueError("zero-length direction")
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    face = np.where(
        (ax >= ay) & (ax >= az), np.where(x >= 0, 0, 1),
        np.where(ay >= az, np.where(y >= 0, 2, 3), np.where(z >= 0, 4, 5)),
    )
    major = np.choose(face, [ax, ax, ay, ay, az, az])
    rx = np.einsum("...c,...c->...", _RIGHT[face], d)
    dx = np.einsum("...c,...c->...", _DOWN[face], d)
    return face, rx / major, dx / major


def dir_to_texel_batch(d: np.ndarray, face_res: int):
    face, s, t = _dir_to_face_st(d)
    u = np.clip(((s + 1.0) * 0.5 * face_res).astype(np.int64), 0, face_res - 1)
    v = np.clip(((t + 1.0) * 0.5 * face_res).astype(np.int64), 0, face_res - 1)
    return face, u, v


def dir_to_texel(d, face_res: int):
    """Face and texel containing direction d (dominant-axis rule)."""
    face, u, v = dir_to_texel_batch(np.asarray(d, dtype=np.float64), face_res)
    return int(face), int(u), int(v)


def _sa_antideriv(s, t):
    # solid angle of the rectangle [0,s]x[0,t] on a unit-distance cube face
    return np.arctan2(s * t, np.sqrt(1.0 + s * s + t * t))


def solid_angle_map(face_res: int) -> np.ndarray:
    """Analytic solid angle of every texel on one face, shape (R, R); rows=v."""
    if face_res < 1:
        raise ValueError("face_res must be positive")
    edges = np.arange(face_res + 1) * 2.0 / face_res - 1.0
    a = _sa_antideriv(edges[:, None], edges[None, :])
    sa = a[1:, 1:] - a[:-1, 1:] - a[1:, :-1] + a[:-1, :-1]
    return sa  # symmetric, so rows-as-v vs rows-as-u does not matter


def texel_solid_angle(face: int, u: int, v: int, face_res: int) -> float:
    """Exact solid angle (steradians) subtended by one texel."""
    _check_texel(face, u, v, face_res)
    e = lambda i: 2.0 * i / face_res - 1.0
    return float(
        _sa_antideriv(e(u + 1), e(v + 1))
        - _sa_antideriv(e(u), e(v + 1))
        - _sa_antideriv(e(u + 1), e(v))
        + _sa_antideriv(e(u), e(v))
    )


def _check_texel(face, u, v, face_res):
    if not (0 <= face < 6):
        raise ValueError(f"face must be in 0..5, got {face}")
    if face_res < 1:
        raise ValueError("face_res must be positive")
    if not (0 <= u < face_res and 0 <= v < face_res):
        raise ValueError(f"texel ({u},{v}) out of range for res {face_res}")


def _dirs_to_equirect_uv(d: np.ndarray, width: int, height: int):
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))  # from +Y
    phi = np.arctan2(d[..., 2], d[..., 0]) % (2.0 * np.pi)
    col = phi / (2.0 * np.pi) * width - 0.5
    row = theta / np.pi * height - 0.5
    return col, row


def from_equirect(img: np.ndarray, face_res: int = 64) -> Cubemap:
    """Resample an equirectangular radiance image into a cubemap (bilinear)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("equirectangular image must be (H, W, 3)")
    if face_res < 1:
        raise ValueError("face_res must be positive")
    h, w = img.shape[:2]
    col, row = _dirs_to_equirect_uv(texel_dirs(face_res), w, h)
    c0 = np.floor(col).astype(np.int64)
    r0 = np.clip(np.floor(row).astype(np.int64), 0, h - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    ac = (col - c0)[..., None]
    ar = np.clip(row - r0, 0.0, 1.0)[..., None]
    c0w, c1w = c0 % w, (c0 + 1) % w  # azimuth wraps
    top = img[r0, c0w] * (1 - ac) + img[r0, c1w] * ac
    bot = img[r1, c0w] * (1 - ac) + img[r1, c1w] * ac
    return Cubemap(top * (1 - ar) + bot * ar)


def load_hdr(path, face_res: int = 64) -> Cubemap:
    """Load a Radiance RGBE `.hdr` equirectangular panorama as a cubemap."""
    return from_equirect(read_hdr(path), face_res=face_res)


def load_pfm_faces(paths) -> Cubemap:
    """Load 6 per-face PFM files, in +X,-X,+Y,-Y,+Z,-Z order (lossless fixtures)."""
    paths = list(paths)
    if len(paths) != 6:
        raise ValueError(f"expected 6 face files, got {len(paths)}")
    faces = [read_pfm(p) for p in paths]
    shapes = {f.shape for f in faces}
    if len(shapes) != 1:
        raise ValueError(f"face resolutions differ: {sorted(shapes)}")
    return Cubemap(np.stack(faces, axis=0))


def rotate_about_up(c: Cubemap, degrees: float) -> Cubemap:
    """Rotate the environment about world +Y; resamples by bilinear lookup."""
    if degrees % 360.0 == 0.0:
        return Cubemap(c.faces.copy())
    th = np.deg2rad(degrees)
    ct, st = np.cos(th), np.sin(th)
    # source direction = R_y(-theta) @ out direction
    d = texel_dirs(c.face_res)
    src = np.empty_like(d)
    src[..., 0] = ct * d[..., 0] - st * d[..., 2]
    src[..., 1] = d[..., 1]
    src[..., 2] = st * d[..., 0] + ct * d[..., 2]
    return Cubemap(c.sample_bilinear(src))
