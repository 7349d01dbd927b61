"""CP-factorized feature field over (position, wavelet, feature) modes.

h_k(x) = U^T (A S(x) * W[k]), elementwise over the M factorization terms:
S is a multiresolution hash grid queried at normalized positions, W a
per-wavelet grid addressed by the 2D wavelet index (looked up, never
interpolated), U the feature matrix, and A a linear adapter that maps the
grid's concatenated output onto the M terms (identity-initialized when the
dimensions already agree, which is the full-scale configuration).
"""

from __future__ import annotations

import warnings

import numpy as np

from .config import ModelConfig
from .wavelet import WaveletIndex

HASH_PRIMES = (1, 2654435761, 805459861)
_CORNERS = np.array([[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)],
                    dtype=np.int64)  # (8, 3)


class HashGrid:
    """Multiresolution trilinear hash encoding over [0,1]^3."""

    def __init__(self, levels: int, features_per_level: int, base_resolution: int,
                 per_level_scale: float, table_size: int, rng: np.random.Generator):
        self.levels = levels
        self.f = features_per_level
        self.table_size = table_size
        self.resolutions = [int(np.floor(base_resolution * per_level_scale ** l))
                            for l in range(levels)]
        # dense (collision-free) indexing wherever the virtual grid fits
        self.dense = [(r + 1) ** 3 <= table_size for r in self.resolutions]
        self.tables = rng.uniform(-1e-4, 1e-4, size=(levels, table_size, self.f))

    @property
    def out_dim(self) -> int:
        return self.levels * self.f

    def _corner_index(self, level: int, cx, cy, cz):
        res = self.resolutions[level]
        if self.dense[level]:
            return cx + (res + 1) * (cy + (res + 1) * cz)
        with np.errstate(over="ignore"):
            h = (cx.astype(np.uint64) * np.uint64(HASH_PRIMES[0])
                 ^ cy.astype(np.uint64) * np.uint64(HASH_PRIMES[1])
                 ^ cz.astype(np.uint64) * np.uint64(HASH_PRIMES[2]))
        return (h % np.uint64(self.table_size)).astype(np.int64)

    def _level_geometry(self, level: int, x: np.ndarray):
        res = self.resolutions[level]
        pos = x * res
        c0 = np.clip(np.floor(pos).astype(np.int64), 0, res - 1)
        frac = pos - c0
        corners = c0[:, None, :] + _CORNERS[None, :, :]  # (B, 8, 3)
        idx = self._corner_index(level, corners[..., 0], corners[..., 1], corners[..., 2])
        w = np.ones((len(x), 8), dtype=x.dtype)
        for d in range(3):
            f = frac[:, d:d + 1]
            w = w * np.where(_CORNERS[None, :, d] == 1, f, 1.0 - f)
        return idx, w

    def query(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        """Concatenated per-level features for x (B, 3) in [0,1]^3."""
        dt = self.tables.dtype
        x = np.asarray(x, dtype=dt)
        if np.any(x < 0.0) or np.any(x > 1.0):
            warnings.warn("hash grid query outside [0,1]^3 clamped")
            x = np.clip(x, 0.0, 1.0)
        out = np.empty((len(x), self.out_dim), dtype=dt)
        for l in range(self.levels):
            idx, w = self._level_geometry(l, x)
            feats = self.tables[l][idx]  # (B, 8, F)
            out[:, l * self.f:(l + 1) * self.f] = (w[..., None] * feats).sum(axis=1)
            if cache is not None:
                cache.append((idx, w))
        return out

    def backward(self, cache: list, upstream: np.ndarray, grad_tables: np.ndarray) -> None:
        """Scatter d(out)/d(tables) into grad_tables (same shape as tables)."""
        for l in range(self.levels):
            idx, w = cache[l]
            up = upstream[:, l * self.f:(l + 1) * self.f]  # (B, F)
            contrib = w[..., None] * up[:, None, :]        # (B, 8, F)
            np.add.at(grad_tables[l], idx.reshape(-1),
                      contrib.reshape(-1, self.f))


class FeatureField:
    """The factorized tensor H[x, k, l] with forward eval and exact gradients."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.grid = HashGrid(cfg.levels, cfg.features_per_level, cfg.base_resolution,
                             cfg.per_level_scale, cfg.table_size, rng)
        m, p = cfg.m_terms, cfg.feature_dim
        lf = self.grid.out_dim
        if m == lf:
            self.adapter = np.eye(m)
        else:
            self.adapter = rng.normal(0.0, 1.0 / np.sqrt(lf), size=(m, lf))
        self.wavelet_grid = rng.normal(0.0, 0.1, size=(6 * cfg.face_res ** 2, m))
        self.feature_matrix = rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, p))
        assert self.param_count() == (cfg.levels * cfg.table_size * cfg.features_per_level
                                      + 6 * cfg.face_res ** 2 * m + m * p + m * lf)

    def param_count(self) -> int:
        return (self.grid.tables.size + self.wavelet_grid.size
                + self.feature_matrix.size + self.adapter.size)

    def params(self) -> list[np.ndarray]:
        return [self.grid.tables, self.adapter, self.wavelet_grid, self.feature_matrix]

    def zero_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params()]

    # ---------------------------------------------------------- forward

    def eval_batch(self, xn: np.ndarray, kflat: np.ndarray,
                   cache: dict | None = None) -> np.ndarray:
        """h for positions xn (B,3) and flat wavelet indices kflat (B,)."""
        grid_cache = [] if cache is not None else None
        s = self.grid.query(xn, cache=grid_cache)          # (B, LF)
        a = s @ self.adapter.T                             # (B, M)
        wk = self.wavelet_grid[kflat]                      # (B, M)
        mvec = a * wk
        h = mvec @ self.feature_matrix                     # (B, P)
        if cache is not None:
            cache.update(grid=grid_cache, s=s, a=a, wk=wk, m=mvec, kflat=kflat)
        return h

    def eval(self, xn, k: WaveletIndex) -> np.ndarray:
        return self.eval_batch(np.asarray(xn, dtype=np.float64)[None, :],
                               np.array([k.flat(self.cfg.face_res)]))[0]

    # ---------------------------------------------------------- backward

    def backward(self, cache: dict, upstream: np.ndarray, grads: list[np.ndarray]) -> None:
        """Accumulate parameter gradients for d(loss)/dh = upstream (B, P)."""
        g_tables, g_adapter, g_wavelet, g_feature = grads
        dm = upstream @ self.feature_matrix.T          # (B, M)
        g_feature += cache["m"].T @ upstream
        dwk = dm * cache["a"]
        np.add.at(g_wavelet, cache["kflat"], dwk)
        da = dm * cache["wk"]
        g_adapter += da.T @ cache["s"]
        ds = da @ self.adapter
        self.grid.backward(cache["grid"], ds, g_tables)

    def grad(self, xn, k: WaveletIndex, upstream: np.ndarray) -> dict:
        """Exact gradients for a single evaluation; convenience wrapper."""
        cache = {}
        self.eval_batch(np.asarray(xn, dtype=np.float64)[None, :],
                        np.array([k.flat(self.cfg.face_res)]), cache=cache)
        grads = self.zero_grads()
        self.backward(cache, np.asarray(upstream, dtype=np.float64)[None, :], grads)
        return {"hash_tables": grads[0], "adapter": grads[1],
                "wavelet_grid": grads[2], "feature_matrix": grads[3]}

    # ------------------------------------------- outer-product fast path

    def eval_outer(self, xn: np.ndarray, kflat: np.ndarray,
                   cache: dict | None = None) -> np.ndarray:
        """h for every (position, wavelet) pair: (B, 3) x (nk,) -> (B*nk, P).

        Row order is position-major; the hash grid is queried once per
        position instead of once per pair.
        """
        grid_cache = [] if cache is not None else None
        s = self.grid.query(xn, cache=grid_cache)                  # (B, LF)
        a = s @ self.adapter.T.astype(s.dtype, copy=False)         # (B, M)
        wk = self.wavelet_grid[kflat].astype(s.dtype, copy=False)  # (nk, M)
        m = a[:, None, :] * wk[None, :, :]                         # (B, nk, M)
        h = m.reshape(-1, m.shape[-1]) @ self.feature_matrix.astype(s.dtype, copy=False)
        if cache is not None:
            cache.update(grid=grid_cache, s=s, a=a, wk=wk, m=m, kflat=kflat)
        return h

    def backward_outer(self, cache: dict, upstream: np.ndarray,
                       grads: list[np.ndarray]) -> None:
        """Gradients for eval_outer; upstream (B*nk, P), position-major."""
        g_tables, g_adapter, g_wavelet, g_feature = grads
        m = cache["m"]
        b, nk, n_terms = m.shape
        dm = (upstream @ self.feature_matrix.T).reshape(b, nk, n_terms)
        g_feature += m.reshape(-1, n_terms).T @ upstream
        np.add.at(g_wavelet, cache["kflat"],
                  np.einsum("bkm,bm->km", dm, cache["a"]))
        da = np.einsum("bkm,km->bm", dm, cache["wk"])
        g_adapter += da.T @ cache["s"]
        ds = da @ self.adapter
        self.grid.backward(cache["grid"], ds, g_tables)


def make_cp_target(npoints: int, n_wavelets: int, p: int, rank: int,
                   seed: int = 0):
    """Synthetic low-rank tensor on a lattice: the CP-fitting oracle target.

    Returns (lattice_points (n^3, 3), tensor (n^3, n_wavelets, p)).
    """
    rng = np.random.default_rng(seed)
    g = np.linspace(0.05, 0.95, npoints)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    s = rng.normal(size=(len(pts), rank))
    w = rng.normal(size=(n_wavelets, rank))
    u = rng.normal(size=(rank, p))
    tensor = np.einsum("ar,kr,rp->akp", s, w, u)
    return pts, tensor


def fit_lowrank_sanity(pts: np.ndarray, target: np.ndarray, cfg: ModelConfig,
                       steps: int = 1500, lr: float = 2e-2, seed: int = 1):
    """Fit the factorized field to a dense target tensor by Adam on MSE.

    Validates the CP machinery end to end; returns (field, rel_l2_error).
    """
    from .optim import Adam

    field = FeatureField(cfg, seed=seed)
    n_wav = target.shape[1]
    npts = len(pts)
    kflat_all = np.tile(np.arange(n_wav), npts)
    x_all = np.repeat(pts, n_wav, axis=0)
    flat_target = target.reshape(npts * n_wav, -1)
    opt = Adam({"field": (field.params(), lr)}, total_steps=steps)
    rel = np.inf
    denom = np.linalg.norm(flat_target)
    for _ in range(steps):
        cache = {}
        h = field.eval_batch(x_all, kflat_all, cache=cache)
        diff = h - flat_target
        grads = field.zero_grads()
        field.backward(cache, 2.0 * diff / diff.size, grads)
        opt.step({"field": grads})
        rel = np.linalg.norm(diff) / denom
    return field, float(rel)
