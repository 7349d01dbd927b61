"""CPU path tracer: the ground-truth oracle for training data and checks.

Environment sampling uses a marginal/conditional CDF over texels weighted by
luminance times solid angle, combined with BRDF sampling through the balance
heuristic.  Paths are traced in vectorized batches; all randomness comes from
counter-based per-(pixel, sample) streams, so images are bit-identical for
any worker partitioning.

Scattering-event bookkeeping: a path contribution with c surface scattering
events is "direct" when c <= 1 (environment seen directly, or after one
bounce) and "indirect" when c >= 2.  The learned transport model is trained
on indirect-only renders.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, replace

import numpy as np

from .brdf import brdf_eval, brdf_pdf, brdf_sample
from .cubemap import Cubemap, dir_to_texel_batch, luminance, solid_angle_map, texel_dirs
from .rng import PixelSampler
from .scene import Camera, Scene


@dataclass(frozen=True)
class PathTracerConfig:
    spp: int = 256
    max_bounces: int = 8
    mode: str = "full"  # full | direct_only | indirect_only
    seed: int = 0
    threads: int = 1
    radiance_clamp: float | None = None  # off for oracle runs
    sampling: str = "mis"  # mis | env | brdf (single-strategy, for diagnostics)

    def __post_init__(self):
        if self.mode not in ("full", "direct_only", "indirect_only"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.sampling not in ("mis", "env", "brdf"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.spp < 1 or self.max_bounces < 1:
            raise ValueError("spp and max_bounces must be >= 1")


@dataclass
class RenderResult:
    image: np.ndarray      # (H, W, 3) mean radiance for cfg.mode
    variance: np.ndarray   # (H, W, 3) variance of the per-pixel mean


class EnvSampler:
    """Importance sampling of a cubemap: texel probability ~ luminance * sr."""

    def __init__(self, env: Cubemap):
        self.env = env
        r = env.face_res
        self.res = r
        sa = solid_angle_map(r)
        w = luminance(env.faces) * sa[None, :, :]
        flat = w.reshape(6 * r, r)  # rows = (face, v), cols = u
        self.total = float(flat.sum())
        self.uniform = self.total <= 0.0
        if not self.uniform:
            self.p_texel = (w / self.total).reshape(-1)
            row_mass = flat.sum(axis=1)
            self.row_cdf = np.cumsum(row_mass) / self.total
            with np.errstate(invalid="ignore", divide="ignore"):
                cond = np.cumsum(flat, axis=1) / row_mass[:, None]
            cond[row_mass == 0] = np.linspace(1.0 / r, 1.0, r)
            self.cond_cdf = cond
        self._st_area = (2.0 / r) ** 2

    def radiance(self, d: np.ndarray) -> np.ndarray:
        return self.env.sample_nearest(d)

    def sample(self, u_row, u_col, ju, jv):
        """Directions + pdf (sr^-1) from four uniforms per lane."""
        if self.uniform:
            z = 1.0 - 2.0 * u_row
            phi = 2.0 * np.pi * u_col
            s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
            d = np.stack([s * np.cos(phi), z, s * np.sin(phi)], axis=-1)
            return d, np.full(u_row.shape, 1.0 / (4.0 * np.pi))
        r = self.res
        row = np.searchsorted(self.row_cdf, u_row, side="right")
        row = np.minimum(row, 6 * r - 1)
        cdf_rows = self.cond_cdf[row]
        col = np.minimum((cdf_rows < u_col[:, None]).sum(axis=1), r - 1)
        face = row // r
        v = row % r
        s = ((col + ju) / r) * 2.0 - 1.0
        t = ((v + jv) / r) * 2.0 - 1.0
        from .cubemap import _AXIS, _DOWN, _RIGHT
        d = _AXIS[face] + s[:, None] * _RIGHT[face] + t[:, None] * _DOWN[face]
        norm2 = 1.0 + s * s + t * t
        d = d / np.sqrt(norm2)[:, None]
        flat = (face * r + v) * r + col
        pdf = self.p_texel[flat] / self._st_area * norm2 ** 1.5
        return d, pdf

    def pdf(self, d: np.ndarray) -> np.ndarray:
        """Solid-angle pdf of `sample` at arbitrary directions."""
        if self.uniform:
            return np.full(np.asarray(d).shape[:-1], 1.0 / (4.0 * np.pi))
        from .cubemap import _dir_to_face_st
        face, s, t = _dir_to_face_st(d)
        r = self.res
        u = np.clip(((s + 1.0) * 0.5 * r).astype(np.int64), 0, r - 1)
        v = np.clip(((t + 1.0) * 0.5 * r).astype(np.int64), 0, r - 1)
        flat = (face * r + v) * r + u
        norm2 = 1.0 + s * s + t * t
        return self.p_texel[flat] / self._st_area * norm2 ** 1.5


def _trace_rows(scene: Scene, camera: Camera, sampler_env: EnvSampler,
                cfg: PathTracerConfig, row0: int, row1: int):
    """Direct/indirect accumulators for pixel rows [row0, row1)."""
    w = camera.width
    npix = (row1 - row0) * w
    spp = cfg.spp
    n = npix * spp

    pix_rows = row0 + (np.arange(npix) // w)
    pix_cols = np.arange(npix) % w
    gid = pix_rows * w + pix_cols
    pid = np.repeat(gid, spp)
    sid = np.tile(np.arange(spp), npix)
    rng = PixelSampler(cfg.seed, pid, sid)

    jx, jy = rng.next2()
    d = camera.ray_dirs(np.repeat(pix_cols, spp) + jx, np.repeat(pix_rows, spp) + jy)
    o = np.broadcast_to(camera.position, d.shape).copy()

    acc_d = np.zeros((n, 3))
    acc_i = np.zeros((n, 3))
    throughput = np.ones((n, 3))
    prev_pdf = np.zeros(n)
    alive = np.arange(n)
    eps = 1e-4 * scene.diagonal
    # stratify the first-vertex light/BRDF samples over the sample index
    strat = (sid + rng.next1()) / spp
    strat_b = (sid + rng.next1()) / spp

    def deposit(idx, rgb, scatter_count):
        if scatter_count <= 1:
            np.add.at(acc_d, idx, rgb)
        else:
            np.add.at(acc_i, idx, rgb)

    for seg in range(cfg.max_bounces + 1):
        # fixed per-iteration draw schedule keeps streams partition-invariant
        u_nee = [rng.next1() for _ in range(4)]
        u_brdf = [rng.next1() for _ in range(3)]
        u_rr = rng.next1()
        if len(alive) == 0:
            continue

        t, prim, bu, bv = scene.intersect(o[alive], d[alive],
                                          t_min=0.0 if seg == 0 else eps)
        miss = prim < 0
        if np.any(miss):
            mi = alive[miss]
            lenv = sampler_env.radiance(d[mi])
            if seg == 0:
                deposit(mi, throughput[mi] * lenv, 0)
            elif cfg.sampling != "env":
                if cfg.sampling == "brdf":
                    wgt = np.ones(len(mi))
                else:
                    pdf_e = sampler_env.pdf(d[mi])
                    wgt = prev_pdf[mi] / np.maximum(prev_pdf[mi] + pdf_e, 1e-30)
                deposit(mi, throughput[mi] * lenv * wgt[:, None], seg)

        hit = ~miss
        if seg == cfg.max_bounces or not np.any(hit):
            alive = alive[:0]
            continue

        hi = alive[hit]
        th = t[hit]
        x = o[hi] + th[:, None] * d[hi]
        ns, gn, kd, ks, sigma = scene.shading_at(prim[hit], bu[hit], bv[hit])
        wo = -d[hi]
        flip = np.einsum("ij,ij->i", ns, wo) < 0.0
        ns = np.where(flip[:, None], -ns, ns)
        vertex = seg + 1  # scattering events after this surface interaction

        # next-event estimation toward the environment
        ur = strat[hi] if seg == 0 else u_nee[0][hi]
        wl, pdf_e = sampler_env.sample(ur, u_nee[1][hi], u_nee[2][hi], u_nee[3][hi])
        cos_l = np.einsum("ij,ij->i", ns, wl)
        f_l = brdf_eval(kd, ks, sigma, ns, wl, wo)
        cand = (cos_l > 0) & (pdf_e > 0) & (f_l.sum(axis=1) > 0) & (cfg.sampling != "brdf")
        if np.any(cand):
            sh = ~scene.occluded(x[cand], wl[cand])
            if np.any(sh):
                sel = np.flatnonzero(cand)[sh]
                if cfg.sampling == "env":
                    wgt = np.ones(len(sel))
                else:
                    pdf_b = brdf_pdf(kd[sel], ks[sel], sigma[sel], ns[sel], wl[sel], wo[sel])
                    wgt = pdf_e[sel] / np.maximum(pdf_e[sel] + pdf_b, 1e-30)
                lenv = sampler_env.radiance(wl[sel])
                contrib = (throughput[hi[sel]] * f_l[sel] * lenv
                           * (cos_l[sel] * wgt / pdf_e[sel])[:, None])
                deposit(hi[sel], contrib, vertex)

        # continue the path by BRDF sampling
        ub = strat_b[hi] if seg == 0 else u_brdf[1][hi]
        wi, pdf_b = brdf_sample(kd, ks, sigma, ns, wo, u_brdf[0][hi], ub, u_brdf[2][hi])
        cos_i = np.einsum("ij,ij->i", ns, wi)
        f_b = brdf_eval(kd, ks, sigma, ns, wi, wo)
        ok = (cos_i > 0) & (pdf_b > 1e-12) & np.isfinite(pdf_b)
        scale = np.where(ok, cos_i / np.maximum(pdf_b, 1e-30), 0.0)
        throughput[hi] *= f_b * scale[:, None]
        live = ok & (throughput[hi].max(axis=1) > 0)

        if vertex > 3:  # Russian roulette, throughput-based survival
            q = np.clip(throughput[hi].max(axis=1), 0.05, 1.0)
            kill = u_rr[hi] >= q
            throughput[hi] = np.where(kill[:, None], 0.0, throughput[hi] / q[:, None])
            live &= ~kill

        o[hi] = x
        d[hi] = wi
        prev_pdf[hi] = pdf_b
        alive = hi[live]

    def reduce(acc):
        per = acc.reshape(npix, spp, 3)
        if cfg.radiance_clamp is not None:  # firefly clamp on per-sample values
            per = np.minimum(per, cfg.radiance_clamp)
        mean = per.mean(axis=1)
        var = per.var(axis=1, ddof=1) / spp if spp > 1 else np.zeros_like(mean)
        return mean.reshape(row1 - row0, w, 3), var.reshape(row1 - row0, w, 3)

    # full-mode variance must come from per-sample sums (d and i correlate)
    return reduce(acc_d), reduce(acc_i), reduce(acc_d + acc_i)[1]


_WORKER_CTX = {}


def _init_worker(scene, camera, env_sampler, cfg):
    _WORKER_CTX["args"] = (scene, camera, env_sampler, cfg)


def _run_task(rows):
    scene, camera, env_sampler, cfg = _WORKER_CTX["args"]
    return _trace_rows(scene, camera, env_sampler, cfg, rows[0], rows[1])


def render_components(scene: Scene, camera: Camera, env: Cubemap,
                      cfg: PathTracerConfig):
    """One pass over shared paths; returns (direct, indirect) RenderResults."""
    sampler_env = EnvSampler(env)
    h, w = camera.height, camera.width
    rows_per_task = max(1, min(h, int(np.ceil(2 ** 17 / max(w * cfg.spp, 1)))))
    tasks = [(r, min(r + rows_per_task, h)) for r in range(0, h, rows_per_task)]

    if cfg.threads > 1 and len(tasks) > 1:
        ctx = mp.get_context("fork")
        with ctx.Pool(processes=cfg.threads, initializer=_init_worker,
                      initargs=(scene, camera, sampler_env, cfg)) as pool:
            parts = pool.map(_run_task, tasks)
    else:
        parts = [_trace_rows(scene, camera, sampler_env, cfg, r0, r1) for r0, r1 in tasks]

    direct = RenderResult(np.concatenate([p[0][0] for p in parts], axis=0),
                          np.concatenate([p[0][1] for p in parts], axis=0))
    indirect = RenderResult(np.concatenate([p[1][0] for p in parts], axis=0),
                            np.concatenate([p[1][1] for p in parts], axis=0))
    var_full = np.concatenate([p[2] for p in parts], axis=0)
    return direct, indirect, var_full


def render(scene: Scene, camera: Camera, env: Cubemap, cfg: PathTracerConfig) -> RenderResult:
    """Unbiased estimate of outgoing radiance for cfg.mode; deterministic."""
    direct, indirect, var_full = render_components(scene, camera, env, cfg)
    if cfg.mode == "direct_only":
        return direct
    if cfg.mode == "indirect_only":
        return indirect
    return RenderResult(direct.image + indirect.image, var_full)
