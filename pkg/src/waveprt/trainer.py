"""End-to-end optimization of the transport model against oracle renders.

Each step picks one lighting condition, draws a wavelet working set (half
top-magnitude, half uniform over the rest), importance-samples pixels from
the condition's views (view-variance, high-frequency, specular, uniform
strategies), and descends the mu-law tonemapped L2 loss between the wavelet
dot product and the ground-truth indirect radiance.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .cubemap import luminance
from .dataset import TrainingData
from .model import TransportModel
from .optim import Adam
from .wavelet import WaveletCoeffs, forward, topk_flat


# ---------------------------------------------------------------- tonemap

def tonemap(x, mu: float = 10.0, eps: float = 1.0):
    """Sign-preserving mu-law compression; odd, TM(0)=0, TM(1)=1 at eps=1."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log(mu * np.abs(x) + eps) / np.log(mu + eps)


def tonemap_grad(x, mu: float = 10.0, eps: float = 1.0):
    """d TM / dx; even, finite at 0 for eps > 0."""
    x = np.asarray(x, dtype=np.float64)
    return mu / ((mu * np.abs(x) + eps) * np.log(mu + eps))


# ---------------------------------------------------------------- sampling

def sample_wavelets(coeffs: WaveletCoeffs, count: int, rng: np.random.Generator,
                    tail_compensation: bool = False):
    """Half unweighted top-magnitude, half uniform over the remaining indices.

    Returns (kflat (count,), l_k (count, 3)) with no duplicates.  With
    `tail_compensation` the uniform half's lighting coefficients are scaled
    by n_remaining / n_uniform, making the working-set dot product an
    unbiased estimate of the full one; without it, the truncated sum biases
    the learned transport wherever the working set misses lighting energy.
    """
    r = coeffs.face_res
    total = 6 * r * r
    if count > total:
        raise ValueError(f"cannot draw {count} wavelets from {total}")
    n_top = count // 2
    top = topk_flat(coeffs, n_top, mode="magnitude") if n_top else np.empty(0, np.int64)
    mask = np.ones(total, dtype=bool)
    mask[top] = False
    remaining = np.flatnonzero(mask)
    n_uni = count - n_top
    uni = rng.choice(remaining, size=n_uni, replace=False)
    kflat = np.concatenate([top, np.sort(uni)])
    l_k = coeffs.coeffs.reshape(-1, 3)[kflat].copy()
    if tail_compensation and n_uni:
        l_k[n_top:] *= len(remaining) / n_uni
    return kflat, l_k


def _gaussian_blur_9x9(img: np.ndarray, sigma: float = 2.0) -> np.ndarray:
    t = np.arange(-4, 5, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    pad = np.pad(img, ((4, 4), (4, 4)), mode="edge")
    tmp = np.apply_along_axis(lambda r: np.convolve(r, k, mode="valid"), 1, pad)
    return np.apply_along_axis(lambda c: np.convolve(c, k, mode="valid"), 0, tmp)


@dataclass
class ImportanceMaps:
    """Per-view sampling PMFs, each flattened over pixels (may span views)."""

    view_variance: np.ndarray  # float16 storage per the training recipe
    high_freq: np.ndarray
    specular: np.ndarray
    uniform: np.ndarray

    def strategies(self):
        return [self.view_variance.astype(np.float64), self.high_freq,
                self.specular, self.uniform]


def _normalize_pmf(w: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    w = np.maximum(w, 0.0)
    s = w.sum()
    if not np.isfinite(s) or s <= 0.0:
        w = fallback.copy()
        s = w.sum()
    return w / s


def build_importance_maps(data: TrainingData, bucket_res: int = 64) -> list[ImportanceMaps]:
    """One ImportanceMaps per view; PMFs restricted to hit pixels."""
    # empirical view-variance of radiance over hit points sharing a bucket
    n_buckets = bucket_res ** 3
    count = np.zeros(n_buckets)
    s1 = np.zeros(n_buckets)
    s2 = np.zeros(n_buckets)
    bucket_ids = []
    for v in data.views:
        hit = v.gbuffer["hit"]
        xn = np.clip(v.gbuffer["xn"], 0.0, 1.0 - 1e-9)
        cell = (xn * bucket_res).astype(np.int64)
        b = (cell[..., 0] * bucket_res + cell[..., 1]) * bucket_res + cell[..., 2]
        b = np.where(hit, b, 0)
        bucket_ids.append(b)
        lum = luminance(v.image)
        sel = b[hit]
        np.add.at(count, sel, 1.0)
        np.add.at(s1, sel, lum[hit])
        np.add.at(s2, sel, lum[hit] ** 2)
    mean = np.divide(s1, count, out=np.zeros_like(s1), where=count > 0)
    var = np.divide(s2, count, out=np.zeros_like(s2), where=count > 0) - mean ** 2
    var = np.where(count >= 2, np.maximum(var, 0.0), 0.0)

    maps = []
    for v, b in zip(data.views, bucket_ids):
        hit = v.gbuffer["hit"].reshape(-1)
        uniform = hit.astype(np.float64)
        if uniform.sum() == 0:
            uniform = np.ones_like(uniform)
        uniform = uniform / uniform.sum()

        vv = np.where(hit, var[b.reshape(-1)], 0.0)
        lum = luminance(v.image)
        hf = np.abs(lum - _gaussian_blur_9x9(lum)).reshape(-1) * hit
        spec = (luminance(v.gbuffer["ks"]) * (1.0 - v.gbuffer["sigma"])).reshape(-1) * hit
        maps.append(ImportanceMaps(
            view_variance=_normalize_pmf(vv, uniform).astype(np.float16),
            high_freq=_normalize_pmf(hf, uniform),
            specular=_normalize_pmf(spec, uniform),
            uniform=uniform,
        ))
    return maps


def sample_pixels(maps: ImportanceMaps, per_strategy: int, rng: np.random.Generator):
    """4 * per_strategy draws (with replacement), concatenated across strategies."""
    picks = []
    fallback = maps.uniform
    for pmf in maps.strategies():
        pmf = _normalize_pmf(pmf, fallback)
        picks.append(rng.choice(len(pmf), size=per_strategy, replace=True, p=pmf))
    return np.concatenate(picks)


def _concat_maps(maps: list[ImportanceMaps], view_ids: list[int]) -> ImportanceMaps:
    def cat(attr):
        parts = [np.asarray(getattr(maps[i], attr), dtype=np.float64) for i in view_ids]
        w = np.concatenate(parts)
        return w / w.sum()

    return ImportanceMaps(view_variance=cat("view_variance").astype(np.float16),
                          high_freq=cat("high_freq"), specular=cat("specular"),
                          uniform=cat("uniform"))


# ---------------------------------------------------------------- trainer

class Trainer:
    def __init__(self, model: TransportModel, data: TrainingData, cfg: TrainConfig):
        if cfg.model.face_res != data.face_res:
            raise ValueError(f"model face_res {cfg.model.face_res} != dataset "
                             f"face_res {data.face_res}")
        self.model = model
        self.data = data
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.opt = Adam({
            "grids": ([model.field.grid.tables, model.field.wavelet_grid], cfg.lr_grids),
            "mlp": ([model.field.adapter, model.field.feature_matrix] + model.mlp.params(),
                    cfg.lr_mlp),
        }, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps, total_steps=cfg.steps)

        self.coeffs = [forward(env) for env in data.envs]  # raw radiance, no sr premultiply
        self.maps = build_importance_maps(data)
        self._cond_views = [data.views_for_condition(c) for c in range(len(data.conditions))]
        self._cond_maps = [
            _concat_maps(self.maps, ids) if ids else None
            for ids in self._cond_views
        ]
        self._pix_per_view = data.views[0].image.shape[0] * data.views[0].image.shape[1]
        self.model.meta["scene_hash"] = data.header.get("scene_hash", "")
        self.model.meta["train_config"] = cfg.to_json()

    def _gather_batch(self, cond: int, flat_ids: np.ndarray):
        view_ids = self._cond_views[cond]
        view_of = np.asarray(flat_ids) // self._pix_per_view
        pix_of = np.asarray(flat_ids) % self._pix_per_view
        xs, wrs, ns, kds, kss, sigmas, gts = [], [], [], [], [], [], []
        for local_v, vid in enumerate(view_ids):
            sel = pix_of[view_of == local_v]
            if len(sel) == 0:
                continue
            v = self.data.views[vid]
            gb = v.gbuffer
            xs.append(gb["xn"].reshape(-1, 3)[sel])
            wrs.append(gb["wr"].reshape(-1, 3)[sel])
            ns.append(gb["n"].reshape(-1, 3)[sel])
            kds.append(gb["kd"].reshape(-1, 3)[sel])
            kss.append(gb["ks"].reshape(-1, 3)[sel])
            sigmas.append(gb["sigma"].reshape(-1)[sel])
            gts.append(v.image.reshape(-1, 3)[sel])
        return (np.concatenate(xs), np.concatenate(wrs), np.concatenate(ns),
                np.concatenate(kds), np.concatenate(kss), np.concatenate(sigmas),
                np.concatenate(gts))

    # pixel-chunked evaluation keeps MLP operands inside the cache hierarchy
    _CHUNK_ROWS = 2048

    def predict_batch(self, xn, wr, n, kd, ks, sigma, kflat, l_k,
                      cache: dict | None = None):
        """Σ_k L_k T_k for every sample pixel; batch = pixels x wavelets."""
        b = len(xn)
        nk = len(kflat)
        t = self.model.transport_outer(xn, kflat, wr, n, kd, ks, sigma, cache=cache)
        pred = (t.reshape(b, nk, 3) * l_k[None, :, :]).sum(axis=1)
        return pred, t

    def sample_batch(self):
        """Draw (condition, wavelet set, pixel batch) for one step."""
        cfg = self.cfg
        cond = int(self.rng.integers(len(self.data.conditions)))
        while self._cond_maps[cond] is None:  # condition without views
            cond = int(self.rng.integers(len(self.data.conditions)))
        kflat, l_k = sample_wavelets(self.coeffs[cond], cfg.wavelets_per_step, self.rng,
                                     tail_compensation=cfg.tail_compensation)
        flat_ids = sample_pixels(self._cond_maps[cond], cfg.pixels_per_strategy, self.rng)
        return cond, kflat, l_k, self._gather_batch(cond, flat_ids)

    def loss_only(self, batch) -> float:
        cfg = self.cfg
        _, kflat, l_k, (xn, wr, n, kd, ks, sigma, gt) = batch
        nk = len(kflat)
        step = max(1, self._CHUNK_ROWS // nk)
        total = 0.0
        for c0 in range(0, len(xn), step):
            sl = slice(c0, c0 + step)
            pred, _ = self.predict_batch(xn[sl], wr[sl], n[sl], kd[sl], ks[sl],
                                         sigma[sl], kflat, l_k)
            diff = tonemap(pred, cfg.mu, cfg.eps) - tonemap(gt[sl], cfg.mu, cfg.eps)
            total += float((diff ** 2).sum())
        return total / (len(xn) * 3)

    def step_on_batch(self, batch, lr_override: float | None = None) -> float:
        cfg = self.cfg
        cond, kflat, l_k, (xn, wr, n, kd, ks, sigma, gt) = batch
        b, nk = len(xn), len(kflat)
        n_elems = b * 3
        step = max(1, self._CHUNK_ROWS // nk)
        field_grads = self.model.field.zero_grads()
        mlp_grads = self.model.mlp.zero_grads()
        total = 0.0
        for c0 in range(0, b, step):
            sl = slice(c0, c0 + step)
            cache = {}
            pred, _ = self.predict_batch(xn[sl], wr[sl], n[sl], kd[sl], ks[sl],
                                         sigma[sl], kflat, l_k, cache=cache)
            diff = tonemap(pred, cfg.mu, cfg.eps) - tonemap(gt[sl], cfg.mu, cfg.eps)
            se = float((diff ** 2).sum())
            if not np.isfinite(se):
                raise RuntimeError(
                    f"NaN/Inf loss at step {self.opt.t}: pred range "
                    f"[{np.nanmin(pred)}, {np.nanmax(pred)}], condition {cond}")
            total += se
            d_pred = 2.0 * diff * tonemap_grad(pred, cfg.mu, cfg.eps) / n_elems
            d_t = (d_pred[:, None, :] * l_k[None, :, :]).reshape(-1, 3)
            self.model.backward_outer(cache, d_t, field_grads, mlp_grads)
        self.opt.step({
            "grids": [field_grads[0], field_grads[2]],
            "mlp": [field_grads[1], field_grads[3]] + mlp_grads,
        }, lr_override=lr_override)
        return total / n_elems

    def train_step(self) -> float:
        return self.step_on_batch(self.sample_batch())

    def train(self, steps: int | None = None, log_path=None, on_step=None,
              held_out_eval=None) -> list[float]:
        """Run the loop; optionally track a held-out batch every
        cfg.held_out_every steps (recorded as held_out_psnr in the log)."""
        steps = self.cfg.steps if steps is None else steps
        losses = []
        self.held_out_psnr: list[tuple[int, float]] = []
        log_f = open(log_path, "w") if log_path else None
        t0 = time.time()
        every = self.cfg.held_out_every
        try:
            for i in range(steps):
                loss = self.train_step()
                losses.append(loss)
                rec = {"step": i, "loss": loss, "lr": self.opt.lr_scale(),
                       "elapsed_s": round(time.time() - t0, 3)}
                if held_out_eval and every and (i % every == 0 or i == steps - 1):
                    held_loss = float(held_out_eval())
                    rec["held_out_psnr"] = -10.0 * np.log10(max(held_loss, 1e-12))
                    self.held_out_psnr.append((i, rec["held_out_psnr"]))
                if log_f:
                    log_f.write(json.dumps(rec) + "\n")
                if on_step:
                    on_step(i, loss)
        finally:
            if log_f:
                log_f.close()
        return losses


def make_held_out_batch(trainer: Trainer, env, gbuffer: dict, image: np.ndarray,
                        pixels: int = 256, wavelets: int = 256, seed: int = 0):
    """Fixed evaluation batch for a view the trainer never sees.

    Uses the top `wavelets` coefficients of the held-out lighting so the
    tracked loss reflects the rendering the model will actually do.
    """
    coeffs = forward(env)
    kflat = topk_flat(coeffs, wavelets, mode="magnitude")
    l_k = coeffs.coeffs.reshape(-1, 3)[kflat]
    rng = np.random.default_rng(seed)
    hit = np.flatnonzero(gbuffer["hit"].reshape(-1))
    sel = rng.choice(hit, size=min(pixels, len(hit)), replace=False)
    pick = lambda a, ch: a.reshape(-1, ch)[sel] if ch > 1 else a.reshape(-1)[sel]
    batch = (pick(gbuffer["xn"], 3), pick(gbuffer["wr"], 3), pick(gbuffer["n"], 3),
             pick(gbuffer["kd"], 3), pick(gbuffer["ks"], 3), pick(gbuffer["sigma"], 1),
             pick(image, 3))
    return (-1, kflat, l_k, batch)


def smoothed_is_decreasing(losses, chunks: int = 10, tol: float = 0.0) -> bool:
    """Split the loss curve into consecutive chunks; chunk means must not rise."""
    losses = np.asarray(losses, dtype=np.float64)
    edges = np.linspace(0, len(losses), chunks + 1).astype(int)
    means = np.array([losses[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
    return bool(np.all(np.diff(means) <= tol * np.maximum(means[:-1], 1e-12)))
