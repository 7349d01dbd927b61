"""Relighting renderer: wavelet projection, top-K selection, transport
evaluation and the dot product, plus image metrics.

Intermediate values stay signed (wavelet rendering produces negative
partial sums by design); clamping to >= 0 happens only when an image leaves
the pipeline (PNG/PFM output, metrics).
"""

from __future__ import annotations

import time

import numpy as np

from .cubemap import Cubemap
from .imgio import encode_png_bytes, srgb_encode, to_u8
from .model import TransportModel
from .pathtracer import PathTracerConfig, render as oracle_render
from .scene import Camera, Scene, trace_primary
from .trainer import tonemap
from .wavelet import forward, topk_flat

_PSNR_CAP = 99.0


class RenderMismatchError(ValueError):
    pass


def project_lighting(env: Cubemap, model: TransportModel):
    """Wavelet-transform the environment with the checkpoint's convention."""
    if not model.meta.get("raw_radiance_wavelets", False):
        raise RenderMismatchError(
            "checkpoint was trained with solid-angle-premultiplied lighting; "
            "this renderer only supports the raw-radiance convention")
    if env.face_res != model.cfg.face_res:
        raise RenderMismatchError(
            f"environment face_res {env.face_res} != model face_res {model.cfg.face_res}")
    return forward(env)


def dot_product(l_list, t_list) -> np.ndarray:
    """Channelwise sum of products over the wavelet set."""
    l_arr = np.asarray(l_list, dtype=np.float64).reshape(-1, 3)
    t_arr = np.asarray(t_list, dtype=np.float64).reshape(-1, 3)
    if l_arr.shape != t_arr.shape:
        raise ValueError("lighting/transport coefficient shapes differ")
    return (l_arr * t_arr).sum(axis=0)


def check_scene_match(scene: Scene, model: TransportModel) -> None:
    want = model.meta.get("scene_hash", "")
    if want and scene.scene_hash and want != scene.scene_hash:
        raise RenderMismatchError(
            f"scene hash {scene.scene_hash[:12]} does not match checkpoint "
            f"scene hash {want[:12]}")


def render_indirect(scene: Scene, camera: Camera, model: TransportModel,
                    env: Cubemap, num_wavelets: int = 64,
                    selection: str = "area_weighted",
                    max_eval_batch: int = 2048) -> np.ndarray:
    """Learned indirect radiance (signed HDR); misses show the environment.

    Transport evaluation runs in float32 (the parameters are stored as
    float32 in checkpoints anyway); the wavelet dot product stays float64
    so the result is exactly linear in the lighting coefficients.
    """
    check_scene_match(scene, model)
    coeffs = project_lighting(env, model)
    total = 6 * model.cfg.face_res ** 2
    if not (0 <= num_wavelets <= total):  # 0 = empty set, a valid black render
        raise ValueError(f"num_wavelets must be in 0..{total}")
    if num_wavelets:
        kflat = topk_flat(coeffs, num_wavelets, mode=selection)
        l_k = coeffs.coeffs.reshape(-1, 3)[kflat]

    gb = trace_primary(scene, camera)
    h, w = gb.shape
    out = np.zeros((h, w, 3))
    miss = ~gb.hit
    if miss.any():
        out[miss] = env.sample_nearest(camera.rays()[miss])

    hit_idx = np.flatnonzero(gb.hit.reshape(-1))
    if len(hit_idx) == 0 or num_wavelets == 0:
        return out
    f32 = np.float32
    m32 = model.to_dtype(f32)
    xn = gb.xn.reshape(-1, 3)[hit_idx].astype(f32)
    wr = gb.wr.reshape(-1, 3)[hit_idx].astype(f32)
    n = gb.n.reshape(-1, 3)[hit_idx].astype(f32)
    kd = gb.kd.reshape(-1, 3)[hit_idx].astype(f32)
    ks = gb.ks.reshape(-1, 3)[hit_idx].astype(f32)
    sigma = gb.sigma.reshape(-1)[hit_idx].astype(f32)

    nk = len(kflat)
    chunk = max(1, max_eval_batch // nk)
    flat_out = out.reshape(-1, 3)
    for c0 in range(0, len(hit_idx), chunk):
        sl = slice(c0, c0 + chunk)
        b = len(xn[sl])
        t = m32.transport_outer(xn[sl], kflat, wr[sl], n[sl], kd[sl], ks[sl], sigma[sl])
        flat_out[hit_idx[sl]] = (t.reshape(b, nk, 3).astype(np.float64)
                                 * l_k[None, :, :]).sum(axis=1)
    return out


def render_full(scene: Scene, camera: Camera, model: TransportModel, env: Cubemap,
                num_wavelets: int = 64, selection: str = "area_weighted",
                direct_spp: int = 64, direct_seed: int = 0, threads: int = 1,
                include_direct: bool = True) -> dict:
    """Learned indirect plus path-traced direct; components kept separate."""
    t0 = time.perf_counter()
    indirect = render_indirect(scene, camera, model, env,
                               num_wavelets=num_wavelets, selection=selection)
    result = {"indirect": indirect, "direct": None, "image": indirect,
              "render_ms": (time.perf_counter() - t0) * 1e3}
    if include_direct:
        cfg = PathTracerConfig(spp=direct_spp, mode="direct_only",
                               seed=direct_seed, threads=threads)
        direct = oracle_render(scene, camera, env, cfg).image
        result["direct"] = direct
        result["image"] = indirect + direct
        result["render_ms"] = (time.perf_counter() - t0) * 1e3
    return result


# ---------------------------------------------------------------- metrics

def psnr(img: np.ndarray, ref: np.ndarray, peak: float = 1.0,
         mu: float = 10.0, eps: float = 1.0) -> float:
    """PSNR between tonemapped-to-[0,1] images; identical pairs cap at 99 dB."""
    a = np.clip(tonemap(np.maximum(img, 0.0), mu, eps), 0.0, 1.0)
    b = np.clip(tonemap(np.maximum(ref, 0.0), mu, eps), 0.0, 1.0)
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return _PSNR_CAP
    return min(10.0 * np.log10(peak * peak / mse), _PSNR_CAP)


def rel_l2(img: np.ndarray, ref: np.ndarray) -> float:
    """Relative L2 error on raw (clamped-at-zero) HDR values."""
    a = np.maximum(np.asarray(img, dtype=np.float64), 0.0)
    b = np.maximum(np.asarray(ref, dtype=np.float64), 0.0)
    denom = np.linalg.norm(b)
    if denom == 0.0:
        return 0.0 if np.linalg.norm(a) == 0.0 else np.inf
    return float(np.linalg.norm(a - b) / denom)


def display_encode(hdr: np.ndarray, mu: float = 10.0, eps: float = 1.0) -> np.ndarray:
    """HDR -> u8 for PNG: mu-law tonemap, clamp, sRGB transfer."""
    tm = np.clip(tonemap(np.maximum(hdr, 0.0), mu, eps), 0.0, 1.0)
    return to_u8(srgb_encode(tm))


def encode_display_png(hdr: np.ndarray, mu: float = 10.0, eps: float = 1.0) -> bytes:
    return encode_png_bytes(display_encode(hdr, mu, eps))


def cubemap_cross(env: Cubemap) -> np.ndarray:
    """Lay the six faces out as the familiar horizontal cross (4x3 grid)."""
    r = env.face_res
    canvas = np.zeros((3 * r, 4 * r, 3))
    place = {2: (0, 1), 1: (1, 0), 4: (1, 1), 0: (1, 2), 5: (1, 3), 3: (2, 1)}
    for face, (row, col) in place.items():
        canvas[row * r:(row + 1) * r, col * r:(col + 1) * r] = env.faces[face]
    return canvas
