"""GGX/Trowbridge-Reitz BRDF: evaluation and importance sampling.

Model: Lambertian diffuse plus Cook-Torrance specular with the GGX normal
distribution, height-correlated Smith masking, and Schlick Fresnel with
F0 = ks.  Two guards keep the model sane across the whole parameter box:

* F90 ramps as min(1, 50*ks), so ks = 0 kills the specular lobe exactly
  (a pure Lambertian surface) instead of leaving a colorless grazing lobe;
* the diffuse lobe is scaled by (1-F(cos_i))(1-F(cos_o)), the usual
  coupling that stops diffuse+Fresnel from summing past unity at grazing.

Roughness maps to alpha = sigma^2 (Disney-style remap).
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-9


def alpha_from_sigma(sigma):
    return np.square(sigma)


def ggx_d(alpha, cos_h):
    """GGX normal distribution; equals 1/pi at alpha=1, cos_h=1."""
    a2 = np.square(alpha)
    c = np.clip(cos_h, 0.0, 1.0)
    denom = c * c * (a2 - 1.0) + 1.0
    return np.where(cos_h > 0, a2 / np.maximum(np.pi * denom * denom, _EPS), 0.0)


def _smith_lambda(alpha, cos_t):
    c = np.clip(np.abs(cos_t), 1e-7, 1.0)
    tan2 = (1.0 - c * c) / (c * c)
    return 0.5 * (np.sqrt(1.0 + np.square(alpha) * tan2) - 1.0)


def smith_g2(alpha, cos_i, cos_o):
    """Height-correlated Smith masking-shadowing."""
    return 1.0 / (1.0 + _smith_lambda(alpha, cos_i) + _smith_lambda(alpha, cos_o))


def fresnel_schlick(f0, cos_d):
    """Schlick Fresnel with F90 ramped by min(1, 50*f0); f0 (...,3)."""
    f0 = np.asarray(f0, dtype=np.float64)
    f90 = np.minimum(50.0 * f0, 1.0)
    m = np.clip(1.0 - cos_d, 0.0, 1.0)
    return f0 + (f90 - f0) * (m ** 5)[..., None]


def brdf_eval(kd, ks, sigma, n, wi, wo) -> np.ndarray:
    """BRDF value (sr^-1) for unit wi, wo; zero below the shading hemisphere.

    All arguments broadcast over leading dimensions; vectors are (..., 3).
    """
    n = np.asarray(n, dtype=np.float64)
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    kd = np.asarray(kd, dtype=np.float64)
    ks = np.asarray(ks, dtype=np.float64)
    cos_i = np.einsum("...j,...j->...", n, wi)
    cos_o = np.einsum("...j,...j->...", n, wo)
    above = (cos_i > 0) & (cos_o > 0)

    h = wi + wo
    hn = np.linalg.norm(h, axis=-1, keepdims=True)
    h = h / np.maximum(hn, _EPS)
    cos_h = np.einsum("...j,...j->...", n, h)
    cos_d = np.clip(np.einsum("...j,...j->...", wi, h), 0.0, 1.0)

    alpha = alpha_from_sigma(sigma)
    d = ggx_d(alpha, cos_h)
    g = smith_g2(alpha, cos_i, cos_o)
    f = fresnel_schlick(ks, cos_d)
    denom = np.maximum(4.0 * cos_i * cos_o, _EPS)
    spec = f * (d * g / denom)[..., None]
    spec = np.where(hn > _EPS, spec, 0.0)  # wi == -wo has no halfway vector

    f_i = fresnel_schlick(ks, np.clip(cos_i, 0.0, 1.0))
    f_o = fresnel_schlick(ks, np.clip(cos_o, 0.0, 1.0))
    diffuse = kd / np.pi * (1.0 - f_i) * (1.0 - f_o)

    out = np.where(above[..., None], diffuse + spec, 0.0)
    return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)


def make_frame(n: np.ndarray):
    """Orthonormal tangent frame (t, b) around unit normals n (..., 3)."""
    n = np.asarray(n, dtype=np.float64)
    a = np.where(np.abs(n[..., 0:1]) > 0.9, [0.0, 1.0, 0.0], [1.0, 0.0, 0.0])
    t = np.cross(a, n)
    t /= np.maximum(np.linalg.norm(t, axis=-1, keepdims=True), _EPS)
    b = np.cross(n, t)
    return t, b


def _from_local(n, t, b, local):
    return (local[..., 0:1] * t + local[..., 1:2] * b + local[..., 2:3] * n)


def sample_cosine(n, u1, u2):
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    local = np.stack([r * np.cos(phi), r * np.sin(phi),
                      np.sqrt(np.maximum(1.0 - u1, 0.0))], axis=-1)
    t, b = make_frame(n)
    return _from_local(n, t, b, local)


def _sample_ggx_h(n, alpha, u1, u2):
    # classic Walter NDF sampling: pdf_h = D(h) cos_h
    phi = 2.0 * np.pi * u2
    tan2 = np.square(alpha) * u1 / np.maximum(1.0 - u1, 1e-12)
    cos_t = 1.0 / np.sqrt(1.0 + tan2)
    sin_t = np.sqrt(np.maximum(1.0 - cos_t * cos_t, 0.0))
    local = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)
    t, b = make_frame(n)
    return _from_local(n, t, b, local)


def brdf_pdf(kd, ks, sigma, n, wi, wo):
    """Pdf of `brdf_sample` for direction wi (mixture of the two lobes).

    The specular term is the full half-vector pushforward density, kept
    nonzero below the horizon too: those samples carry zero contribution
    but their probability mass belongs to the density.
    """
    from .cubemap import luminance

    cos_i = np.einsum("...j,...j->...", n, wi)
    lum_d = luminance(np.asarray(kd, dtype=np.float64))
    lum_s = luminance(np.asarray(ks, dtype=np.float64))
    p_spec = np.where(lum_d + lum_s > 0, lum_s / np.maximum(lum_d + lum_s, _EPS), 0.0)

    pdf_d = np.maximum(cos_i, 0.0) / np.pi
    h = wi + wo
    hn = np.linalg.norm(h, axis=-1, keepdims=True)
    h = h / np.maximum(hn, _EPS)
    cos_h = np.einsum("...j,...j->...", n, h)
    wo_dot_h = np.abs(np.einsum("...j,...j->...", wo, h))
    alpha = alpha_from_sigma(sigma)
    pdf_s = ggx_d(alpha, cos_h) * np.clip(cos_h, 0.0, None) / np.maximum(4.0 * wo_dot_h, _EPS)
    pdf_s = np.where(hn[..., 0] > _EPS, pdf_s, 0.0)
    return (1.0 - p_spec) * pdf_d + p_spec * pdf_s


def brdf_sample(kd, ks, sigma, n, wo, u_lobe, u1, u2):
    """Draw wi from the diffuse/specular mixture; returns (wi, pdf)."""
    from .cubemap import luminance

    lum_d = luminance(np.asarray(kd, dtype=np.float64))
    lum_s = luminance(np.asarray(ks, dtype=np.float64))
    p_spec = np.where(lum_d + lum_s > 0, lum_s / np.maximum(lum_d + lum_s, _EPS), 0.0)
    pick_spec = u_lobe < p_spec

    wi_d = sample_cosine(n, u1, u2)
    h = _sample_ggx_h(n, alpha_from_sigma(sigma), u1, u2)
    wo_dot_h = np.einsum("...j,...j->...", wo, h)
    wi_s = 2.0 * wo_dot_h[..., None] * h - wo
    wi = np.where(pick_spec[..., None], wi_s, wi_d)
    pdf = brdf_pdf(kd, ks, sigma, n, wi, wo)
    # half vectors facing away from wo cannot reflect; discard those picks
    # (pdf 0 kills the sample) so kept samples match the queried density
    pdf = np.where(pick_spec & (wo_dot_h <= 0.0), 0.0, pdf)
    return wi, pdf
