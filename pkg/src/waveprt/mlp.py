"""Transport decoder: input encodings and a small ReLU MLP with exact backward.

Encoding layout (fixed order): [h (P), SH(w_r) (25 or 16), n (3), kd (3),
ks (3), warped sigma (1)].  Only the reflection direction gets a basis
encoding; everything else passes through raw.  The roughness warp
log(25*sigma + 1)/log(26) spends resolution on the low-roughness range.
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .sh import eval_sh

_WARP_DEN = np.log(26.0)


def warp_sigma(sigma):
    return np.log(25.0 * np.asarray(sigma, dtype=np.float64) + 1.0) / _WARP_DEN


def encoding_dim(cfg: ModelConfig) -> int:
    return cfg.feature_dim + cfg.sh_components + 10


def encode_batch(h: np.ndarray, wr: np.ndarray, n: np.ndarray, kd: np.ndarray,
                 ks: np.ndarray, sigma: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Concatenate decoder inputs; renormalizes non-unit reflection vectors."""
    wr = np.asarray(wr, dtype=np.float64)
    norm = np.linalg.norm(wr, axis=-1, keepdims=True)
    wr = wr / np.maximum(norm, 1e-30)
    sh = eval_sh(wr)[..., :cfg.sh_components]
    return np.concatenate([
        np.asarray(h, dtype=np.float64),
        sh,
        np.asarray(n, dtype=np.float64),
        np.asarray(kd, dtype=np.float64),
        np.asarray(ks, dtype=np.float64),
        warp_sigma(sigma)[..., None],
    ], axis=-1)


class TransportMLP:
    """input -> 128 -> ReLU -> 128 -> ReLU -> 3, no output activation."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d_in, hid, d_out = encoding_dim(cfg), cfg.hidden, cfg.mlp_outputs

        def he(fan_in, shape):
            lim = np.sqrt(6.0 / fan_in)
            return rng.uniform(-lim, lim, size=shape)

        self.w1 = he(d_in, (d_in, hid))
        self.b1 = np.zeros(hid)
        self.w2 = he(hid, (hid, hid))
        self.b2 = np.zeros(hid)
        # zero output layer: transport starts at black, loss starts at ||TM(I0)||^2
        self.w3 = np.zeros((hid, d_out))
        self.b3 = np.zeros(d_out)

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def zero_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params()]

    def forward(self, enc: np.ndarray, cache: dict | None = None) -> np.ndarray:
        z1 = enc @ self.w1 + self.b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.w2 + self.b2
        a2 = np.maximum(z2, 0.0)
        out = a2 @ self.w3 + self.b3
        if cache is not None:
            cache.update(enc=enc, z1=z1, a1=a1, z2=z2, a2=a2)
        return out

    def backward(self, cache: dict, upstream: np.ndarray,
                 grads: list[np.ndarray] | None = None):
        """Accumulate parameter grads; returns d(loss)/d(enc)."""
        if grads is None:
            grads = self.zero_grads()
        g_w1, g_b1, g_w2, g_b2, g_w3, g_b3 = grads
        a2, a1, enc = cache["a2"], cache["a1"], cache["enc"]
        g_w3 += a2.T @ upstream
        g_b3 += upstream.sum(axis=0)
        da2 = upstream @ self.w3.T
        dz2 = da2 * (cache["z2"] > 0)
        g_w2 += a1.T @ dz2
        g_b2 += dz2.sum(axis=0)
        da1 = dz2 @ self.w2.T
        dz1 = da1 * (cache["z1"] > 0)
        g_w1 += enc.T @ dz1
        g_b1 += dz1.sum(axis=0)
        d_enc = dz1 @ self.w1.T
        return d_enc, grads

    def d_h(self, d_enc: np.ndarray) -> np.ndarray:
        """Slice of the encoding gradient that flows back into the feature field."""
        return d_enc[..., :self.cfg.feature_dim]
