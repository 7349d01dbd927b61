"""The full learned transport model: feature field + decoder MLP.

The checkpoint records, besides parameters, the face/uv convention tag, the
scene hash, and the lighting-coefficient convention (raw radiance, no
solid-angle premultiply); renderers refuse to mix conventions.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .config import ModelConfig
from .features import FeatureField
from .mlp import TransportMLP, encode_batch

FACE_CONVENTION = "pxnx-pyny-pznz/right-down-v1"


class TransportModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0, meta: dict | None = None):
        self.cfg = cfg
        self.field = FeatureField(cfg, seed=seed)
        self.mlp = TransportMLP(cfg, seed=seed + 1)
        self.meta = dict(meta or {})
        self.meta.setdefault("face_convention", FACE_CONVENTION)
        self.meta.setdefault("raw_radiance_wavelets", True)

    # ------------------------------------------------------------ forward

    def transport_batch(self, xn, kflat, wr, n, kd, ks, sigma,
                        cache: dict | None = None) -> np.ndarray:
        """Transport coefficients T_k for a batch of (pixel, wavelet) pairs."""
        field_cache = {} if cache is not None else None
        h = self.field.eval_batch(xn, kflat, cache=field_cache)
        enc = encode_batch(h, wr, n, kd, ks, sigma, self.cfg)
        mlp_cache = {} if cache is not None else None
        out = self.mlp.forward(enc, cache=mlp_cache)
        if cache is not None:
            cache.update(field=field_cache, mlp=mlp_cache)
        return out

    def backward(self, cache: dict, upstream: np.ndarray,
                 field_grads: list, mlp_grads: list) -> None:
        d_enc, _ = self.mlp.backward(cache["mlp"], upstream, grads=mlp_grads)
        self.field.backward(cache["field"], self.mlp.d_h(d_enc), field_grads)

    def transport_outer(self, xn, kflat, wr, n, kd, ks, sigma,
                        cache: dict | None = None) -> np.ndarray:
        """T_k for all (pixel, wavelet) pairs, position-major (B*nk, 3).

        Per-pixel inputs are encoded once and repeated; the feature field is
        queried once per pixel.  This is the hot path for training and
        rendering.
        """
        from .mlp import encode_batch as _enc

        nk = len(kflat)
        field_cache = {} if cache is not None else None
        h = self.field.eval_outer(xn, kflat, cache=field_cache)
        enc_pix = _enc(np.zeros((len(xn), 0)), wr, n, kd, ks, sigma, self.cfg)
        enc = np.concatenate(
            [h, np.repeat(enc_pix, nk, axis=0).astype(h.dtype, copy=False)], axis=1)
        mlp_cache = {} if cache is not None else None
        out = self.mlp.forward(enc, cache=mlp_cache)
        if cache is not None:
            cache.update(field=field_cache, mlp=mlp_cache)
        return out

    def backward_outer(self, cache: dict, upstream: np.ndarray,
                       field_grads: list, mlp_grads: list) -> None:
        d_enc, _ = self.mlp.backward(cache["mlp"], upstream, grads=mlp_grads)
        self.field.backward_outer(cache["field"], self.mlp.d_h(d_enc), field_grads)

    def to_dtype(self, dtype) -> "TransportModel":
        """Copy with parameters cast to dtype (float32 inference path)."""
        import copy as _copy

        clone = _copy.copy(self)
        clone.field = _copy.copy(self.field)
        clone.field.grid = _copy.copy(self.field.grid)
        clone.field.grid.tables = self.field.grid.tables.astype(dtype)
        clone.field.adapter = self.field.adapter.astype(dtype)
        clone.field.wavelet_grid = self.field.wavelet_grid.astype(dtype)
        clone.field.feature_matrix = self.field.feature_matrix.astype(dtype)
        clone.mlp = _copy.copy(self.mlp)
        clone.mlp.w1 = self.mlp.w1.astype(dtype)
        clone.mlp.b1 = self.mlp.b1.astype(dtype)
        clone.mlp.w2 = self.mlp.w2.astype(dtype)
        clone.mlp.b2 = self.mlp.b2.astype(dtype)
        clone.mlp.w3 = self.mlp.w3.astype(dtype)
        clone.mlp.b3 = self.mlp.b3.astype(dtype)
        return clone

    # ------------------------------------------------------------ serialization

    _TENSOR_ORDER = ("hash_tables", "adapter", "wavelet_grid", "feature_matrix",
                     "w1", "b1", "w2", "b2", "w3", "b3")

    def _tensors(self) -> dict[str, np.ndarray]:
        f, m = self.field, self.mlp
        vals = dict(hash_tables=f.grid.tables, adapter=f.adapter,
                    wavelet_grid=f.wavelet_grid, feature_matrix=f.feature_matrix,
                    w1=m.w1, b1=m.b1, w2=m.w2, b2=m.b2, w3=m.w3, b3=m.b3)
        return {k: vals[k] for k in self._TENSOR_ORDER}

    def save(self, path) -> None:
        config = {"model": self.cfg.to_json(), "meta": self.meta}
        write_checkpoint(path, config, self._tensors())

    @classmethod
    def load(cls, path) -> "TransportModel":
        config, tensors = read_checkpoint(path)
        cfg = ModelConfig.from_json(config["model"])
        model = cls(cfg, seed=0, meta=config.get("meta", {}))
        f, m = model.field, model.mlp
        targets = dict(hash_tables=f.grid.tables, adapter=f.adapter,
                       wavelet_grid=f.wavelet_grid, feature_matrix=f.feature_matrix,
                       w1=m.w1, b1=m.b1, w2=m.w2, b2=m.b2, w3=m.w3, b3=m.b3)
        for name, dst in targets.items():
            if name not in tensors:
                raise CheckpointError(f"{path}: missing tensor {name!r}")
            src = tensors[name]
            if src.shape != dst.shape:
                raise CheckpointError(
                    f"{path}: tensor {name} shape {src.shape} != {dst.shape}")
            dst[...] = src
        return model
