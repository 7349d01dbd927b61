"""Model and pipeline scale presets.

Desk scale keeps every moving part identical to the full-scale setup but
small enough to train on a laptop CPU in minutes; paper scale restores the
full-size constants (6x64x64 cubemaps, 32 hash levels, 2^19 tables, 64-term
factorization, 300 wavelets per step).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    face_res: int = 16
    levels: int = 8
    features_per_level: int = 2
    base_resolution: int = 16
    per_level_scale: float = 1.3
    table_size: int = 2 ** 14
    m_terms: int = 16          # CP terms M
    feature_dim: int = 16      # decoder feature length P
    hidden: int = 128
    sh_components: int = 25    # 16 switches to degrees 0..3
    mlp_outputs: int = 3       # RGB transport coefficient

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def desk_model() -> ModelConfig:
    return ModelConfig()


def paper_model() -> ModelConfig:
    return ModelConfig(face_res=64, levels=32, features_per_level=2,
                       base_resolution=16, per_level_scale=1.3,
                       table_size=2 ** 19, m_terms=64, feature_dim=64)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 4000
    seed: int = 0
    wavelets_per_step: int = 64       # 300 at paper scale
    pixels_per_strategy: int = 128    # 512 at paper scale
    mu: float = 10.0
    eps: float = 1.0
    lr_grids: float = 1e-2
    lr_mlp: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-10
    checkpoint_every: int = 0         # 0 = only final
    held_out_every: int = 0           # 0 = never
    tail_compensation: bool = False   # unbiased but high-variance; off by default
    model: ModelConfig = field(default_factory=desk_model)

    @property
    def pixels_per_step(self) -> int:
        return 4 * self.pixels_per_strategy

    def to_json(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "model" in d:
            d["model"] = ModelConfig.from_json(d["model"])
        return cls(**d)


def paper_train() -> TrainConfig:
    return TrainConfig(wavelets_per_step=300, pixels_per_strategy=512,
                       model=paper_model())
