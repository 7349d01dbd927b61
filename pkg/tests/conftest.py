import shutil
from pathlib import Path

import numpy as np
import pytest

from waveprt import fixtures
from waveprt.config import ModelConfig, TrainConfig
from waveprt.dataset import PrecomputeConfig, generate_training_set, load_training_set
from waveprt.imgio import write_hdr
from waveprt.model import TransportModel
from waveprt.trainer import Trainer


def micro_model_config() -> ModelConfig:
    return ModelConfig(face_res=8, levels=4, features_per_level=2, base_resolution=8,
                       per_level_scale=1.4, table_size=2 ** 10, m_terms=8,
                       feature_dim=8, hidden=32)


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixture_scene")
    fixtures.write_fixture_scene(d, sphere_subdiv=1)
    return d


@pytest.fixture(scope="session")
def probes_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("probes")
    for i in range(2):
        write_hdr(d / f"probe_{i:02d}.hdr",
                  fixtures.make_indoor_probe(300 + i, width=128, height=64))
    return d


@pytest.fixture(scope="session")
def micro_dataset_dir(tmp_path_factory, scene_dir, probes_dir):
    out = tmp_path_factory.mktemp("micro_data")
    cfg = PrecomputeConfig(cameras=3, width=16, height=16, spp=8, seed=5,
                           face_res=8, rotations=(0.0, 120.0))
    generate_training_set(scene_dir / "scene.json",
                          sorted(probes_dir.glob("*.hdr")), out, cfg)
    return out


@pytest.fixture(scope="session")
def micro_dataset(micro_dataset_dir):
    return load_training_set(micro_dataset_dir / "manifest.jsonl")


@pytest.fixture(scope="session")
def micro_trainer(micro_dataset):
    cfg = TrainConfig(steps=40, seed=3, wavelets_per_step=16, pixels_per_strategy=16,
                      model=micro_model_config())
    model = TransportModel(cfg.model, seed=cfg.seed)
    trainer = Trainer(model, micro_dataset, cfg)
    losses = trainer.train(steps=cfg.steps)
    return model, trainer, losses


@pytest.fixture(scope="session")
def service_assets(tmp_path_factory, scene_dir, probes_dir, micro_trainer):
    assets = tmp_path_factory.mktemp("assets")
    (assets / "scenes").mkdir()
    (assets / "envs").mkdir()
    (assets / "checkpoints").mkdir()
    for f in Path(scene_dir).iterdir():
        shutil.copyfile(f, assets / "scenes" / f.name)
    (assets / "scenes" / "scene.json").rename(assets / "scenes" / "fixture.json")
    for f in sorted(Path(probes_dir).glob("*.hdr")):
        shutil.copyfile(f, assets / "envs" / f.name)
    model, _, _ = micro_trainer
    model.save(assets / "checkpoints" / "micro.wprt")
    return assets
