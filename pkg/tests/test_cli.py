import json

import numpy as np
import pytest
from click.testing import CliRunner

from waveprt.cli import main
from waveprt.fixtures import make_indoor_probe, write_furnace_scene
from waveprt.imgio import write_hdr


@pytest.fixture()
def runner():
    return CliRunner()


SUBCOMMANDS = ["precompute", "train", "render", "eval", "wavelet-stats", "serve"]


def test_help_roundtrips(runner):
    r = runner.invoke(main, ["--help"])
    assert r.exit_code == 0
    for sub in SUBCOMMANDS:
        assert sub in r.output
    for sub in SUBCOMMANDS:
        r = runner.invoke(main, [sub, "--help"])
        assert r.exit_code == 0, sub
        assert "--" in r.output


def test_unknown_flag_exits_2(runner):
    r = runner.invoke(main, ["render", "--no-such-flag"])
    assert r.exit_code == 2


def test_missing_file_exits_2(runner):
    r = runner.invoke(main, ["train", "--data", "/does/not/exist", "--out", "x.wprt"])
    assert r.exit_code == 2


def test_wavelet_stats_csv(runner, tmp_path):
    probe = tmp_path / "p.hdr"
    write_hdr(probe, make_indoor_probe(7, width=128, height=64))
    out = tmp_path / "curve.csv"
    r = runner.invoke(main, ["wavelet-stats", "--env", str(probe), "--out", str(out),
                             "--face-res", "16"])
    assert r.exit_code == 0, r.output
    lines = out.read_text().splitlines()
    assert lines[0] == "k,frac_energy_magnitude,frac_energy_area_weighted"
    assert len(lines) == 1 + 6 * 16 * 16
    last = lines[-1].split(",")
    assert float(last[1]) == pytest.approx(1.0, abs=1e-6)


def test_render_writes_pfm_png_pair(runner, tmp_path, service_assets):
    out = tmp_path / "shot"
    r = runner.invoke(main, [
        "render", "--ckpt", str(service_assets / "checkpoints" / "micro.wprt"),
        "--env", str(service_assets / "envs" / "probe_00.hdr"),
        "--scene", str(service_assets / "scenes" / "fixture.json"),
        "--camera", "default", "--wavelets", "8", "--out", str(out)])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "shot.pfm").exists()
    assert (tmp_path / "shot.png").exists()
    meta = json.loads((tmp_path / "shot.meta.json").read_text())
    assert meta["wavelets"] == 8


def test_render_rejects_unknown_preset(runner, tmp_path, service_assets):
    r = runner.invoke(main, [
        "render", "--ckpt", str(service_assets / "checkpoints" / "micro.wprt"),
        "--env", str(service_assets / "envs" / "probe_00.hdr"),
        "--scene", str(service_assets / "scenes" / "fixture.json"),
        "--camera", "nope", "--out", str(tmp_path / "x")])
    assert r.exit_code == 1
    assert "error" in r.output or r.exception


def test_train_flag_overrides_config_file(runner, tmp_path, micro_dataset_dir):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({
        "steps": 4, "wavelets_per_step": 8, "pixels_per_strategy": 8,
        "model": {"face_res": 8, "levels": 2, "features_per_level": 2,
                  "base_resolution": 4, "per_level_scale": 1.5, "table_size": 256,
                  "m_terms": 4, "feature_dim": 4, "hidden": 8}}))
    out = tmp_path / "m.wprt"
    r = runner.invoke(main, ["train", "--data", str(micro_dataset_dir),
                             "--config", str(cfg_file), "--out", str(out),
                             "--steps", "2", "--seed", "1"])
    assert r.exit_code == 0, r.output
    from waveprt.model import TransportModel
    model = TransportModel.load(out)
    embedded = model.meta["train_config"]
    assert embedded["steps"] == 2            # flag wins over config file
    assert embedded["wavelets_per_step"] == 8  # file value kept
    assert (tmp_path / "m.wprt.log.jsonl").exists()


def test_eval_identical_pairs_report_capped_psnr(runner, tmp_path):
    # black probe -> black indirect GT; zero checkpoint renders black too
    scene_dir = tmp_path / "scene"
    write_furnace_scene(scene_dir)
    env_dir = tmp_path / "envs"
    env_dir.mkdir()
    write_hdr(env_dir / "black.hdr", np.zeros((16, 32, 3)))
    data_dir = tmp_path / "data"
    r = runner.invoke(main, ["precompute", "--scene", str(scene_dir / "scene.json"),
                             "--envs", str(env_dir), "--out", str(data_dir),
                             "--spp", "2", "--size", "8x8", "--cameras", "1",
                             "--face-res", "4", "--rotations", "0"])
    assert r.exit_code == 0, r.output

    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({
        "steps": 1, "wavelets_per_step": 4, "pixels_per_strategy": 4,
        "model": {"face_res": 4, "levels": 2, "features_per_level": 2,
                  "base_resolution": 4, "per_level_scale": 1.5, "table_size": 256,
                  "m_terms": 4, "feature_dim": 4, "hidden": 8}}))
    ckpt = tmp_path / "zero.wprt"
    r = runner.invoke(main, ["train", "--data", str(data_dir), "--config",
                             str(cfg_file), "--out", str(ckpt)])
    assert r.exit_code == 0, r.output

    report = tmp_path / "report.json"
    r = runner.invoke(main, ["eval", "--ckpt", str(ckpt), "--data", str(data_dir),
                             "--report", str(report), "--wavelets", "4", "--no-full"])
    assert r.exit_code == 0, r.output
    rep = json.loads(report.read_text())
    assert rep["mean"]["psnr_indirect"] == 99.0
    assert rep["images"][0]["rel_l2_indirect"] == 0.0


def test_precompute_rerun_same_manifest(runner, tmp_path, scene_dir, probes_dir):
    args = lambda out: ["precompute", "--scene", str(scene_dir / "scene.json"),
                        "--envs", str(probes_dir), "--out", out,
                        "--spp", "2", "--size", "8x8", "--cameras", "2",
                        "--face-res", "4", "--seed", "3"]
    r1 = runner.invoke(main, args(str(tmp_path / "a")))
    r2 = runner.invoke(main, args(str(tmp_path / "b")))
    assert r1.exit_code == 0 and r2.exit_code == 0
    assert ((tmp_path / "a" / "manifest.jsonl").read_text()
            == (tmp_path / "b" / "manifest.jsonl").read_text())
