"""Operator command line: precompute, train, render, eval, wavelet-stats, serve.

Every subcommand is deterministic given --seed; config files are overridden
by flags and the effective configuration is embedded in each output artifact
(manifest header, checkpoint metadata, render/report sidecars).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from .config import ModelConfig, TrainConfig
from .cubemap import load_hdr, rotate_about_up
from .dataset import PrecomputeConfig, generate_training_set, load_training_set
from .imgio import write_pfm, write_png
from .model import TransportModel
from .renderer import display_encode, psnr, rel_l2, render_full, render_indirect
from .scene import load_scene
from .trainer import Trainer
from .wavelet import energy_curve, forward


def _fail(message: str, code: int = 1):
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(code)


@click.group()
def main():
    """Neural-wavelet precomputed radiance transfer tools."""


def _parse_size(size: str):
    try:
        w, h = size.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise click.BadParameter(f"expected WxH, got {size!r}")


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True),
              help="Scene JSON file.")
@click.option("--envs", "envs_dir", required=True, type=click.Path(exists=True),
              help="Directory of .hdr environment probes.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Output dataset directory.")
@click.option("--spp", default=128, show_default=True, help="Samples per pixel.")
@click.option("--size", default="64x64", show_default=True, help="Image size WxH.")
@click.option("--cameras", default=24, show_default=True, help="Trajectory cameras.")
@click.option("--seed", default=0, show_default=True)
@click.option("--face-res", default=16, show_default=True,
              help="Cubemap resolution for lighting.")
@click.option("--rotations", default="0,120,240", show_default=True,
              help="Environment yaw augmentations, degrees.")
@click.option("--threads", default=1, show_default=True)
def precompute(scene_path, envs_dir, out_dir, spp, size, cameras, seed, face_res,
               rotations, threads):
    """Render the indirect-only training corpus for a scene."""
    w, h = _parse_size(size)
    rots = tuple(float(r) for r in rotations.split(","))
    env_paths = sorted(Path(envs_dir).glob("*.hdr"))
    if not env_paths:
        _fail(f"no .hdr probes in {envs_dir}")
    cfg = PrecomputeConfig(cameras=cameras, width=w, height=h, spp=spp, seed=seed,
                           face_res=face_res, rotations=rots, threads=threads)
    manifest = generate_training_set(scene_path, env_paths, out_dir, cfg)
    click.echo(f"wrote {manifest}")


def _train_config(config_path, steps, seed, paper_scale, overrides) -> TrainConfig:
    base = cfgmod.paper_train() if paper_scale else TrainConfig()
    data = base.to_json()
    if config_path:
        data.update(json.loads(Path(config_path).read_text()))
    if steps is not None:
        data["steps"] = steps
    if seed is not None:
        data["seed"] = seed
    data.update(overrides)
    return TrainConfig.from_json(data)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Dataset directory from `prt precompute`.")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="TrainConfig JSON; flags override file values.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Checkpoint output (.wprt).")
@click.option("--steps", type=int, default=None, help="Override training steps.")
@click.option("--seed", type=int, default=None, help="Override training seed.")
@click.option("--paper-scale", is_flag=True,
              help="Use the full-scale constants instead of desk scale.")
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="JSONL training log (default: OUT.log.jsonl).")
def train(data_dir, config_path, out_path, steps, seed, paper_scale, log_path):
    """Optimize the transport model on a precomputed dataset."""
    data = load_training_set(Path(data_dir) / "manifest.jsonl")
    cfg = _train_config(config_path, steps, seed, paper_scale,
                        {"model": {**(cfgmod.paper_model() if paper_scale
                                      else ModelConfig()).to_json(),
                                   "face_res": data.face_res}})
    model = TransportModel(cfg.model, seed=cfg.seed)
    trainer = Trainer(model, data, cfg)
    model.meta["scene_path"] = data.header.get("scene", "")
    log_path = log_path or (str(out_path) + ".log.jsonl")
    trainer.train(log_path=log_path)
    model.save(out_path)
    click.echo(f"wrote {out_path}")


def _resolve_env(env: str, assets_dir):
    p = Path(env)
    if p.exists():
        return p
    if assets_dir:
        cand = Path(assets_dir) / "envs" / f"{env}.hdr"
        if cand.exists():
            return cand
    _fail(f"environment {env!r} not found")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--env", required=True, help=".hdr path or env id under --assets-dir.")
@click.option("--scene", "scene_path", type=click.Path(exists=True), default=None,
              help="Scene JSON; defaults to the path recorded in the checkpoint.")
@click.option("--camera", "camera_preset", default="default", show_default=True,
              help="Camera preset name from the scene file.")
@click.option("--wavelets", default=64, show_default=True)
@click.option("--mode", type=click.Choice(["area_weighted", "magnitude"]),
              default="area_weighted", show_default=True)
@click.option("--full", "include_direct", is_flag=True,
              help="Add path-traced direct lighting.")
@click.option("--direct-spp", default=64, show_default=True)
@click.option("--rotation", default=0.0, show_default=True,
              help="Environment yaw, degrees.")
@click.option("--seed", default=0, show_default=True, help="Direct-lighting seed.")
@click.option("--threads", default=1, show_default=True)
@click.option("--assets-dir", type=click.Path(), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output image base path (writes .pfm and .png).")
def render(ckpt_path, env, scene_path, camera_preset, wavelets, mode, include_direct,
           direct_spp, rotation, seed, threads, assets_dir, out_path):
    """Relight a scene with a trained checkpoint."""
    model = TransportModel.load(ckpt_path)
    scene_path = scene_path or model.meta.get("scene_path")
    if not scene_path or not Path(scene_path).exists():
        _fail("scene file not found; pass --scene")
    scene = load_scene(scene_path)
    if camera_preset not in scene.camera_presets:
        _fail(f"no camera preset {camera_preset!r}; have "
              f"{sorted(scene.camera_presets)}")
    env_cm = rotate_about_up(load_hdr(_resolve_env(env, assets_dir),
                                      face_res=model.cfg.face_res), rotation)
    result = render_full(scene, scene.camera_presets[camera_preset], model, env_cm,
                         num_wavelets=wavelets, selection=mode,
                         direct_spp=direct_spp, direct_seed=seed, threads=threads,
                         include_direct=include_direct)
    base = Path(out_path)
    base = base.with_suffix("") if base.suffix.lower() in (".pfm", ".png") else base
    img = np.maximum(result["image"], 0.0)
    write_pfm(base.with_suffix(".pfm"), img)
    write_png(base.with_suffix(".png"), display_encode(img))
    meta = {"checkpoint": str(ckpt_path), "env": str(env), "rotation_deg": rotation,
            "camera": camera_preset, "wavelets": wavelets, "mode": mode,
            "full": include_direct, "direct_spp": direct_spp, "seed": seed,
            "render_ms": result["render_ms"]}
    base.with_suffix(".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    click.echo(f"wrote {base.with_suffix('.pfm')} and {base.with_suffix('.png')}")


@main.command("eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Held-out dataset directory.")
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--wavelets", default=64, show_default=True)
@click.option("--mode", type=click.Choice(["area_weighted", "magnitude"]),
              default="area_weighted", show_default=True)
@click.option("--full/--no-full", "with_full", default=True, show_default=True,
              help="Also report direct+indirect metrics.")
@click.option("--direct-spp", default=64, show_default=True)
@click.option("--threads", default=1, show_default=True)
def eval_cmd(ckpt_path, data_dir, report_path, wavelets, mode, with_full,
             direct_spp, threads):
    """Per-image and mean PSNR / relative-L2 against held-out renders."""
    from .pathtracer import PathTracerConfig, render as oracle_render

    model = TransportModel.load(ckpt_path)
    data = load_training_set(Path(data_dir) / "manifest.jsonl")
    if data.face_res != model.cfg.face_res:
        _fail(f"dataset face_res {data.face_res} != checkpoint {model.cfg.face_res}")
    scene = load_scene(data.header["scene"])
    rows = []
    for i, view in enumerate(data.views):
        env = data.envs[view.condition]
        pred = np.maximum(render_indirect(scene, view.camera, model, env,
                                          num_wavelets=wavelets, selection=mode), 0.0)
        gt = view.image
        row = {"index": i, "env_id": view.env_id, "rotation_deg": view.rotation_deg,
               "psnr_indirect": psnr(pred, gt), "rel_l2_indirect": rel_l2(pred, gt)}
        if with_full:
            cfg = PathTracerConfig(spp=direct_spp, mode="direct_only",
                                   seed=1000 + i, threads=threads)
            direct = oracle_render(scene, view.camera, env, cfg).image
            row["psnr_full"] = psnr(pred + direct, gt + direct)
            row["rel_l2_full"] = rel_l2(pred + direct, gt + direct)
        rows.append(row)
    report = {
        "checkpoint": str(ckpt_path), "data": str(data_dir),
        "wavelets": wavelets, "mode": mode, "direct_spp": direct_spp,
        "images": rows,
        "mean": {k: float(np.mean([r[k] for r in rows]))
                 for k in rows[0] if k not in ("index", "env_id", "rotation_deg")},
    }
    Path(report_path).write_text(json.dumps(report, indent=1, sort_keys=True))
    click.echo(f"wrote {report_path}")


@main.command("wavelet-stats")
@click.option("--env", required=True, type=click.Path(exists=True),
              help=".hdr environment probe.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="CSV output: k, retained energy fractions.")
@click.option("--face-res", default=64, show_default=True)
def wavelet_stats(env, out_path, face_res):
    """Energy-vs-k curves for magnitude and area-weighted selection."""
    coeffs = forward(load_hdr(env, face_res=face_res))
    mag = energy_curve(coeffs, mode="magnitude")
    area = energy_curve(coeffs, mode="area_weighted")
    with open(out_path, "w") as f:
        f.write("k,frac_energy_magnitude,frac_energy_area_weighted\n")
        for k in range(len(mag)):
            f.write(f"{k + 1},{mag[k]:.9f},{area[k]:.9f}\n")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--assets-dir", required=True, type=click.Path(exists=True),
              help="Directory holding scenes/, envs/, checkpoints/.")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(assets_dir, port, host):
    """Start the HTTP rendering service."""
    from .service import main as serve_main

    serve_main(assets_dir, host=host, port=port)


if __name__ == "__main__":
    main()
