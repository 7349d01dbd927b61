#!/usr/bin/env python3
"""Build a self-contained assets directory for `prt serve` and the viewer.

Creates the fixture scene, a few indoor probes, and a desk-scale checkpoint
(optionally trained for --steps on a quick dataset).  Deterministic.
"""

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from waveprt import fixtures  # noqa: E402
from waveprt.config import TrainConfig  # noqa: E402
from waveprt.dataset import PrecomputeConfig, generate_training_set, \
    load_training_set  # noqa: E402
from waveprt.imgio import write_hdr  # noqa: E402
from waveprt.model import TransportModel  # noqa: E402
from waveprt.scene import load_scene  # noqa: E402
from waveprt.trainer import Trainer  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", help="assets directory to create")
    ap.add_argument("--steps", type=int, default=200,
                    help="training steps for the bundled checkpoint (0 = untrained)")
    ap.add_argument("--probes", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    (out / "envs").mkdir(exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        scene_json = fixtures.write_fixture_scene(Path(tmp) / "scene", sphere_subdiv=2)
        for f in (Path(tmp) / "scene").iterdir():
            name = "fixture.json" if f.name == "scene.json" else f.name
            shutil.copyfile(f, out / "scenes" / name)

        env_paths = []
        for i in range(args.probes):
            p = out / "envs" / f"probe_{i:02d}.hdr"
            write_hdr(p, fixtures.make_indoor_probe(100 + i))
            env_paths.append(p)

        tcfg = TrainConfig(steps=max(args.steps, 1), seed=args.seed)
        model = TransportModel(tcfg.model, seed=tcfg.seed)
        if args.steps > 0:
            print("rendering a quick training set...", flush=True)
            pcfg = PrecomputeConfig(cameras=6, width=48, height=48, spp=48,
                                    seed=args.seed, face_res=16, threads=2)
            manifest = generate_training_set(scene_json, env_paths,
                                             Path(tmp) / "data", pcfg)
            data = load_training_set(manifest)
            trainer = Trainer(model, data, tcfg)
            print(f"training checkpoint for {args.steps} steps...", flush=True)
            trainer.train(steps=args.steps)
        scene = load_scene(out / "scenes" / "fixture.json")
        model.meta["scene_hash"] = scene.scene_hash
        model.meta["scene_path"] = str((out / "scenes" / "fixture.json").resolve())
        model.save(out / "checkpoints" / "desk.wprt")
    print(f"assets ready under {out}")


if __name__ == "__main__":
    main()
