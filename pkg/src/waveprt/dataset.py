"""Training-set generation and loading.

A dataset directory holds a JSON-lines manifest (header line, then one row
per image), indirect-only HDR renders as PFM, per-view G-buffer dumps, and
a copy of the environment probes.  Lighting conditions are the cross
product of probes and yaw rotations (0/120/240 degrees by default); every
camera on the spherical trajectory is paired with two sampled conditions.
"""

from __future__ import annotations

import json
import shutil
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cubemap import Cubemap, load_hdr, rotate_about_up
from .imgio import read_pfm, write_pfm
from .pathtracer import PathTracerConfig, render
from .scene import Camera, GBuffer, Scene, load_scene, trace_primary

GBUF_MAGIC = b"GBUF"
GBUF_VERSION = 1
_GBUF_FLOATS = 17  # hit, xn3, n3, wr3, kd3, ks3, sigma


def write_gbuffer(path, gb: GBuffer) -> None:
    h, w = gb.shape
    payload = np.empty((h, w, _GBUF_FLOATS), dtype="<f4")
    payload[..., 0] = gb.hit
    payload[..., 1:4] = gb.xn
    payload[..., 4:7] = gb.n
    payload[..., 7:10] = gb.wr
    payload[..., 10:13] = gb.kd
    payload[..., 13:16] = gb.ks
    payload[..., 16] = gb.sigma
    with open(path, "wb") as f:
        f.write(GBUF_MAGIC)
        f.write(struct.pack("<III", GBUF_VERSION, w, h))
        f.write(payload.tobytes())


def read_gbuffer(path) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != GBUF_MAGIC:
        raise ValueError(f"{path}: not a G-buffer dump")
    version, w, h = struct.unpack("<III", data[4:16])
    if version != GBUF_VERSION:
        raise ValueError(f"{path}: G-buffer version {version} != {GBUF_VERSION}")
    want = h * w * _GBUF_FLOATS * 4
    if len(data) - 16 != want:
        raise ValueError(f"{path}: truncated G-buffer payload")
    arr = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w, _GBUF_FLOATS)
    arr = arr.astype(np.float64)
    return {
        "hit": arr[..., 0] > 0.5, "xn": arr[..., 1:4], "n": arr[..., 4:7],
        "wr": arr[..., 7:10], "kd": arr[..., 10:13], "ks": arr[..., 13:16],
        "sigma": arr[..., 16],
    }


@dataclass(frozen=True)
class PrecomputeConfig:
    cameras: int = 24
    width: int = 64
    height: int = 64
    spp: int = 128
    seed: int = 0
    face_res: int = 16
    rotations: tuple = (0.0, 120.0, 240.0)
    envs_per_camera: int = 2
    max_bounces: int = 8
    threads: int = 1
    fov_deg: float = 50.0
    elevation: tuple = (45.0, 70.0)
    radius_factor: float = 0.42
    revolutions: float = 2.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["rotations"] = list(self.rotations)
        d["elevation"] = list(self.elevation)
        return d


def trajectory_cameras(scene: Scene, cfg: PrecomputeConfig, count: int | None = None,
                       phase: float = 0.0) -> list[Camera]:
    """Deterministic spherical trajectory around the scene center."""
    n = cfg.cameras if count is None else count
    center = 0.5 * (scene.bounds_min + scene.bounds_max)
    radius = cfg.radius_factor * scene.diagonal
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    cams = []
    for i in range(n):
        az = np.deg2rad(360.0 * cfg.revolutions * i / n + phase)
        frac = (i * golden + phase / 360.0) % 1.0
        el = np.deg2rad(cfg.elevation[0] + (cfg.elevation[1] - cfg.elevation[0]) * frac)
        pos = center + radius * np.array([np.cos(el) * np.sin(az), np.sin(el),
                                          np.cos(el) * np.cos(az)])
        cams.append(Camera(position=pos, look_at=center, fov_deg=cfg.fov_deg,
                           width=cfg.width, height=cfg.height))
    return cams


def load_condition_env(env_path, rotation_deg: float, face_res: int) -> Cubemap:
    return rotate_about_up(load_hdr(env_path, face_res=face_res), rotation_deg)


def generate_training_set(scene_path, env_paths, out_dir, cfg: PrecomputeConfig) -> Path:
    """Render the (camera x lighting-condition) training corpus; returns the
    manifest path.  Re-running with the same seed is byte-identical."""
    scene = load_scene(scene_path)
    out = Path(out_dir)
    (out / "envs").mkdir(parents=True, exist_ok=True)

    env_paths = sorted(Path(p) for p in env_paths)
    if not env_paths:
        raise ValueError("no environment maps given")
    env_ids = []
    for p in env_paths:
        shutil.copyfile(p, out / "envs" / p.name)
        env_ids.append(p.stem)
    conditions = [(eid, rot) for eid in env_ids for rot in cfg.rotations]

    cams = trajectory_cameras(scene, cfg)
    rng = np.random.default_rng(cfg.seed)
    per_cam = min(cfg.envs_per_camera, len(conditions))
    assignments = [rng.choice(len(conditions), size=per_cam, replace=False)
                   for _ in cams]

    header = {
        "version": 1,
        "scene": str(Path(scene_path).resolve()),
        "scene_hash": scene.scene_hash,
        "face_res": cfg.face_res,
        "width": cfg.width, "height": cfg.height, "spp": cfg.spp,
        "seed": cfg.seed,
        "env_files": {eid: f"envs/{p.name}" for eid, p in zip(env_ids, env_paths)},
        "conditions": [[eid, rot] for eid, rot in conditions],
        "config": cfg.to_json(),
    }
    rows = []
    env_cache: dict[tuple, Cubemap] = {}
    idx = 0
    for cam_i, cam in enumerate(cams):
        gb = trace_primary(scene, cam)
        gb_name = f"gbf_{cam_i:04d}.bin"
        write_gbuffer(out / gb_name, gb)
        for cond_i in assignments[cam_i]:
            eid, rot = conditions[int(cond_i)]
            key = (eid, rot)
            if key not in env_cache:
                env_cache[key] = load_condition_env(out / "envs" / f"{eid}.hdr", rot,
                                                    cfg.face_res)
            pt_cfg = PathTracerConfig(spp=cfg.spp, max_bounces=cfg.max_bounces,
                                      mode="indirect_only",
                                      seed=cfg.seed + 7919 * idx, threads=cfg.threads)
            img = render(scene, cam, env_cache[key], pt_cfg).image
            img_name = f"img_{idx:04d}.pfm"
            write_pfm(out / img_name, img)
            rows.append({"image": img_name, "gbuffer": gb_name, "env_id": eid,
                         "rotation_deg": rot, "camera": cam.to_json()})
            idx += 1

    manifest = out / "manifest.jsonl"
    with open(manifest, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest


@dataclass
class TrainingView:
    image: np.ndarray       # (H, W, 3) indirect GT
    gbuffer: dict
    env_id: str
    rotation_deg: float
    camera: Camera
    condition: int          # index into TrainingData.conditions


@dataclass
class TrainingData:
    header: dict
    views: list
    conditions: list        # [(env_id, rotation_deg)]
    envs: list              # Cubemap per condition, at header face_res
    root: Path = field(default_factory=Path)

    @property
    def face_res(self) -> int:
        return int(self.header["face_res"])

    def views_for_condition(self, cond: int) -> list[int]:
        return [i for i, v in enumerate(self.views) if v.condition == cond]


def load_training_set(manifest_path) -> TrainingData:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    lines = manifest_path.read_text().splitlines()
    header = json.loads(lines[0])
    conditions = [(c[0], float(c[1])) for c in header["conditions"]]
    cond_index = {c: i for i, c in enumerate(conditions)}
    face_res = int(header["face_res"])
    envs = [load_condition_env(root / header["env_files"][eid], rot, face_res)
            for eid, rot in conditions]
    views = []
    gb_cache: dict[str, dict] = {}
    for line in lines[1:]:
        row = json.loads(line)
        if row["gbuffer"] not in gb_cache:
            gb_cache[row["gbuffer"]] = read_gbuffer(root / row["gbuffer"])
        views.append(TrainingView(
            image=read_pfm(root / row["image"]),
            gbuffer=gb_cache[row["gbuffer"]],
            env_id=row["env_id"], rotation_deg=float(row["rotation_deg"]),
            camera=Camera.from_json(row["camera"]),
            condition=cond_index[(row["env_id"], float(row["rotation_deg"]))],
        ))
    return TrainingData(header=header, views=views, conditions=conditions,
                        envs=envs, root=root)
