"""HTTP rendering service: scenes, environments, checkpoints, renders.

Renders are pure functions of the request, so identical requests produce
byte-identical PNG bodies and a strong ETag (hash of the request plus the
content hashes of the checkpoint, scene, and environment involved).
Registries are scanned once at startup; heavy assets load lazily under a
per-asset lock and are shared read-only afterwards.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .cubemap import load_hdr, rotate_about_up
from .model import TransportModel
from .renderer import (RenderMismatchError, check_scene_match, cubemap_cross,
                       encode_display_png, render_full)
from .scene import Camera, load_scene

LOAD_TIMEOUT_S = 60.0


class CameraModel(BaseModel):
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov_deg: float = Field(50.0, gt=0.0, lt=180.0)
    width: int = Field(64, ge=1, le=2048)
    height: int = Field(64, ge=1, le=2048)

    def to_camera(self) -> Camera:
        return Camera(position=self.position, look_at=self.look_at, up=self.up,
                      fov_deg=self.fov_deg, width=self.width, height=self.height)


class RenderRequestModel(BaseModel):
    scene: str
    checkpoint: str
    env: str
    rotation_deg: float = 0.0
    camera: CameraModel
    num_wavelets: int = Field(64, ge=1)
    selection: Literal["area_weighted", "magnitude"] = "area_weighted"
    include_direct: bool = False
    direct_spp: int = Field(64, ge=1, le=8192)
    direct_seed: int = 0


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class _LazySlot:
    def __init__(self, loader):
        self.loader = loader
        self.lock = threading.Lock()
        self.value = None

    def get(self):
        if self.value is not None:
            return self.value
        if not self.lock.acquire(timeout=LOAD_TIMEOUT_S):
            raise ApiError(503, "loading", "asset is still loading, retry shortly")
        try:
            if self.value is None:
                self.value = self.loader()
            return self.value
        finally:
            self.lock.release()


class AssetRegistry:
    """Immutable listing of assets under assets_dir; lazy content loading."""

    def __init__(self, assets_dir):
        self.root = Path(assets_dir)
        self.scene_files = {p.stem: p for p in sorted((self.root / "scenes").glob("*.json"))}
        self.env_files = {p.stem: p for p in sorted((self.root / "envs").glob("*.hdr"))}
        self.ckpt_files = {p.stem: p for p in sorted((self.root / "checkpoints").glob("*.wprt"))}
        self._scenes = {k: _LazySlot(lambda p=v: load_scene(p)) for k, v in self.scene_files.items()}
        self._ckpts = {k: _LazySlot(lambda p=v: TransportModel.load(p)) for k, v in self.ckpt_files.items()}
        self._envs: dict[tuple, _LazySlot] = {}
        self._env_lock = threading.Lock()
        self._hashes: dict[Path, str] = {}

    def file_hash(self, path: Path) -> str:
        if path not in self._hashes:
            self._hashes[path] = hashlib.sha256(path.read_bytes()).hexdigest()
        return self._hashes[path]

    def scene(self, sid: str):
        if sid not in self._scenes:
            raise ApiError(404, "unknown_scene", f"no scene {sid!r}")
        return self._scenes[sid].get()

    def checkpoint(self, cid: str) -> TransportModel:
        if cid not in self._ckpts:
            raise ApiError(404, "unknown_checkpoint", f"no checkpoint {cid!r}")
        return self._ckpts[cid].get()

    def env(self, eid: str, face_res: int, rotation_deg: float = 0.0):
        if eid not in self.env_files:
            raise ApiError(404, "unknown_env", f"no environment {eid!r}")
        key = (eid, face_res, float(rotation_deg) % 360.0)
        with self._env_lock:
            slot = self._envs.get(key)
            if slot is None:
                path = self.env_files[eid]
                slot = _LazySlot(
                    lambda: rotate_about_up(load_hdr(path, face_res=face_res), key[2]))
                self._envs[key] = slot
        return slot.get()


def create_app(assets_dir) -> FastAPI:
    app = FastAPI(title="waveprt render service", version="1.0.0")
    registry = AssetRegistry(assets_dir)
    app.state.registry = registry

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code, "message": exc.message}})

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/v1/scenes")
    def scenes():
        out = []
        for sid, path in registry.scene_files.items():
            spec = json.loads(path.read_text())
            out.append({"id": sid,
                        "objects": len(spec.get("objects", [])),
                        "camera_presets": [p.get("name", "default")
                                           for p in spec.get("camera_presets", [])]})
        return {"scenes": out}

    @app.get("/api/v1/envs")
    def envs():
        return {"envs": [{"id": eid, "file": p.name}
                         for eid, p in registry.env_files.items()]}

    @app.get("/api/v1/checkpoints")
    def checkpoints():
        out = []
        for cid, path in registry.ckpt_files.items():
            model = registry.checkpoint(cid)
            out.append({"id": cid,
                        "face_res": model.cfg.face_res,
                        "num_wavelet_slots": 6 * model.cfg.face_res ** 2,
                        "scene_hash": model.meta.get("scene_hash", ""),
                        "hash": registry.file_hash(path)})
        return {"checkpoints": out}

    @app.post("/api/v1/render")
    def render_endpoint(req: RenderRequestModel):
        scene = registry.scene(req.scene)
        model = registry.checkpoint(req.checkpoint)
        total = 6 * model.cfg.face_res ** 2
        if req.num_wavelets > total:
            raise ApiError(422, "num_wavelets_out_of_range",
                           f"num_wavelets must be <= {total} for this checkpoint")
        try:
            check_scene_match(scene, model)
        except RenderMismatchError as e:
            raise ApiError(422, "scene_checkpoint_mismatch", str(e))
        env = registry.env(req.env, model.cfg.face_res, req.rotation_deg)

        t0 = time.perf_counter()
        result = render_full(scene, req.camera.to_camera(), model, env,
                             num_wavelets=req.num_wavelets, selection=req.selection,
                             direct_spp=req.direct_spp, direct_seed=req.direct_seed,
                             include_direct=req.include_direct)
        png = encode_display_png(result["image"])
        ms = (time.perf_counter() - t0) * 1e3

        etag_src = json.dumps(req.model_dump(), sort_keys=True) + \
            registry.file_hash(registry.ckpt_files[req.checkpoint]) + \
            registry.file_hash(registry.env_files[req.env]) + scene.scene_hash
        etag = hashlib.sha256(etag_src.encode()).hexdigest()
        return Response(content=png, media_type="image/png", headers={
            "ETag": f'"{etag}"',
            "X-Render-Ms": f"{ms:.1f}",
            "X-Wavelets-Used": str(req.num_wavelets),
        })

    @app.get("/api/v1/envmap/{eid}/preview")
    def env_preview(eid: str, face_res: int = 64, rotation_deg: float = 0.0):
        env = registry.env(eid, face_res, rotation_deg)
        return Response(content=encode_display_png(cubemap_cross(env)),
                        media_type="image/png")

    return app


def main(assets_dir, host: str = "127.0.0.1", port: int = 8000):
    import uvicorn

    uvicorn.run(create_app(assets_dir), host=host, port=port, log_level="info")
