"""Deterministic test fixtures: meshes, scenes, and synthetic indoor probes.

Everything here is generated from fixed seeds so that datasets, checkpoints
and renders derived from the fixtures are byte-reproducible.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .imgio import write_hdr


def icosphere(subdivisions: int = 2, radius: float = 1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron projected onto a sphere; returns (verts, tris)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(subdivisions):
        edge_mid = {}
        verts = list(v)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in edge_mid:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                edge_mid[key] = len(verts)
                verts.append(m)
            return edge_mid[key]

        new_f = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_f += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.asarray(verts)
        f = np.asarray(new_f, dtype=np.int64)
    return v * radius + np.asarray(center), f


def write_obj(path, verts: np.ndarray, tris: np.ndarray, normals: np.ndarray | None = None):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in verts]
    if normals is not None:
        lines += [f"vn {x:.9g} {y:.9g} {z:.9g}" for x, y, z in normals]
        lines += [f"f {a+1}//{a+1} {b+1}//{b+1} {c+1}//{c+1}" for a, b, c in tris]
    else:
        lines += [f"f {a+1} {b+1} {c+1}" for a, b, c in tris]
    Path(path).write_text("\n".join(lines) + "\n")


def _quad(p0, p1, p2, p3):
    """Two triangles spanning the quad p0 p1 p2 p3 (counter-clockwise)."""
    verts = np.asarray([p0, p1, p2, p3], dtype=np.float64)
    tris = np.asarray([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return verts, tris


def _merge(parts):
    verts, tris = [], []
    off = 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + off)
        off += len(v)
    return np.concatenate(verts), np.concatenate(tris)


def write_fixture_scene(out_dir, sphere_subdiv: int = 2) -> Path:
    """Glossy sphere (sigma 0.2) and diffuse ground inside an open-top box."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sv, st = icosphere(sphere_subdiv, radius=0.5, center=(0.0, 0.5, 0.0))
    sn = sv - np.array([0.0, 0.5, 0.0])
    sn /= np.linalg.norm(sn, axis=1, keepdims=True)
    write_obj(out / "sphere.obj", sv, st, sn)

    s, h = 2.4, 2.4  # box half-width and wall height, top open
    floor = _quad([-s, 0, -s], [-s, 0, s], [s, 0, s], [s, 0, -s])  # normal +Y
    write_obj(out / "floor.obj", *floor)
    walls = _merge([
        _quad([-s, 0, -s], [s, 0, -s], [s, h, -s], [-s, h, -s]),   # back (+Z normal)
        _quad([s, 0, s], [-s, 0, s], [-s, h, s], [s, h, s]),       # front (-Z normal)
        _quad([-s, 0, s], [-s, 0, -s], [-s, h, -s], [-s, h, s]),   # left (+X normal)
        _quad([s, 0, -s], [s, 0, s], [s, h, s], [s, h, -s]),       # right (-X normal)
    ])
    write_obj(out / "walls.obj", *walls)

    def orbit(az_deg, el_deg, dist=2.6, size=64):
        az, el = np.deg2rad(az_deg), np.deg2rad(el_deg)
        pos = np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)]) * dist
        pos[1] += 0.5
        return {"name": f"orbit_{az_deg:.0f}_{el_deg:.0f}", "position": pos.tolist(),
                "look_at": [0.0, 0.5, 0.0], "up": [0, 1, 0], "fov_deg": 50.0,
                "width": size, "height": size}

    spec = {
        "objects": [
            {"mesh": "sphere.obj", "kd": [0.25, 0.25, 0.25], "ks": [0.6, 0.6, 0.6], "roughness": 0.2},
            {"mesh": "floor.obj", "kd": [0.55, 0.55, 0.55], "ks": [0.0, 0.0, 0.0], "roughness": 1.0},
            {"mesh": "walls.obj", "kd": [0.45, 0.22, 0.18], "ks": [0.0, 0.0, 0.0], "roughness": 1.0},
        ],
        "camera_presets": [orbit(30, 35), orbit(120, 30), orbit(245, 40),
                           {"name": "default", "position": [1.6, 2.2, 2.0],
                            "look_at": [0.0, 0.5, 0.0], "up": [0, 1, 0],
                            "fov_deg": 50.0, "width": 64, "height": 64}],
    }
    p = out / "scene.json"
    p.write_text(json.dumps(spec, indent=1, sort_keys=True))
    return p


def write_furnace_scene(out_dir, subdiv: int = 1) -> Path:
    """A single albedo-1 diffuse sphere: the white-furnace energy oracle.

    Faceted (no vertex normals): with smooth normals the shading hemisphere
    disagrees with the geometric one at silhouettes and darkens the test.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sv, st = icosphere(subdiv, radius=1.0)
    write_obj(out / "sphere.obj", sv, st)
    spec = {
        "objects": [{"mesh": "sphere.obj", "kd": [1.0, 1.0, 1.0], "ks": [0.0, 0.0, 0.0], "roughness": 1.0}],
        "camera_presets": [{"name": "default", "position": [0.0, 0.0, 3.0],
                            "look_at": [0.0, 0.0, 0.0], "up": [0, 1, 0],
                            "fov_deg": 40.0, "width": 16, "height": 16}],
    }
    p = out / "scene.json"
    p.write_text(json.dumps(spec, indent=1, sort_keys=True))
    return p


def _value_noise(rng, h, w, octaves=3, base=8):
    """Smooth multiplicative texture in ~[0.7, 1.3]."""
    acc = np.zeros((h, w))
    amp = 1.0
    for o in range(octaves):
        res = base * (2 ** o)
        coarse = rng.standard_normal((res + 1, min(2 * res + 1, w)))
        ys = np.linspace(0, coarse.shape[0] - 1, h)
        xs = np.linspace(0, coarse.shape[1] - 1, w)
        y0 = np.clip(ys.astype(int), 0, coarse.shape[0] - 2)
        x0 = np.clip(xs.astype(int), 0, coarse.shape[1] - 2)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        c = (coarse[y0][:, x0] * (1 - fy) * (1 - fx) + coarse[y0][:, x0 + 1] * (1 - fy) * fx
             + coarse[y0 + 1][:, x0] * fy * (1 - fx) + coarse[y0 + 1][:, x0 + 1] * fy * fx)
        acc += amp * c
        amp *= 0.5
    return 1.0 + 0.15 * np.tanh(acc)


def make_indoor_probe(seed: int, width: int = 512, height: int = 256) -> np.ndarray:
    """Synthetic indoor-style HDR panorama: dim textured walls plus a handful
    of emitters (windows, lamp discs) three to four orders of magnitude
    brighter, which is where captured indoor probes keep their L2 energy."""
    rng = np.random.default_rng(seed)
    row = np.linspace(0, np.pi, height)[:, None]  # polar angle from zenith
    col = np.linspace(0, 2 * np.pi, width, endpoint=False)[None, :]
    steep = 40.0  # emitter edge hardness in the panorama parameterization

    # ambient shell: ceiling slightly brighter, floor darker, tinted walls
    base_tint = rng.uniform(0.35, 0.75, size=3)
    up = np.maximum(np.cos(row), 0.0)
    vertical = 0.55 + 0.4 * up ** 1.5 + 0.12 * np.sin(row) ** 2
    wall_bands = 1.0 + 0.2 * np.sin(col * rng.integers(2, 5) + rng.uniform(0, 6.28))
    tex = _value_noise(rng, height, width)
    img = (vertical * wall_bands * tex)[:, :, None] * base_tint[None, None, :]

    # windows: bright rectangles, daylight tinted
    for _ in range(rng.integers(2, 4)):
        c0 = rng.uniform(0, 2 * np.pi)
        cw = rng.uniform(0.5, 0.9)
        r0 = rng.uniform(0.35 * np.pi, 0.55 * np.pi)
        rh = rng.uniform(0.15 * np.pi, 0.3 * np.pi)
        dcol = np.minimum(np.abs(col - c0), 2 * np.pi - np.abs(col - c0))
        soft = (1.0 / (1.0 + np.exp((dcol - cw / 2) * steep))) * \
               (1.0 / (1.0 + np.exp((np.abs(row - r0) - rh / 2) * steep)))
        tint = np.array([0.8, 0.9, 1.0]) * rng.uniform(0.9, 1.1, 3)
        img += soft[:, :, None] * tint[None, None, :] * rng.uniform(1500, 5000)

    # lamps: two hot discs, warm tinted
    for _ in range(2):
        c0 = rng.uniform(0, 2 * np.pi)
        r0 = rng.uniform(0.1 * np.pi, 0.45 * np.pi)
        rad = rng.uniform(0.12, 0.2)
        dcol = np.minimum(np.abs(col - c0), 2 * np.pi - np.abs(col - c0))
        d2 = (dcol * np.sin(row)) ** 2 + (row - r0) ** 2
        blob = 1.0 / (1.0 + np.exp((np.sqrt(d2) - rad) * steep))
        tint = np.array([1.0, 0.75, 0.45]) * rng.uniform(0.9, 1.1, 3)
        img += blob[:, :, None] * tint[None, None, :] * rng.uniform(4000, 12000)

    img = np.maximum(img, 0.0)
    # normalize exposure: renders stay in a sane radiance range regardless of
    # emitter contrast (the wavelet energy distribution is scale-invariant)
    mean_lum = float((img * [0.2126, 0.7152, 0.0722]).sum(axis=-1).mean())
    return img * (0.8 / max(mean_lum, 1e-9))


def write_indoor_probes(out_dir, count: int = 4, seed0: int = 100,
                        width: int = 512, height: int = 256) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        p = out / f"probe_{i:02d}.hdr"
        write_hdr(p, make_indoor_probe(seed0 + i, width=width, height=height))
        paths.append(p)
    return paths
