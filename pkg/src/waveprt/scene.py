"""Scene description, BVH ray casting, and G-buffer generation.

Triangle intersection uses the watertight shear-and-scale formulation, and
the BVH is flattened with hit/miss links so batches of rays traverse it
without per-ray stacks (each ray carries one node pointer; every loop
iteration advances all active rays by one node).
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SIGMA_MIN = 0.01
_LEAF_SIZE = 4


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class BRDFParams:
    kd: np.ndarray
    ks: np.ndarray
    sigma: float

    def __post_init__(self):
        kd = np.asarray(self.kd, dtype=np.float64).reshape(3)
        ks = np.asarray(self.ks, dtype=np.float64).reshape(3)
        if np.any(kd < 0) or np.any(kd > 1) or np.any(ks < 0) or np.any(ks > 1):
            raise SceneError("kd and ks must be within [0, 1]")
        if np.any(kd + ks > 1.0 + 1e-9):
            raise SceneError("kd + ks must be <= 1 per channel")
        sigma = float(self.sigma)
        if sigma > 1.0 or sigma < 0.0:
            raise SceneError(f"roughness must be in [0, 1], got {sigma}")
        if sigma < SIGMA_MIN:
            warnings.warn(f"roughness {sigma} clamped to {SIGMA_MIN}")
            sigma = SIGMA_MIN
        object.__setattr__(self, "kd", kd)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = (0.0, 1.0, 0.0)
    fov_deg: float = 45.0
    width: int = 64
    height: int = 64

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        tgt = np.asarray(self.look_at, dtype=np.float64).reshape(3)
        up = np.asarray(self.up, dtype=np.float64).reshape(3)
        if not (0.0 < self.fov_deg < 180.0):
            raise SceneError(f"fov must be in (0, 180), got {self.fov_deg}")
        if self.width < 1 or self.height < 1:
            raise SceneError("image size must be positive")
        fwd = tgt - pos
        if np.linalg.norm(fwd) < 1e-12 or np.linalg.norm(np.cross(fwd, up)) < 1e-12:
            raise SceneError("degenerate camera basis")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "look_at", tgt)
        object.__setattr__(self, "up", up)

    def basis(self):
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        right /= np.linalg.norm(right)
        return fwd, right, np.cross(right, fwd)

    def ray_dirs(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Ray directions for continuous pixel coordinates (j+0.5 = center)."""
        fwd, right, upv = self.basis()
        tan = np.tan(np.deg2rad(self.fov_deg) * 0.5)
        aspect = self.width / self.height
        xs = (np.asarray(px) / self.width * 2.0 - 1.0) * tan * aspect
        ys = (1.0 - np.asarray(py) / self.height * 2.0) * tan
        d = fwd + xs[..., None] * right + ys[..., None] * upv
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def rays(self):
        """Primary ray directions through pixel centers, shape (H, W, 3)."""
        px, py = np.meshgrid(np.arange(self.width) + 0.5,
                             np.arange(self.height) + 0.5, indexing="xy")
        return self.ray_dirs(px, py)

    def to_json(self) -> dict:
        return {
            "position": self.position.tolist(), "look_at": self.look_at.tolist(),
            "up": np.asarray(self.up, dtype=float).tolist(), "fov_deg": float(self.fov_deg),
            "width": int(self.width), "height": int(self.height),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Camera":
        return cls(position=d["position"], look_at=d["look_at"], up=d.get("up", (0, 1, 0)),
                   fov_deg=d.get("fov_deg", 45.0), width=d.get("width", 64), height=d.get("height", 64))


@dataclass
class GBuffer:
    """Struct-of-arrays per-pixel hit records from primary visibility."""

    hit: np.ndarray        # (H, W) bool
    backface: np.ndarray   # (H, W) bool
    x: np.ndarray          # (H, W, 3) world position
    xn: np.ndarray         # (H, W, 3) normalized position in [0,1]^3
    n: np.ndarray          # (H, W, 3) shading normal (flipped toward the eye)
    wo: np.ndarray         # (H, W, 3) direction to eye
    wr: np.ndarray         # (H, W, 3) reflection of wo about n
    kd: np.ndarray         # (H, W, 3)
    ks: np.ndarray         # (H, W, 3)
    sigma: np.ndarray      # (H, W)

    @property
    def shape(self):
        return self.hit.shape


def parse_obj(path) -> tuple[np.ndarray, np.ndarray | None, np.ndarray, np.ndarray | None]:
    """Minimal OBJ reader (v/vn/f); returns (verts, normals, tris, tri_normal_idx)."""
    verts, norms, tris, tri_norm = [], [], [], []
    with open(path, "r") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                norms.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx, nidx = [], []
                for tok in parts[1:]:
                    comp = tok.split("/")
                    idx.append(int(comp[0]))
                    nidx.append(int(comp[2]) if len(comp) >= 3 and comp[2] else 0)
                for k in range(1, len(idx) - 1):  # fan triangulation
                    tris.append([idx[0], idx[k], idx[k + 1]])
                    tri_norm.append([nidx[0], nidx[k], nidx[k + 1]])
    if not verts or not tris:
        raise SceneError(f"{path}: no triangles")
    v = np.asarray(verts, dtype=np.float64)
    t = np.asarray(tris, dtype=np.int64)
    t = np.where(t > 0, t - 1, len(v) + t)  # OBJ is 1-based; negatives count from end
    tn = np.asarray(tri_norm, dtype=np.int64)
    if norms and np.all(tn != 0):
        n = np.asarray(norms, dtype=np.float64)
        tn = np.where(tn > 0, tn - 1, len(n) + tn)
        return v, n, t, tn
    return v, None, t, None


def _build_bvh(centroids: np.ndarray, bmin: np.ndarray, bmax: np.ndarray):
    """Median-split BVH; returns flat arrays with hit/miss threading."""
    n_tris = len(centroids)
    order = np.arange(n_tris)

    nodes = []  # (lo, hi, children placeholder)

    def build(lo, hi):
        my_id = len(nodes)
        nodes.append(None)
        count = hi - lo
        sel = order[lo:hi]
        nb_min = bmin[sel].min(axis=0)
        nb_max = bmax[sel].max(axis=0)
        if count <= _LEAF_SIZE:
            nodes[my_id] = (nb_min, nb_max, lo, count, -1, -1)
            return my_id
        axis = int(np.argmax(nb_max - nb_min))
        key = centroids[sel, axis]
        mid = count // 2
        part = np.argpartition(key, mid)
        order[lo:hi] = sel[part]
        left = build(lo, lo + mid)
        right = build(lo + mid, hi)
        nodes[my_id] = (nb_min, nb_max, -1, 0, left, right)
        return my_id

    import sys
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        build(0, n_tris)
    finally:
        sys.setrecursionlimit(old_limit)

    n_nodes = len(nodes)
    node_min = np.zeros((n_nodes, 3))
    node_max = np.zeros((n_nodes, 3))
    tri_start = np.full(n_nodes, -1, dtype=np.int64)
    tri_count = np.zeros(n_nodes, dtype=np.int64)
    hit_link = np.full(n_nodes, -1, dtype=np.int64)
    miss_link = np.full(n_nodes, -1, dtype=np.int64)

    def thread(node_id, miss):
        nb_min, nb_max, lo, count, left, right = nodes[node_id]
        node_min[node_id] = nb_min
        node_max[node_id] = nb_max
        miss_link[node_id] = miss
        if left < 0:
            tri_start[node_id] = lo
            tri_count[node_id] = count
            hit_link[node_id] = miss  # after a leaf, continue at its miss link
        else:
            hit_link[node_id] = left
            thread(left, right)
            thread(right, miss)

    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        thread(0, -1)
    finally:
        sys.setrecursionlimit(old_limit)
    return order, node_min, node_max, tri_start, tri_count, hit_link, miss_link


class Scene:
    """Triangle soup with per-object GGX BRDF parameters and a BVH."""

    def __init__(self, meshes, scene_hash: str = ""):
        if not meshes:
            raise SceneError("empty mesh list")
        v0, v1, v2, n0, n1, n2, obj_id = [], [], [], [], [], [], []
        self.brdfs: list[BRDFParams] = []
        for i, (verts, norms, tris, tri_norm, brdf) in enumerate(meshes):
            self.brdfs.append(brdf)
            a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
            v0.append(a); v1.append(b); v2.append(c)
            if norms is not None:
                n0.append(norms[tri_norm[:, 0]])
                n1.append(norms[tri_norm[:, 1]])
                n2.append(norms[tri_norm[:, 2]])
            else:
                gn = np.cross(b - a, c - a)
                gn /= np.maximum(np.linalg.norm(gn, axis=1, keepdims=True), 1e-30)
                n0.append(gn); n1.append(gn); n2.append(gn)
            obj_id.append(np.full(len(tris), i, dtype=np.int64))
        self.v0 = np.concatenate(v0); self.v1 = np.concatenate(v1); self.v2 = np.concatenate(v2)
        self.n0 = np.concatenate(n0); self.n1 = np.concatenate(n1); self.n2 = np.concatenate(n2)
        self.obj_id = np.concatenate(obj_id)
        self.n_tris = len(self.v0)

        gn = np.cross(self.v1 - self.v0, self.v2 - self.v0)
        self.geo_n = gn / np.maximum(np.linalg.norm(gn, axis=1, keepdims=True), 1e-30)

        allv = np.concatenate([self.v0, self.v1, self.v2])
        self.bounds_min = allv.min(axis=0)
        self.bounds_max = allv.max(axis=0)
        self.diagonal = float(np.linalg.norm(self.bounds_max - self.bounds_min))
        center = 0.5 * (self.bounds_min + self.bounds_max)
        extent = float((self.bounds_max - self.bounds_min).max()) * 1.05  # 5% padding
        self.norm_origin = center - 0.5 * extent
        self.norm_scale = extent if extent > 0 else 1.0

        tb_min = np.minimum(np.minimum(self.v0, self.v1), self.v2)
        tb_max = np.maximum(np.maximum(self.v0, self.v1), self.v2)
        cent = (tb_min + tb_max) * 0.5
        (self._order, self._nmin, self._nmax, self._tstart, self._tcount,
         self._hit_link, self._miss_link) = _build_bvh(cent, tb_min, tb_max)
        self.scene_hash = scene_hash
        self.camera_presets: dict[str, Camera] = {}

        # per-object BRDF tables for vectorized lookups
        self.kd_table = np.stack([b.kd for b in self.brdfs])
        self.ks_table = np.stack([b.ks for b in self.brdfs])
        self.sigma_table = np.array([b.sigma for b in self.brdfs])

    # -------------------------------------------------- normalization

    def normalize_points(self, x: np.ndarray) -> np.ndarray:
        return (x - self.norm_origin) / self.norm_scale

    # -------------------------------------------------- intersection

    def _watertight(self, o, d, tri_idx, t_min, t_max):
        """Watertight ray/triangle test; o,d (R,3), tri_idx (R, L) -> t, u, v, ok."""
        kz = np.argmax(np.abs(d), axis=-1)
        kx = (kz + 1) % 3
        ky = (kx + 1) % 3
        neg = d[np.arange(len(d)), kz] < 0
        kx2 = np.where(neg, ky, kx)
        ky2 = np.where(neg, kx, ky)
        ar = np.arange(len(d))
        dz = d[ar, kz]
        sx = d[ar, kx2] / dz
        sy = d[ar, ky2] / dz
        sz = 1.0 / dz

        def shear(p):
            # p: (R, L, 3) triangle corners relative to origin
            pz = np.take_along_axis(p, kz[:, None, None], axis=2)[..., 0]
            px = np.take_along_axis(p, kx2[:, None, None], axis=2)[..., 0] - sx[:, None] * pz
            py = np.take_along_axis(p, ky2[:, None, None], axis=2)[..., 0] - sy[:, None] * pz
            return px, py, sz[:, None] * pz

        a = self.v0[tri_idx] - o[:, None, :]
        b = self.v1[tri_idx] - o[:, None, :]
        c = self.v2[tri_idx] - o[:, None, :]
        ax, ay, az = shear(a)
        bx, by, bz = shear(b)
        cx, cy, cz = shear(c)
        u = cx * by - cy * bx
        v = ax * cy - ay * cx
        w = bx * ay - by * ax
        same_sign = ((u >= 0) & (v >= 0) & (w >= 0)) | ((u <= 0) & (v <= 0) & (w <= 0))
        det = u + v + w
        tnum = u * az + v * bz + w * cz
        with np.errstate(divide="ignore", invalid="ignore"):
            t = tnum / det
        ok = same_sign & (det != 0) & (t > t_min[:, None]) & (t < t_max[:, None]) & np.isfinite(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            bu = np.where(ok, v / det, 0.0)
            bv = np.where(ok, w / det, 0.0)
        return t, bu, bv, ok

    def intersect(self, o: np.ndarray, d: np.ndarray, t_min=1e-9, t_max=np.inf,
                  any_hit: bool = False):
        """Nearest (or any) hit for a batch of rays.

        Returns (t, prim, u, v) with prim = -1 for misses; for any_hit only
        the boolean prim >= 0 is meaningful.
        """
        o = np.atleast_2d(np.asarray(o, dtype=np.float64))
        d = np.atleast_2d(np.asarray(d, dtype=np.float64))
        n = len(d)
        if len(o) == 1 and n > 1:
            o = np.broadcast_to(o, d.shape)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,)).copy()
        t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy()

        with np.errstate(divide="ignore"):
            inv_d = 1.0 / d
        best_t = t_max.copy()
        best_prim = np.full(n, -1, dtype=np.int64)
        best_u = np.zeros(n)
        best_v = np.zeros(n)

        node = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        leaf_cols = np.arange(_LEAF_SIZE)
        while len(active):
            cur = node[active]
            nmin = self._nmin[cur]
            nmax = self._nmax[cur]
            oa, ida = o[active], inv_d[active]
            with np.errstate(invalid="ignore"):
                t0 = (nmin - oa) * ida
                t1 = (nmax - oa) * ida
            tn = np.minimum(t0, t1)
            tf = np.maximum(t0, t1)
            # NaNs (ray parallel to a slab, origin on boundary) must not cull
            tn = np.nan_to_num(tn, nan=-np.inf)
            tf = np.nan_to_num(tf, nan=np.inf)
            t_near = np.maximum(tn.max(axis=1), t_min[active])
            t_far = np.minimum(tf.min(axis=1), best_t[active])
            box_hit = t_near <= t_far

            is_leaf = self._tstart[cur] >= 0
            do_leaf = box_hit & is_leaf
            if np.any(do_leaf):
                rows = active[do_leaf]
                cn = cur[do_leaf]
                starts = self._tstart[cn]
                counts = self._tcount[cn]
                slots = starts[:, None] + leaf_cols[None, :]
                valid = leaf_cols[None, :] < counts[:, None]
                slots = np.where(valid, slots, 0)
                tri = self._order[slots]
                t, bu, bv, ok = self._watertight(o[rows], d[rows], tri, t_min[rows], best_t[rows])
                ok &= valid
                t = np.where(ok, t, np.inf)
                j = np.argmin(t, axis=1)
                rr = np.arange(len(rows))
                tbest = t[rr, j]
                got = np.isfinite(tbest)
                upd = rows[got]
                best_t[upd] = tbest[got]
                best_prim[upd] = tri[rr[got], j[got]]
                best_u[upd] = bu[rr[got], j[got]]
                best_v[upd] = bv[rr[got], j[got]]

            nxt = np.where(box_hit & ~is_leaf, self._hit_link[cur], self._miss_link[cur])
            node[active] = nxt
            if any_hit:
                node[active[best_prim[active] >= 0]] = -1
            keep = node[active] >= 0
            active = active[keep]

        return best_t, best_prim, best_u, best_v

    def intersect_brute(self, o: np.ndarray, d: np.ndarray, t_min=1e-9, t_max=np.inf):
        """Linear scan over every triangle; the oracle for BVH correctness."""
        o = np.atleast_2d(np.asarray(o, dtype=np.float64))
        d = np.atleast_2d(np.asarray(d, dtype=np.float64))
        n = len(d)
        if len(o) == 1 and n > 1:
            o = np.broadcast_to(o, d.shape)
        t_min = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,))
        t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,))
        tri = np.broadcast_to(np.arange(self.n_tris), (n, self.n_tris))
        t, bu, bv, ok = self._watertight(o, d, tri, t_min, t_max)
        t = np.where(ok, t, np.inf)
        j = np.argmin(t, axis=1)
        rr = np.arange(n)
        tb = t[rr, j]
        prim = np.where(np.isfinite(tb), j, -1)
        return np.where(np.isfinite(tb), tb, t_max), prim, bu[rr, j], bv[rr, j]

    def occluded(self, x: np.ndarray, d: np.ndarray, t_max=np.inf) -> np.ndarray:
        """True where any geometry lies along x + t*d for t in (eps, t_max)."""
        eps = 1e-4 * self.diagonal
        _, prim, _, _ = self.intersect(x, d, t_min=eps, t_max=t_max, any_hit=True)
        return prim >= 0

    def shading_at(self, prim: np.ndarray, u: np.ndarray, v: np.ndarray):
        """Interpolated shading normal, geometric normal, and BRDF arrays."""
        w = 1.0 - u - v
        n = (w[:, None] * self.n0[prim] + u[:, None] * self.n1[prim] + v[:, None] * self.n2[prim])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        bad = (norm[:, 0] < 1e-12)
        n = np.where(bad[:, None], self.geo_n[prim], n / np.maximum(norm, 1e-30))
        obj = self.obj_id[prim]
        return n, self.geo_n[prim], self.kd_table[obj], self.ks_table[obj], self.sigma_table[obj]


def trace_primary(scene: Scene, camera: Camera) -> GBuffer:
    """One watertight primary ray per pixel center; misses are flagged."""
    h, w = camera.height, camera.width
    dirs = camera.rays().reshape(-1, 3)
    o = np.broadcast_to(camera.position, dirs.shape)
    t, prim, bu, bv = scene.intersect(o, dirs, t_min=0.0)
    hit = prim >= 0
    x = np.where(hit[:, None], o + t[:, None] * dirs, 0.0)
    prim_s = np.where(hit, prim, 0)
    n, gn, kd, ks, sigma = scene.shading_at(prim_s, bu, bv)
    wo = -dirs
    # flip shading normal toward the eye on backface hits
    backface = (np.einsum("ij,ij->i", gn, wo) < 0.0) & hit
    flip = (np.einsum("ij,ij->i", n, wo) < 0.0)
    n = np.where(flip[:, None], -n, n)
    ndotwo = np.einsum("ij,ij->i", n, wo)
    wr = 2.0 * ndotwo[:, None] * n - wo
    wr /= np.maximum(np.linalg.norm(wr, axis=1, keepdims=True), 1e-30)

    def shp(a, ch=None):
        return a.reshape((h, w) if ch is None else (h, w, ch))

    zero3 = np.zeros_like(x)
    return GBuffer(
        hit=shp(hit), backface=shp(backface),
        x=shp(x, 3), xn=shp(np.where(hit[:, None], scene.normalize_points(x), 0.0), 3),
        n=shp(np.where(hit[:, None], n, zero3), 3),
        wo=shp(wo, 3), wr=shp(np.where(hit[:, None], wr, zero3), 3),
        kd=shp(np.where(hit[:, None], kd, 0.0), 3), ks=shp(np.where(hit[:, None], ks, 0.0), 3),
        sigma=shp(np.where(hit, sigma, 0.0)),
    )


def load_scene(path) -> Scene:
    """Load a scene JSON referencing OBJ meshes with per-object BRDFs."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise SceneError(f"{path}: invalid JSON ({e})")
    objects = spec.get("objects", [])
    if not objects:
        raise SceneError(f"{path}: empty mesh list")
    meshes = []
    hasher = hashlib.sha256(json.dumps(spec, sort_keys=True).encode())
    for obj in objects:
        mesh_path = path.parent / obj["mesh"]
        verts, norms, tris, tri_norm = parse_obj(mesh_path)
        hasher.update(mesh_path.read_bytes())
        brdf = BRDFParams(kd=obj["kd"], ks=obj["ks"], sigma=obj["roughness"])
        meshes.append((verts, norms, tris, tri_norm, brdf))
    scene = Scene(meshes, scene_hash=hasher.hexdigest())
    for preset in spec.get("camera_presets", []):
        name = preset.get("name", "default")
        scene.camera_presets[name] = Camera.from_json(preset)
    return scene
