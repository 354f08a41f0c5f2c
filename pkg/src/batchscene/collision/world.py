"""Batched collision world: registered meshes, per-instance poses, masks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import transforms as tf
from ..geometry import TriMesh
from .bvh import BVH, build_bvh
from .kernels import narrow_phase


@dataclass
class CollisionMask:
    """``free[i]`` is true when instance ``i`` is collision-free (or was not checked)."""

    free: np.ndarray
    contact: np.ndarray  # index of the first colliding object, -1 if none

    def __len__(self) -> int:
        return len(self.free)


@dataclass
class CollisionStats:
    bvh_builds: int = 0
    check_calls: int = 0
    checked_instances: int = 0
    narrow_pairs: int = 0
    subset_sizes: list[int] = field(default_factory=list)


@dataclass
class _Object:
    name: str
    geometry: int
    poses: np.ndarray
    enabled: np.ndarray
    aabb_min: np.ndarray
    aabb_max: np.ndarray


def _world_aabbs(local_aabb: np.ndarray, poses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = 0.5 * (local_aabb[0] + local_aabb[1])
    half = 0.5 * (local_aabb[1] - local_aabb[0])
    R = poses[:, :3, :3]
    c = R @ center + poses[:, :3, 3]
    h = np.abs(R) @ half
    return c - h, c + h


class CollisionWorld:
    """Placed geometry for ``batch_size`` scene instances.

    Meshes are registered once and keep their BVH in the local frame; placing
    or moving an object only updates its transforms and enabled flags.
    ``margin`` inflates every test by that clearance (0 = exact contact).
    """

    def __init__(self, batch_size: int, margin: float = 0.0):
        self.batch_size = int(batch_size)
        self.margin = float(margin)
        self.stats = CollisionStats()
        self._keys: dict = {}
        self._meshes: list[TriMesh] = []
        self._bvhs: list[BVH] = []
        self._aabbs: list[np.ndarray] = []
        self._objects: list[_Object] = []
        self._by_name: dict[str, int] = {}
        self._packed = None

    # -- geometry ----------------------------------------------------------
    def register_geometry(self, mesh: TriMesh, key=None) -> int:
        """Register a mesh and build its BVH; re-registering ``key`` is a no-op."""
        key = id(mesh) if key is None else key
        if key in self._keys:
            return self._keys[key]
        if len(mesh) == 0:
            raise ValueError("cannot register an empty mesh")
        bvh = build_bvh(mesh.corners)
        self.stats.bvh_builds += 1
        gid = len(self._meshes)
        self._meshes.append(mesh)
        self._bvhs.append(bvh)
        self._aabbs.append(mesh.aabb())
        self._keys[key] = gid
        self._packed = None
        return gid

    def bvh(self, gid: int) -> BVH:
        return self._bvhs[gid]

    def geometry_aabb(self, gid: int) -> np.ndarray:
        return self._aabbs[gid]

    def _pack(self):
        if self._packed is None:
            node_off = np.cumsum([0] + [b.n_nodes for b in self._bvhs])[:-1]
            tri_off = np.cumsum([0] + [len(m) for m in self._meshes])[:-1]
            tris = np.concatenate([m.corners[b.order] for m, b in zip(self._meshes, self._bvhs)])
            cat = lambda attr: np.concatenate([getattr(b, attr) for b in self._bvhs])  # noqa: E731
            self._packed = (
                node_off.astype(np.int64), tri_off.astype(np.int64),
                np.ascontiguousarray(cat("node_min")), np.ascontiguousarray(cat("node_max")),
                cat("left"), cat("right"), cat("start"), cat("count"),
                np.ascontiguousarray(tris),
            )
        return self._packed

    # -- objects -----------------------------------------------------------
    def add_object(self, name: str, gid: int, enabled: bool = False) -> int:
        if name in self._by_name:
            raise ValueError(f"duplicate collision object {name!r}")
        if not 0 <= gid < len(self._meshes):
            raise KeyError(f"unknown geometry id {gid}")
        n = self.batch_size
        poses = tf.identity(n)
        lo, hi = _world_aabbs(self._aabbs[gid], poses)
        obj = _Object(name, gid, poses, np.full(n, enabled), lo, hi)
        self._objects.append(obj)
        self._by_name[name] = len(self._objects) - 1
        return self._by_name[name]

    def object_names(self) -> list[str]:
        return [o.name for o in self._objects]

    def _obj(self, name) -> _Object:
        try:
            return self._objects[self._by_name[name]]
        except KeyError:
            raise KeyError(f"unknown collision object {name!r}") from None

    def set_enabled(self, name: str, instances, enabled: bool) -> None:
        obj = self._obj(name)
        idx = slice(None) if instances is None else np.asarray(instances)
        obj.enabled[idx] = enabled

    def enabled(self, name: str) -> np.ndarray:
        return self._obj(name).enabled.copy()

    def disable_all(self) -> None:
        for o in self._objects:
            o.enabled[:] = False

    def update_transforms(self, name: str, poses: np.ndarray, instances=None) -> None:
        """Move an object in all (or the listed) instances; BVHs are untouched."""
        obj = self._obj(name)
        poses = np.asarray(poses, dtype=float)
        expected = self.batch_size if instances is None else len(np.atleast_1d(instances))
        if poses.shape != (expected, 4, 4):
            raise ValueError(f"pose batch shape {poses.shape} does not match ({expected}, 4, 4)")
        idx = slice(None) if instances is None else np.asarray(instances)
        obj.poses[idx] = poses
        lo, hi = _world_aabbs(self._aabbs[obj.geometry], poses)
        obj.aabb_min[idx] = lo
        obj.aabb_max[idx] = hi

    def poses(self, name: str) -> np.ndarray:
        return self._obj(name).poses.copy()

    # -- queries -----------------------------------------------------------
    def check_batch(self, gid: int, poses: np.ndarray, active=None) -> CollisionMask:
        """Test a candidate geometry at per-instance ``poses`` (N, 4, 4).

        Only ``active`` instances are examined; the rest stay marked free.
        """
        if not 0 <= gid < len(self._meshes):
            raise KeyError(f"unknown geometry id {gid}")
        n = self.batch_size
        if poses.shape != (n, 4, 4):
            raise ValueError(f"candidate poses must be ({n}, 4, 4), got {poses.shape}")
        active = np.arange(n) if active is None else np.asarray(active, dtype=np.int64)
        free = np.ones(n, dtype=bool)
        contact = np.full(n, -1, dtype=np.int64)
        self.stats.check_calls += 1
        self.stats.checked_instances += len(active)
        self.stats.subset_sizes.append(len(active))
        if len(active) == 0 or not self._objects:
            return CollisionMask(free, contact)

        cand = poses[active]
        c_lo, c_hi = _world_aabbs(self._aabbs[gid], cand)
        m = self.margin
        pair_inst, pair_obj = [], []
        for k, obj in enumerate(self._objects):
            hit = obj.enabled[active]
            if not hit.any():
                continue
            o_lo = obj.aabb_min[active]
            o_hi = obj.aabb_max[active]
            hit &= np.all((c_lo <= o_hi + m) & (o_lo <= c_hi + m), axis=1)
            rows = np.flatnonzero(hit)
            pair_inst.append(rows)
            pair_obj.append(np.full(len(rows), k, dtype=np.int64))
        if not pair_inst:
            return CollisionMask(free, contact)
        rows = np.concatenate(pair_inst)
        objs = np.concatenate(pair_obj)
        if len(rows) == 0:
            return CollisionMask(free, contact)
        other_geom = np.array([o.geometry for o in self._objects], dtype=np.int64)[objs]
        other_pose = np.empty((len(rows), 4, 4))
        for k in np.unique(objs):
            sel = objs == k
            other_pose[sel] = self._objects[k].poses[active[rows[sel]]]
        rel = np.ascontiguousarray(tf.invert(other_pose) @ cand[rows])
        hits = np.zeros(len(rows), dtype=np.bool_)
        packed = self._pack()
        narrow_phase(np.full(len(rows), gid, dtype=np.int64), other_geom, rel, *packed, m, hits)
        self.stats.narrow_pairs += len(rows)
        if hits.any():
            inst = active[rows[hits]]
            free[inst] = False
            # first contact: lowest object index per instance
            order = np.lexsort((objs[hits], inst))
            inst_sorted = inst[order]
            first = np.r_[True, inst_sorted[1:] != inst_sorted[:-1]]
            contact[inst_sorted[first]] = objs[hits][order][first]
        return CollisionMask(free, contact)
