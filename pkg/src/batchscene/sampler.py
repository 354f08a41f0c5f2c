"""Batched candidate poses: cached position sampling, resting height, yaw rules."""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import shapely

from . import geometry as geo
from . import transforms as tf
from .relationships import ConstraintRegion, face_to_yaw

EPS_Z = 1e-3
REFILL_FACTOR = 4
IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])  # (x, y, z, w)


def region_fingerprint(region) -> str:
    return hashlib.sha1(shapely.to_wkb(shapely.normalize(region))).hexdigest()


class SampleCache:
    """FIFO of pre-sampled points for one region, refilled in large blocks.

    Points come from one sequential stream, so with a fixed seed and drain
    order the emitted sequence is the same whether or not caching is enabled.
    """

    def __init__(self, refill_factor: int = REFILL_FACTOR, enabled: bool = True, max_samplers: int = 8):
        if refill_factor < 1:
            raise ValueError("refill_factor must be >= 1")
        self.refill_factor = int(refill_factor)
        self.enabled = enabled
        self.fingerprint: str | None = None
        self.refills = 0
        self._queue = np.empty((0, 2))
        self._head = 0
        self._rng = np.random.default_rng(0)
        self._samplers: OrderedDict[str, geo.TriangleSampler] = OrderedDict()
        self._max_samplers = max_samplers

    def __len__(self) -> int:
        return len(self._queue) - self._head

    def reset(self, rng: np.random.Generator) -> None:
        """Drop queued points and continue from a fresh stream."""
        self._rng = rng
        self._queue = np.empty((0, 2))
        self._head = 0
        self.fingerprint = None

    def _sampler(self, region, fp: str) -> geo.TriangleSampler:
        s = self._samplers.get(fp)
        if s is None:
            s = geo.TriangleSampler(region)
            self._samplers[fp] = s
            if len(self._samplers) > self._max_samplers:
                self._samplers.popitem(last=False)
        else:
            self._samplers.move_to_end(fp)
        return s

    def refill(self, region, n: int, fp: str | None = None) -> None:
        fp = region_fingerprint(region) if fp is None else fp
        if fp != self.fingerprint:
            self._queue = np.empty((0, 2))
            self._head = 0
            self.fingerprint = fp
        sampler = self._sampler(region, fp)
        block = sampler.sample(self.refill_factor * n if self.enabled else n, self._rng)
        self._queue = np.concatenate([self._queue[self._head:], block])
        self._head = 0
        self.refills += 1

    def take(self, region, n: int, fp: str | None = None) -> np.ndarray:
        """Next ``n`` points from ``region`` (refilling when short)."""
        if n == 0:
            return np.empty((0, 2))
        fp = region_fingerprint(region) if fp is None else fp
        if fp != self.fingerprint or len(self) < n:
            self.refill(region, n, fp)
        out = self._queue[self._head:self._head + n]
        self._head += n
        return out


def refill_cache(cache: SampleCache, region, n: int, rng: np.random.Generator | None = None) -> None:
    if rng is not None:
        cache.reset(rng)
    cache.refill(region, n)


@dataclass
class PoseBatch:
    positions: np.ndarray
    yaws: np.ndarray
    rest_orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.yaws))):
            raise ValueError("pose batch contains non-finite values")
        if abs(np.linalg.norm(self.rest_orientation) - 1.0) > 1e-9:
            raise ValueError("rest orientation must be a unit quaternion")

    def matrices(self) -> np.ndarray:
        """(n, 4, 4) poses: yaw about +z composed with the rest orientation."""
        from scipy.spatial.transform import Rotation

        out = tf.xyz_yaw(self.positions, self.yaws)
        rest = Rotation.from_quat(self.rest_orientation).as_matrix()
        out[:, :3, :3] = out[:, :3, :3] @ rest
        return out


@dataclass
class PositionSamples:
    local: np.ndarray      # (k, 2) in the support frame
    world: np.ndarray      # (k, 3) surface point in the world frame
    ok: np.ndarray         # (k,) false where the instance region is empty


def sample_positions(
    constraint: ConstraintRegion,
    support_world_poses: np.ndarray,
    instances: np.ndarray,
    cache: SampleCache | None = None,
    uniforms: np.ndarray | None = None,
    fingerprint: str | None = None,
) -> PositionSamples:
    """One position per listed instance.

    Shared regions draw from ``cache`` and are mapped through each instance's
    support pose. Per-instance regions sample each instance's own polygon
    from ``uniforms`` (k, 3).
    """
    instances = np.asarray(instances, dtype=np.int64)
    k = len(instances)
    if constraint.per_instance:
        if uniforms is None:
            raise ValueError("per-instance sampling needs uniforms")
        local, ok = constraint.batch_sampler.sample(instances, uniforms)
    else:
        if constraint.region.is_empty:
            local, ok = np.full((k, 2), np.nan), np.zeros(k, dtype=bool)
        elif cache is None:
            if uniforms is None:
                raise ValueError("shared-region sampling needs a cache or uniforms")
            local, ok = geo.TriangleSampler(constraint.region).from_uniforms(uniforms), np.ones(k, dtype=bool)
        else:
            local, ok = cache.take(constraint.region, k, fingerprint), np.ones(k, dtype=bool)
    pts = np.column_stack([np.nan_to_num(local), np.zeros(k), np.ones(k)])
    world = np.einsum("nij,nj->ni", support_world_poses[instances], pts)[:, :3]
    return PositionSamples(local, world, ok)


def sample_box_volume(lo, hi, u: np.ndarray) -> np.ndarray:
    """Uniform points in an axis-aligned box, one row of ``u`` (k, 3) each."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi < lo):
        raise ValueError("box volume has hi < lo")
    return lo + u * (hi - lo)


def rest_pose(geometry) -> tuple[np.ndarray, float]:
    """Identity rest orientation and the height lifting the lowest point ``EPS_Z`` clear."""
    aabb = geometry.aabb() if hasattr(geometry, "aabb") else np.asarray(geometry, dtype=float)
    if aabb.shape != (2, 3) or not np.all(np.isfinite(aabb)):
        raise ValueError("geometry has a non-finite bounding box")
    extent = aabb[1] - aabb[0]
    if np.any(extent < 0) or not np.any(extent > 0):
        raise ValueError("geometry has a degenerate bounding box")
    return IDENTITY_QUAT.copy(), float(-aabb[0, 2] + EPS_Z)


def sample_orientations(rule: str, n: int, uniforms: np.ndarray | None = None,
                        positions: np.ndarray | None = None, targets: np.ndarray | None = None) -> np.ndarray:
    """Yaw per instance for ``fixed``, ``uniform_yaw`` or ``face_to``."""
    if rule == "fixed":
        return np.zeros(n)
    if rule == "uniform_yaw":
        if uniforms is None:
            raise ValueError("uniform_yaw needs uniforms")
        return 2.0 * math.pi * np.asarray(uniforms, dtype=float).reshape(n)
    if rule == "face_to":
        if targets is None or positions is None:
            raise ValueError("face_to target is not placed")
        targets = np.asarray(targets, dtype=float)
        if not np.all(np.isfinite(targets)):
            raise ValueError("face_to target is not placed in every instance")
        return np.atleast_1d(face_to_yaw(positions, targets))
    raise ValueError(f"unknown orientation rule {rule!r}")
