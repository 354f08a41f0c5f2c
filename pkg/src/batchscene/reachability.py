"""4D reachability maps over end-effector position and tool inclination.

The map is filled by pushing random joint configurations through forward
kinematics and marking the cell of each end-effector sample. Inclination is
the angle between the tool z-axis and the base's -z axis.

When the chain's first joint is a full-turn revolute about the base z-axis,
the workspace is rotationally symmetric and positions are binned as
``(r, z)`` instead of ``(x, y, z)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import transforms as tf
from .scene_graph import JointSpec

MAGIC = b"RM4D"
FORMAT_VERSION = 1
DEFAULT_RESOLUTION = 0.05
DEFAULT_ANGLE_RESOLUTION = math.radians(15.0)
DEFAULT_SAMPLES = 1_000_000
_CHUNK = 200_000
_HEADER = struct.Struct("<4sHBB4I4d3dQ16d")

CARTESIAN, CYLINDRICAL = 0, 1


@dataclass
class ChainLink:
    origin: np.ndarray   # fixed 4x4 from the previous frame to the joint frame
    joint: JointSpec


@dataclass
class KinematicChain:
    links: list[ChainLink]
    tool: np.ndarray = None  # joint frame of the last link -> end effector

    def __post_init__(self):
        if not self.links:
            raise ValueError("a kinematic chain needs at least one joint")
        if self.tool is None:
            self.tool = np.eye(4)
        for link in self.links:
            if not np.all(np.isfinite(link.origin)):
                raise ValueError("link transforms must be finite")

    @property
    def n_joints(self) -> int:
        return len(self.links)

    @property
    def reach(self) -> float:
        """Upper bound on the end-effector distance from the first joint."""
        total = sum(float(np.linalg.norm(l.origin[:3, 3])) for l in self.links[1:])
        total += float(np.linalg.norm(self.tool[:3, 3]))
        for link in self.links:
            if link.joint.kind == "prismatic":
                total += max(abs(link.joint.limits[0]), abs(link.joint.limits[1]))
        return total

    def base_yaw_symmetric(self) -> bool:
        first = self.links[0]
        j = first.joint
        return (
            j.kind == "revolute"
            and np.allclose(np.abs(j.axis), (0.0, 0.0, 1.0))
            and j.limits[1] - j.limits[0] >= 2 * math.pi - 1e-9
            and np.allclose(first.origin[:3, :3], np.eye(3))
            and np.allclose(first.origin[:2, 3], 0.0)
        )

    def sample_configurations(self, m: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.array([l.joint.limits[0] for l in self.links])
        hi = np.array([l.joint.limits[1] for l in self.links])
        return lo + rng.random((m, self.n_joints)) * (hi - lo)

    def forward(self, q: np.ndarray) -> np.ndarray:
        """End-effector poses (m, 4, 4) in the chain base frame."""
        q = np.atleast_2d(q)
        T = np.broadcast_to(np.eye(4), (len(q), 4, 4))
        for i, link in enumerate(self.links):
            T = T @ link.origin @ link.joint.motion(q[:, i])
        return T @ self.tool


def inclination(poses: np.ndarray) -> np.ndarray:
    """Angle between each tool z-axis and -z."""
    return np.arccos(np.clip(-poses[:, 2, 2], -1.0, 1.0))


@dataclass
class ReachMap4D:
    mode: int
    lower: np.ndarray        # (4,) lower bounds of the binned coordinates
    shape: tuple             # cells per axis
    resolution: float
    angle_resolution: float
    samples: int
    occupancy: np.ndarray    # bool, ``shape``
    counts: np.ndarray | None = None
    base_frame: np.ndarray = None  # chain base expressed in the robot base frame

    def __post_init__(self):
        if self.base_frame is None:
            self.base_frame = np.eye(4)
        self._any_psi = self.occupancy.any(axis=-1)

    @property
    def n_occupied(self) -> int:
        return int(self.occupancy.sum())

    def _coords(self, points: np.ndarray) -> np.ndarray:
        if self.mode == CYLINDRICAL:
            return np.column_stack([np.hypot(points[:, 0], points[:, 1]), points[:, 2]])
        return points[:, :3]

    def _spatial_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self._coords(points)
        d = c.shape[1]
        idx = np.floor((c - self.lower[:d]) / self.resolution).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.shape[:d])), axis=1)
        return idx, inside

    def _psi_index(self, psi: np.ndarray) -> np.ndarray:
        return np.clip(np.floor(psi / self.angle_resolution).astype(np.int64), 0, self.shape[-1] - 1)

    def lookup(self, points: np.ndarray, psi: np.ndarray | None = None) -> np.ndarray:
        """Occupancy for points already in the chain base frame."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx, inside = self._spatial_index(points)
        out = np.zeros(len(points), dtype=bool)
        sel = np.flatnonzero(inside)
        cell = tuple(idx[sel].T)
        if psi is None:
            out[sel] = self._any_psi[cell]
        else:
            p = self._psi_index(np.broadcast_to(np.asarray(psi, dtype=float), (len(points),))[sel])
            out[sel] = self.occupancy[cell + (p,)]
        return out

    def cell_center(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=float)
        d = len(self.shape) - 1
        return self.lower[:d] + (index[:d] + 0.5) * self.resolution


def _grid(chain: KinematicChain, mode: int, resolution: float, angle_resolution: float):
    reach = chain.reach
    z0 = float(chain.links[0].origin[2, 3])
    n_psi = int(math.ceil(math.pi / angle_resolution - 1e-9))
    if mode == CYLINDRICAL:
        lo = [0.0, math.floor((z0 - reach) / resolution) * resolution]
        hi = [reach, z0 + reach]
    else:
        c = chain.links[0].origin[:3, 3]
        lo = [math.floor((c[i] - reach) / resolution) * resolution for i in range(3)]
        hi = [c[i] + reach for i in range(3)]
    shape = [int(math.floor((h - l) / resolution + 1e-9)) + 1 for l, h in zip(lo, hi)]
    lower = np.zeros(4)
    lower[:len(lo)] = lo
    return lower, tuple(shape) + (n_psi,)


def build_map(
    chain: KinematicChain,
    samples: int = DEFAULT_SAMPLES,
    resolution: float = DEFAULT_RESOLUTION,
    angle_resolution: float = DEFAULT_ANGLE_RESOLUTION,
    rng: np.random.Generator | None = None,
    mode: str = "auto",
) -> ReachMap4D:
    """Sample ``samples`` configurations uniformly within limits and bin them."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if resolution <= 0 or angle_resolution <= 0:
        raise ValueError("resolutions must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    if mode == "auto":
        m = CYLINDRICAL if chain.base_yaw_symmetric() else CARTESIAN
    else:
        m = {"cylindrical": CYLINDRICAL, "cartesian": CARTESIAN}[mode]
        if m == CYLINDRICAL and not chain.base_yaw_symmetric():
            raise ValueError("cylindrical binning needs a full-turn base yaw joint")
    lower, shape = _grid(chain, m, resolution, angle_resolution)
    rmap = ReachMap4D(m, lower, shape, resolution, angle_resolution, samples,
                      np.zeros(shape, dtype=bool))
    counts = np.zeros(int(np.prod(shape)), dtype=np.int64)
    for start in range(0, samples, _CHUNK):
        q = chain.sample_configurations(min(_CHUNK, samples - start), rng)
        ee = chain.forward(q)
        idx, inside = rmap._spatial_index(ee[:, :3, 3])
        psi = rmap._psi_index(inclination(ee))
        flat = np.ravel_multi_index(tuple(idx[inside].T) + (psi[inside],), shape)
        counts += np.bincount(flat, minlength=len(counts))
    counts = counts.reshape(shape)
    return ReachMap4D(m, lower, shape, resolution, angle_resolution, samples, counts > 0, counts)


def query_batch(rmap: ReachMap4D, base_poses: np.ndarray, targets: np.ndarray,
                tool_inclination=None) -> np.ndarray:
    """Reachability of world ``targets`` (n, 3) from per-instance robot bases (n, 4, 4)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    base_poses = np.asarray(base_poses, dtype=float)
    if base_poses.ndim == 2:
        base_poses = np.broadcast_to(base_poses, (len(targets), 4, 4))
    to_chain = tf.invert(base_poses @ rmap.base_frame)
    local = np.einsum("nij,nj->ni", to_chain[:, :3, :3], targets) + to_chain[:, :3, 3]
    return rmap.lookup(local, tool_inclination)


def placement_filter(rmap: ReachMap4D, robot_base: np.ndarray, object_frames: np.ndarray,
                     parts: list[np.ndarray] | None = None) -> np.ndarray:
    """True where the object origin and every flagged part frame are reachable."""
    ok = query_batch(rmap, robot_base, object_frames[:, :3, 3])
    for frames in parts or ():
        ok &= query_batch(rmap, robot_base, frames[:, :3, 3])
    return ok


def save_map(rmap: ReachMap4D, path) -> None:
    shape = tuple(rmap.shape) + (1,) * (4 - len(rmap.shape))
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, rmap.mode, len(rmap.shape), *shape, *rmap.lower,
        rmap.resolution, rmap.angle_resolution, 0.0, rmap.samples, *rmap.base_frame.reshape(-1),
    )
    Path(path).write_bytes(header + np.packbits(rmap.occupancy.reshape(-1)).tobytes())


def load_map(path) -> ReachMap4D:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise ValueError(f"{path}: not a reachability map file")
    fields = _HEADER.unpack_from(data)
    _, version, mode, ndim, *rest = fields
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported map version {version}")
    shape = tuple(rest[:ndim])
    lower = np.array(rest[4:8])
    resolution, angle_resolution, _, samples = rest[8], rest[9], rest[10], rest[11]
    base_frame = np.array(rest[12:28]).reshape(4, 4)
    n = int(np.prod(shape))
    bits = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if len(bits) != (n + 7) // 8:
        raise ValueError(f"{path}: payload size does not match header")
    occ = np.unpackbits(bits, count=n).astype(bool).reshape(shape)
    return ReachMap4D(mode, lower, shape, resolution, angle_resolution, samples, occ, None, base_frame)


def inspect_map(rmap: ReachMap4D) -> dict:
    return {
        "mode": "cylindrical" if rmap.mode == CYLINDRICAL else "cartesian",
        "shape": list(rmap.shape),
        "lower": rmap.lower[: len(rmap.shape) - 1].tolist(),
        "resolution": rmap.resolution,
        "angle_resolution_deg": math.degrees(rmap.angle_resolution),
        "samples": rmap.samples,
        "occupied_cells": rmap.n_occupied,
        "total_cells": int(np.prod(rmap.shape)),
    }
