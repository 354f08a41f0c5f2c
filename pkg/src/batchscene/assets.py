"""Asset loading: primitive tessellation, Wavefront OBJ parsing, part assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import transforms as tf
from .geometry import TriMesh
from .scene_graph import JointSpec


class MeshParseError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def box(size, offset=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned box centred at ``offset``: 8 vertices, 12 outward triangles."""
    hx, hy, hz = (0.5 * float(s) for s in size)
    v = np.array(
        [[-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
         [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz]]
    ) + np.asarray(offset, dtype=float)
    t = np.array(
        [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
         [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
         [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]]
    )
    return TriMesh(v, t)


_AXIS_FRAMES = {
    "z": np.eye(3),
    "x": np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]),
    "y": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
}


def cylinder(radius, height, segments=32, axis="z", offset=(0.0, 0.0, 0.0)) -> TriMesh:
    """Closed cylinder with capped fans: ``4 * segments`` triangles."""
    s = int(segments)
    if s < 3:
        raise ValueError("cylinder needs at least 3 segments")
    ang = np.linspace(0.0, 2 * math.pi, s, endpoint=False)
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = 0.5 * height
    bottom = np.column_stack([ring, np.full(s, -h)])
    top = np.column_stack([ring, np.full(s, h)])
    v = np.concatenate([bottom, top, [[0.0, 0.0, -h], [0.0, 0.0, h]]])
    i = np.arange(s)
    j = (i + 1) % s
    cb, ct = 2 * s, 2 * s + 1
    tris = np.concatenate([
        np.stack([i, j, s + j], axis=1),
        np.stack([i, s + j, s + i], axis=1),
        np.stack([np.full(s, cb), j, i], axis=1),
        np.stack([np.full(s, ct), s + i, s + j], axis=1),
    ])
    v = v @ _AXIS_FRAMES[axis].T + np.asarray(offset, dtype=float)
    return TriMesh(v, tris)


def sphere(radius, segments=16, rings=8, offset=(0.0, 0.0, 0.0)) -> TriMesh:
    """UV sphere with poles; ``2 * segments * (rings - 1)`` triangles."""
    s, r = int(segments), int(rings)
    if s < 3 or r < 2:
        raise ValueError("sphere needs segments >= 3 and rings >= 2")
    theta = np.linspace(0.0, math.pi, r + 1)[1:-1]
    phi = np.linspace(0.0, 2 * math.pi, s, endpoint=False)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    body = np.stack(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
    ).reshape(-1, 3)
    v = np.concatenate([[[0.0, 0.0, 1.0]], body, [[0.0, 0.0, -1.0]]]) * radius
    north, south = 0, len(v) - 1
    tris = []
    k = np.arange(s)
    kn = (k + 1) % s
    tris.append(np.stack([np.full(s, north), 1 + k, 1 + kn], axis=1))
    for ring in range(r - 2):
        a = 1 + ring * s
        b = a + s
        tris.append(np.stack([a + k, b + k, b + kn], axis=1))
        tris.append(np.stack([a + k, b + kn, a + kn], axis=1))
    last = 1 + (r - 2) * s
    tris.append(np.stack([np.full(s, south), last + kn, last + k], axis=1))
    return TriMesh(v + np.asarray(offset, dtype=float), np.concatenate(tris))


def load_obj(path, scale: float = 1.0) -> TriMesh:
    """Minimal Wavefront OBJ reader: ``v`` and ``f`` records, polygons fanned."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    verts, faces = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise MeshParseError(path, lineno, f"bad vertex {line.strip()!r}") from None
                if len(verts[-1]) != 3:
                    raise MeshParseError(path, lineno, "vertex needs 3 coordinates")
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    try:
                        i = int(tok.split("/")[0])
                    except ValueError:
                        raise MeshParseError(path, lineno, f"bad face index {tok!r}") from None
                    i = i - 1 if i > 0 else len(verts) + i
                    if not 0 <= i < len(verts):
                        raise MeshParseError(path, lineno, f"face index {tok} out of range")
                    idx.append(i)
                if len(idx) < 3:
                    raise MeshParseError(path, lineno, "face needs at least 3 vertices")
                faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    if not faces:
        raise MeshParseError(path, 0, "no faces found")
    return TriMesh(np.asarray(verts) * scale, np.asarray(faces)).cleaned()


def write_obj(path, mesh: TriMesh, groups: list[tuple[str, TriMesh]] | None = None) -> None:
    """Write a mesh (or named groups of meshes) as OBJ."""
    path = Path(path)
    groups = groups if groups is not None else [("mesh", mesh)]
    offset = 1
    with path.open("w") as fh:
        for name, m in groups:
            fh.write(f"o {name}\n")
            for x, y, z in m.vertices:
                fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
            for a, b, c in m.triangles + offset:
                fh.write(f"f {a} {b} {c}\n")
            offset += len(m.vertices)


def build_geometry(spec: dict, base_dir: Path | None = None) -> TriMesh:
    """Mesh from a geometry descriptor (dict form of the config schema)."""
    if "mesh" in spec:
        p = Path(spec["mesh"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return load_obj(p, spec.get("scale", 1.0))
    kind = spec.get("primitive")
    offset = spec.get("offset", (0.0, 0.0, 0.0))
    if kind == "box":
        mesh = box(spec["size"], offset)
    elif kind == "cylinder":
        mesh = cylinder(spec["radius"], spec["height"], spec.get("segments", 32),
                        spec.get("axis", "z"), offset)
    elif kind == "sphere":
        mesh = sphere(spec["radius"], spec.get("segments", 16), spec.get("rings", 8), offset)
    elif kind == "compound":
        mesh = TriMesh.concatenate(build_geometry(c, base_dir) for c in spec["children"])
    else:
        raise ValueError(f"unknown geometry descriptor {spec!r}")
    return mesh.cleaned()


@dataclass
class AssetPart:
    name: str
    mesh: TriMesh
    parent: str | None = None
    origin: np.ndarray = field(default_factory=lambda: np.eye(4))
    joint: JointSpec | None = None


@dataclass
class Asset:
    """A rigid or articulated object: parts in parent-before-child order."""

    name: str
    parts: list[AssetPart]

    def __post_init__(self):
        names = [p.name for p in self.parts]
        if len(set(names)) != len(names):
            raise ValueError(f"asset {self.name!r} has duplicate part names")
        if not self.parts or self.parts[0].parent is not None:
            raise ValueError(f"asset {self.name!r}: first part must be the root")
        seen = {self.parts[0].name}
        for p in self.parts[1:]:
            if p.parent not in seen:
                raise ValueError(f"asset {self.name!r}: part {p.name!r} has unknown parent {p.parent!r}")
            seen.add(p.name)

    @property
    def root(self) -> AssetPart:
        return self.parts[0]

    @property
    def joints(self) -> list[AssetPart]:
        return [p for p in self.parts if p.joint is not None]

    def part(self, name: str) -> AssetPart:
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(f"asset {self.name!r} has no part {name!r}")

    def part_transforms(self, joint_values: dict[str, np.ndarray] | None = None, n: int = 1) -> dict[str, np.ndarray]:
        """Part poses in the asset root frame, each (n, 4, 4)."""
        joint_values = joint_values or {}
        out = {self.root.name: tf.identity(n)}
        for p in self.parts[1:]:
            T = out[p.parent] @ p.origin
            if p.joint is not None:
                q = joint_values.get(p.name)
                q = np.full(n, p.joint.limits[0]) if q is None else np.asarray(q, dtype=float)
                T = T @ p.joint.motion(q)
            out[p.name] = T
        return out

    def assembled(self, joint_values=None) -> TriMesh:
        """All parts merged into the root frame (joints at ``joint_values`` or lower limits)."""
        poses = self.part_transforms(joint_values, 1)
        return TriMesh.concatenate(p.mesh.transformed(poses[p.name][0]) for p in self.parts)


def asset_from_spec(name: str, spec: dict, base_dir: Path | None = None) -> Asset:
    """Build an :class:`Asset` from the dict form of an asset descriptor."""
    if spec.get("parts"):
        parts = []
        for p in spec["parts"]:
            joint = None
            if p.get("joint"):
                j = p["joint"]
                axis = np.asarray(j["axis"], dtype=float)
                joint = JointSpec(j["kind"], tuple(axis / np.linalg.norm(axis)), tuple(j["limits"]))
            parts.append(AssetPart(
                p["name"], build_geometry(p["geometry"], base_dir), p.get("parent"),
                tf.from_xyz_rpy(p.get("origin", (0.0,) * 6)), joint,
            ))
        return Asset(name, parts)
    return Asset(name, [AssetPart(name, build_geometry(spec["geometry"], base_dir))])
