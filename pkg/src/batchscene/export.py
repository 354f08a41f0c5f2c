"""Scene dumps (JSON) and per-instance OBJ export."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import transforms as tf
from .assets import write_obj
from .config import SceneConfig, config_hash
from .engine import EngineState
from .scene_graph import BatchedSceneGraph

DUMP_VERSION = 1


@dataclass
class ObjectRecord:
    name: str
    pose: np.ndarray                   # world pose of the object root
    joints: dict[str, float]
    parts: dict[str, np.ndarray]       # world pose of every part


@dataclass
class InstanceRecord:
    index: int
    valid: bool
    objects: list[ObjectRecord]


@dataclass
class SceneDump:
    seed: int
    batch_size: int
    config_hash: str
    valid_mask: np.ndarray
    instances: list[InstanceRecord]
    config_name: str = ""

    def instance(self, index: int) -> InstanceRecord:
        for inst in self.instances:
            if inst.index == index:
                return inst
        raise KeyError(f"instance {index} is not in the dump")


def dump_scenes(state: EngineState, graph: BatchedSceneGraph, seed: int,
                include_invalid: bool = False) -> SceneDump:
    """Collect world poses and joint states for the (valid) instances of a batch."""
    cfg: SceneConfig = state.config
    rows = np.arange(graph.batch_size) if include_invalid else np.flatnonzero(graph.valid_mask)
    per_object = []
    for step in state.steps:
        part_poses = {p.name: graph.world_poses(step.node_name(p.name)) for p in step.asset.parts}
        joints = {p.name: graph.joint_states(step.node_name(p.name))
                  for p in step.asset.parts if p.joint is not None}
        placed = graph.placed[graph.node(step.name)]
        per_object.append((step, part_poses, joints, placed))
    instances = []
    for i in rows:
        objs = []
        for step, part_poses, joints, placed in per_object:
            if not placed[i]:
                continue
            objs.append(ObjectRecord(
                step.name,
                part_poses[step.asset.root.name][i],
                {k: float(v[i]) for k, v in joints.items()},
                {k: v[i] for k, v in part_poses.items()},
            ))
        instances.append(InstanceRecord(int(i), bool(graph.valid_mask[i]), objs))
    return SceneDump(seed, graph.batch_size, config_hash(cfg), graph.valid_mask.copy(), instances, cfg.name)


def _matrix(m: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in m]


def dump_to_dict(dump: SceneDump) -> dict:
    return {
        "schema_version": DUMP_VERSION,
        "config_name": dump.config_name,
        "config_hash": dump.config_hash,
        "seed": dump.seed,
        "batch_size": dump.batch_size,
        "valid_mask": [bool(v) for v in dump.valid_mask],
        "instances": [
            {
                "index": inst.index,
                "valid": inst.valid,
                "objects": [
                    {
                        "name": o.name,
                        "pose": _matrix(o.pose),
                        "joints": o.joints,
                        "parts": {k: _matrix(v) for k, v in o.parts.items()},
                    }
                    for o in inst.objects
                ],
            }
            for inst in dump.instances
        ],
    }


def save_dump(dump: SceneDump, path) -> None:
    Path(path).write_text(json.dumps(dump_to_dict(dump), indent=1) + "\n")


def load_dump(path) -> SceneDump:
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != DUMP_VERSION:
        raise ValueError(f"{path}: unsupported scene dump version {data.get('schema_version')!r}")
    instances = []
    for inst in data["instances"]:
        objs = []
        for o in inst["objects"]:
            pose = np.asarray(o["pose"], dtype=float)
            tf.check_homogeneous(pose[None])
            objs.append(ObjectRecord(o["name"], pose, dict(o["joints"]),
                                     {k: np.asarray(v, dtype=float) for k, v in o["parts"].items()}))
        instances.append(InstanceRecord(inst["index"], inst["valid"], objs))
    return SceneDump(data["seed"], data["batch_size"], data["config_hash"],
                     np.asarray(data["valid_mask"], dtype=bool), instances, data.get("config_name", ""))


def export_obj(dump: SceneDump, assets: dict, config: SceneConfig, out_dir, instances=None) -> list[Path]:
    """One OBJ per instance with every part baked at its world pose."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wanted = None if instances is None else set(instances)
    written = []
    for inst in dump.instances:
        if wanted is not None and inst.index not in wanted:
            continue
        groups = []
        for o in inst.objects:
            asset = assets[config.placement(o.name).asset_name]
            for part in asset.parts:
                label = o.name if part is asset.root else f"{o.name}/{part.name}"
                groups.append((label, part.mesh.transformed(o.parts[part.name])))
        path = out_dir / f"instance_{inst.index:06d}.obj"
        write_obj(path, None, groups)
        written.append(path)
    if wanted is not None:
        missing = wanted - {inst.index for inst in dump.instances}
        if missing:
            raise KeyError(f"instances not in dump: {sorted(missing)}")
    return written
