"""Scene configuration schema (YAML or JSON documents, schema version 1).

Top-level fields::

    schema_version: 1
    name: mid
    max_retries: 10
    collision_margin: 0.0
    assets: {name: {geometry: ...} | {parts: [...]}}
    placements: [{object, asset, parent, pose | relationship, orientation,
                  randomize_joints, reachability, reach_parts, max_retries}]
    robot: {base_pose, links, tool, samples, resolution, angle_resolution_deg, map}

``parent`` and anchor references name a placed object (``cabinet``) or one
of its parts (``cabinet/drawer_top``); the implicit root is ``world``.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import (BaseModel, ConfigDict, Discriminator, Field, Tag, ValidationError,
                      field_validator, model_validator)

from .relationships import RelationshipSpec

SCHEMA_VERSION = 1
ROOT = "world"

Vec3 = tuple[float, float, float]
Pose6 = tuple[float, float, float, float, float, float]
_ZERO6 = (0.0,) * 6


class ConfigError(ValueError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BoxGeometry(_Model):
    primitive: Literal["box"]
    size: Vec3
    offset: Vec3 = (0.0, 0.0, 0.0)

    @field_validator("size")
    @classmethod
    def _positive(cls, v):
        if min(v) <= 0:
            raise ValueError("box size must be positive")
        return v


class CylinderGeometry(_Model):
    primitive: Literal["cylinder"]
    radius: float = Field(gt=0)
    height: float = Field(gt=0)
    segments: int = Field(32, ge=3)
    axis: Literal["x", "y", "z"] = "z"
    offset: Vec3 = (0.0, 0.0, 0.0)


class SphereGeometry(_Model):
    primitive: Literal["sphere"]
    radius: float = Field(gt=0)
    segments: int = Field(16, ge=3)
    rings: int = Field(8, ge=2)
    offset: Vec3 = (0.0, 0.0, 0.0)


class MeshGeometry(_Model):
    mesh: str
    scale: float = Field(1.0, gt=0)


class CompoundGeometry(_Model):
    primitive: Literal["compound"]
    children: list["Geometry"] = Field(min_length=1)


def _geometry_tag(v) -> str:
    if isinstance(v, dict):
        return v.get("primitive", "mesh")
    return getattr(v, "primitive", "mesh")


Geometry = Annotated[
    Union[
        Annotated[BoxGeometry, Tag("box")],
        Annotated[CylinderGeometry, Tag("cylinder")],
        Annotated[SphereGeometry, Tag("sphere")],
        Annotated[CompoundGeometry, Tag("compound")],
        Annotated[MeshGeometry, Tag("mesh")],
    ],
    Discriminator(_geometry_tag),
]
CompoundGeometry.model_rebuild()


class JointModel(_Model):
    kind: Literal["revolute", "prismatic"]
    axis: Vec3
    limits: tuple[float, float]

    @field_validator("axis")
    @classmethod
    def _nonzero(cls, v):
        if math.hypot(*v) == 0.0:
            raise ValueError("joint axis must be non-zero")
        return v

    @field_validator("limits")
    @classmethod
    def _ordered(cls, v):
        if v[0] > v[1]:
            raise ValueError("joint limits need lo <= hi")
        return v


class PartModel(_Model):
    name: str
    geometry: Geometry
    parent: Optional[str] = None
    origin: Pose6 = _ZERO6
    joint: Optional[JointModel] = None


class AssetModel(_Model):
    geometry: Optional[Geometry] = None
    parts: Optional[list[PartModel]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.geometry is None) == (self.parts is None):
            raise ValueError("an asset needs exactly one of 'geometry' or 'parts'")
        if self.parts is not None and not self.parts:
            raise ValueError("'parts' must not be empty")
        return self

    def part_names(self, asset_name: str) -> list[str]:
        return [asset_name] if self.parts is None else [p.name for p in self.parts]


class PlacementModel(_Model):
    object: str
    asset: Optional[str] = None
    parent: str = ROOT
    pose: Optional[Pose6] = None
    relationship: RelationshipSpec = RelationshipSpec()
    orientation: Optional[Literal["fixed", "uniform_yaw", "face_to"]] = None
    randomize_joints: bool = False
    reachability: bool = False
    reach_parts: tuple[str, ...] = ()
    max_retries: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _orientation_rule(self):
        if self.orientation == "face_to" and self.relationship.face_to is None:
            raise ValueError("orientation 'face_to' needs relationship.face_to")
        if self.relationship.face_to is not None and self.orientation not in (None, "face_to"):
            raise ValueError("relationship.face_to conflicts with orientation " + repr(self.orientation))
        if self.pose is not None and self.relationship.anchors:
            raise ValueError("a fixed pose cannot have anchors")
        return self

    @property
    def asset_name(self) -> str:
        return self.asset or self.object

    @property
    def orientation_rule(self) -> str:
        if self.orientation is not None:
            return self.orientation
        return "face_to" if self.relationship.face_to else "uniform_yaw"

    @property
    def fixed(self) -> bool:
        return self.pose is not None


class LinkModel(_Model):
    origin: Pose6 = _ZERO6
    joint: JointModel


class RobotModel(_Model):
    base_pose: Pose6 = _ZERO6
    links: list[LinkModel] = Field(min_length=1)
    tool: Pose6 = _ZERO6
    samples: int = Field(1_000_000, ge=1)
    resolution: float = Field(0.05, gt=0)
    angle_resolution_deg: float = Field(15.0, gt=0)
    seed: int = 0
    map: Optional[str] = None


class SceneConfig(_Model):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "scene"
    max_retries: int = Field(10, ge=0)
    collision_margin: float = Field(0.0, ge=0)
    assets: dict[str, AssetModel]
    placements: list[PlacementModel] = Field(min_length=1)
    robot: Optional[RobotModel] = None

    @model_validator(mode="after")
    def _references(self):
        placed: dict[str, list[str]] = {}

        def resolve(ref: str, where: str, allow_root: bool = False):
            if allow_root and ref == ROOT:
                return
            obj, _, part = ref.partition("/")
            if obj not in placed:
                raise ValueError(f"{where}: {ref!r} is not placed earlier (dependency order)")
            if part and part not in placed[obj]:
                raise ValueError(f"{where}: object {obj!r} has no part {part!r}")

        for i, p in enumerate(self.placements):
            where = f"placements.{i}"
            if p.object == ROOT or "/" in p.object:
                raise ValueError(f"{where}.object: invalid object name {p.object!r}")
            if p.object in placed:
                raise ValueError(f"{where}.object: duplicate object {p.object!r}")
            if p.asset_name not in self.assets:
                raise ValueError(f"{where}.asset: unknown asset {p.asset_name!r}")
            resolve(p.parent, f"{where}.parent", allow_root=True)
            if not p.fixed and p.parent == ROOT:
                raise ValueError(f"{where}.parent: sampled placements need a parent with a support surface")
            for a in p.relationship.anchors:
                resolve(a, f"{where}.relationship.anchors")
            if p.relationship.face_to:
                resolve(p.relationship.face_to, f"{where}.relationship.face_to")
            parts = self.assets[p.asset_name].part_names(p.object)
            for rp in p.reach_parts:
                if rp not in parts:
                    raise ValueError(f"{where}.reach_parts: unknown part {rp!r}")
            if (p.reachability or p.reach_parts) and self.robot is None:
                raise ValueError(f"{where}.reachability: reachability needs a 'robot' section")
            placed[p.object] = parts
        return self

    def placement(self, name: str) -> PlacementModel:
        for p in self.placements:
            if p.object == name:
                return p
        raise KeyError(name)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(document: str | dict) -> SceneConfig:
    """Validate a YAML/JSON text or an already-loaded mapping."""
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed document: {exc}") from None
    if not isinstance(document, dict):
        raise ConfigError("config document must be a mapping")
    try:
        return SceneConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> tuple[SceneConfig, Path]:
    """Parse a config file; returns the config and its directory for relative mesh paths."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text), path.parent


def serialize_config(config: SceneConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json", exclude_none=True), sort_keys=False)


def config_hash(config: SceneConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
