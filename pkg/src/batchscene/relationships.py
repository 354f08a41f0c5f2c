"""Spatial relationships compiled into sampleable regions and orientation rules.

A relationship places a target object on (or inside) its parent's support
surface, optionally constrained against already-placed anchor objects:

* one anchor: a ring sector around the anchor, opening along a direction,
  with the radial band chosen by ``distance_type``;
* two or more anchors (``middle``): the polygon spanned by the anchors.

The final region is always clipped to the support polygon.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np
import shapely
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import geometry as geo

log = logging.getLogger(__name__)

DIRECTIONS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "front": (0.0, -1.0),
    "back": (0.0, 1.0),
}
DEFAULT_THETA = math.pi / 4
MIDDLE_INFLATION = 0.1


class RelationshipSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["on", "inside"] = "on"
    anchors: tuple[str, ...] = ()
    direction: Optional[Union[Literal["left", "right", "front", "back", "null"], tuple[float, float]]] = None
    frame: Literal["global", "local"] = "global"
    distance: float = Field(0.0, ge=0.0)
    distance_type: Literal["greater", "less", "equal", "middle", "none"] = "none"
    angle_threshold: Optional[float] = None
    face_to: Optional[str] = None
    ratio_on_support: float = Field(0.0, ge=0.0, le=1.0)

    @field_validator("kind", mode="before")
    @classmethod
    def _yaml_on(cls, v):
        # YAML 1.1 reads a bare ``on`` as a boolean
        return "on" if v is True else v

    @field_validator("direction")
    @classmethod
    def _null_direction(cls, v):
        if v == "null":
            return None
        if isinstance(v, tuple) and math.hypot(*v) == 0.0:
            raise ValueError("direction vector must be non-zero")
        return v

    @field_validator("angle_threshold")
    @classmethod
    def _theta_range(cls, v):
        if v is not None and not 0.0 < v <= math.pi:
            raise ValueError("angle_threshold must lie in (0, pi]")
        return v

    @model_validator(mode="after")
    def _anchor_rules(self):
        n = len(self.anchors)
        if self.distance_type == "middle" and n < 2:
            raise ValueError("distance_type 'middle' needs at least 2 anchors")
        if n >= 2 and self.distance_type != "middle":
            raise ValueError("two or more anchors only support distance_type 'middle'")
        if self.distance_type in ("greater", "less", "equal") and n != 1:
            raise ValueError(f"distance_type {self.distance_type!r} needs exactly one anchor")
        if n == 0 and self.direction is not None:
            raise ValueError("a direction needs an anchor")
        if self.distance_type == "less" and self.distance <= 0.0:
            raise ValueError("distance_type 'less' needs distance > 0")
        return self

    @property
    def theta(self) -> float:
        """Half-angle of the allowed sector."""
        if self.direction is None:
            return math.pi
        return DEFAULT_THETA if self.angle_threshold is None else self.angle_threshold

    @property
    def constrained(self) -> bool:
        return len(self.anchors) > 0 and (
            self.distance_type != "none" or self.direction is not None
        )

    def radii(self) -> tuple[float, float]:
        return geo.annulus_radii(self.distance_type, self.distance)


@dataclass
class ConstraintRegion:
    """Sampling region in the support-surface frame.

    ``region`` is the shared region (instance 0's when ``per_instance``);
    ``regions_by_instance`` holds one geometry per instance otherwise.
    """

    region: object
    per_instance: bool = False
    regions_by_instance: Optional[np.ndarray] = None
    _batch_sampler: Optional[geo.RegionBatchSampler] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.per_instance and self.regions_by_instance is not None:
            raise ValueError("shared regions carry no per-instance list")
        if self.per_instance and self.regions_by_instance is None:
            raise ValueError("per-instance regions need regions_by_instance")

    @property
    def batch_sampler(self) -> geo.RegionBatchSampler:
        """Triangulation of every per-instance region, built on first use."""
        if self._batch_sampler is None:
            self._batch_sampler = geo.RegionBatchSampler(self.regions_by_instance)
        return self._batch_sampler

    def region_for(self, i: int):
        return self.regions_by_instance[i] if self.per_instance else self.region

    def empty_mask(self, n: int) -> np.ndarray:
        if self.per_instance:
            return shapely.is_empty(self.regions_by_instance) | (shapely.area(self.regions_by_instance) <= 0)
        return np.full(n, self.region.is_empty or geo.area(self.region) <= 0)


def resolve_direction(spec: RelationshipSpec, anchor_yaw=0.0) -> np.ndarray:
    """Unit direction in the support frame; (2,) for scalar yaw, (n, 2) for arrays."""
    if spec.direction is None:
        raise ValueError("relationship has no direction")
    if isinstance(spec.direction, str):
        v = np.array(DIRECTIONS[spec.direction])
    else:
        v = np.asarray(spec.direction, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("zero-length direction vector")
        v = v / norm
    if spec.frame == "global":
        return v if np.ndim(anchor_yaw) == 0 else np.tile(v, (len(anchor_yaw), 1))
    yaw = np.asarray(anchor_yaw, dtype=float)
    c, s = np.cos(yaw), np.sin(yaw)
    return np.stack([c * v[0] - s * v[1], s * v[0] + c * v[1]], axis=-1)


# shapely type ids of Polygon and MultiPolygon
_AREAL_TYPES = (3, 6)


def _areal(geoms) -> np.ndarray:
    """Object array of geometries with non-areal parts stripped."""
    out = np.asarray(geoms, dtype=object)
    for i in np.flatnonzero(~np.isin(shapely.get_type_id(out), _AREAL_TYPES)):
        out[i] = geo.polygonal(out[i])
    return out


def _sector_template(theta: float, min_r: float, max_r: float):
    """Shell (and optional hole) of a sector centred at the origin opening along +x."""
    if theta >= math.pi:
        shell = geo._circle_ring((0.0, 0.0), max_r, inscribed=True)
        hole = geo._circle_ring((0.0, 0.0), min_r, inscribed=False) if min_r > 0 else None
        return shell, hole
    return geo._sector_ring((0.0, 0.0), 0.0, theta, min_r, max_r), None


def _place(ring: np.ndarray, centers: np.ndarray, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles)[:, None], np.sin(angles)[:, None]
    x, y = ring[None, :, 0], ring[None, :, 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1) + centers[:, None, :]


def _middle_regions(anchors: np.ndarray):
    """Anchor polygons (angularly sorted about the centroid) or inflated segments."""
    n_inst, n = anchors.shape[:2]
    diffs = anchors[:, :, None, :] - anchors[:, None, :, :]
    spread = np.sqrt((diffs ** 2).sum(-1)).reshape(n_inst, -1).max(axis=1)
    out = np.empty(n_inst, dtype=object)
    degenerate = np.ones(n_inst, dtype=bool)
    if n >= 3:
        centroid = anchors.mean(axis=1, keepdims=True)
        ang = np.arctan2(anchors[..., 1] - centroid[..., 1], anchors[..., 0] - centroid[..., 0])
        order = np.argsort(ang, axis=1, kind="stable")
        ring = np.take_along_axis(anchors, order[..., None], axis=1)
        polys = shapely.polygons(ring)
        degenerate = shapely.area(polys) <= 1e-9 * np.maximum(spread, 1e-12) ** 2
        out[~degenerate] = shapely.make_valid(polys[~degenerate])
    if degenerate.any():
        idx = np.flatnonzero(degenerate)
        sub = anchors[idx]
        # farthest pair spans the collinear hull
        d2 = ((sub[:, :, None, :] - sub[:, None, :, :]) ** 2).sum(-1).reshape(len(idx), -1)
        flat = d2.argmax(axis=1)
        i, j = np.divmod(flat, n)
        seg = np.stack([sub[np.arange(len(idx)), i], sub[np.arange(len(idx)), j]], axis=1)
        lines = shapely.linestrings(seg)
        out[idx] = shapely.buffer(lines, MIDDLE_INFLATION * spread[idx], quad_segs=4)
    return out


def build_constraint_region(
    spec: RelationshipSpec,
    support,
    anchor_positions: np.ndarray | None = None,
    anchor_yaws: np.ndarray | None = None,
) -> ConstraintRegion:
    """Compile ``spec`` into a region for every instance.

    ``support`` is a :class:`~batchscene.geometry.SupportSurface` or a region.
    ``anchor_positions`` has shape (N, n_anchors, 2) in the support frame;
    ``anchor_yaws`` (N, n_anchors) is needed for local-frame directions.
    """
    S = support.polygon if isinstance(support, geo.SupportSurface) else support
    if not spec.constrained:
        return ConstraintRegion(S)
    anchors = np.asarray(anchor_positions, dtype=float)
    if anchors.ndim != 3 or anchors.shape[1] != len(spec.anchors):
        raise ValueError(f"anchor positions must be (N, {len(spec.anchors)}, 2), got {anchors.shape}")
    n_inst = anchors.shape[0]
    yaws = np.zeros(anchors.shape[:2]) if anchor_yaws is None else np.asarray(anchor_yaws, dtype=float)
    shared = bool(np.all(anchors == anchors[:1]))
    if spec.direction is not None and spec.frame == "local":
        shared &= bool(np.all(yaws == yaws[:1]))
    rows = np.arange(1 if shared else n_inst)

    if spec.distance_type == "middle":
        raw = _middle_regions(anchors[rows])
    else:
        min_r, max_r = spec.radii()
        if math.isinf(max_r):
            xmin, ymin, xmax, ymax = S.bounds if not S.is_empty else (0, 0, 0, 0)
            max_r = max(math.hypot(xmax - xmin, ymax - ymin), 1.01 * min_r, 1e-6)
        theta = spec.theta
        shell, hole = _sector_template(theta, min_r, max_r)
        if spec.direction is None:
            angles = np.zeros(len(rows))
        else:
            v = resolve_direction(spec, yaws[rows, 0])
            angles = np.arctan2(v[:, 1], v[:, 0])
        centers = anchors[rows, 0]
        raw = shapely.polygons(_place(shell, centers, angles))
        if hole is not None:
            raw = shapely.difference(raw, shapely.polygons(_place(hole, centers, angles)))
        else:
            bad = ~shapely.is_valid(raw)
            if bad.any():
                raw[bad] = shapely.make_valid(raw[bad])
    clipped = _areal(shapely.intersection(raw, S))
    if shared:
        return ConstraintRegion(clipped[0])
    return ConstraintRegion(clipped[0], True, clipped)


def apply_ratio_on_support(region: ConstraintRegion, footprint, ratio: float) -> ConstraintRegion:
    """Erode by ``ratio`` times half the shorter footprint edge."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio_on_support must lie in [0, 1]")
    fx, fy = float(footprint[0]), float(footprint[1])
    if fx <= 0 or fy <= 0:
        raise ValueError("footprint edges must be positive")
    r = ratio * 0.5 * min(fx, fy)
    if r == 0.0:
        return region
    if region.per_instance:
        eroded = _areal(shapely.buffer(region.regions_by_instance, -r, quad_segs=18, join_style="round"))
        return ConstraintRegion(eroded[0], True, eroded)
    return ConstraintRegion(geo.erode(region.region, r))


def face_to_yaw(object_position, target_position) -> np.ndarray | float:
    """Yaw turning the object's +x axis towards the target (vectorised)."""
    o = np.asarray(object_position, dtype=float)
    t = np.asarray(target_position, dtype=float)
    d = t - o
    yaw = np.arctan2(d[..., 1], d[..., 0])
    coincident = np.all(d == 0.0, axis=-1)
    if np.any(coincident):
        log.warning("face_to target coincides with object position; using yaw 0")
        yaw = np.where(coincident, 0.0, yaw)
    return float(yaw) if np.ndim(yaw) == 0 else yaw
