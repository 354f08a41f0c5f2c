"""Batched scene generation: initialize once, then sample, check and retry per object.

``initialize`` does the one-time work (assets, support surfaces, collision
world, reachability map). ``generate`` places every configured object in
all ``N`` instances at once; instances that fail a check are resampled as a
shrinking subset until they succeed or run out of retries.
"""

from __future__ import annotations

import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely

from . import geometry as geo
from . import rng as rngs
from . import transforms as tf
from .assets import Asset, asset_from_spec
from .collision import CollisionWorld
from .config import ROOT, ConfigError, PlacementModel, SceneConfig
from .reachability import ChainLink, KinematicChain, ReachMap4D, build_map, load_map, placement_filter
from .relationships import ConstraintRegion, apply_ratio_on_support, build_constraint_region
from .sampler import SampleCache, rest_pose, region_fingerprint, sample_orientations, sample_positions
from .scene_graph import BatchedSceneGraph, JointSpec

log = logging.getLogger(__name__)

INIT_STAGES = ("asset-load", "surface-extraction", "sampler-init", "collision-init", "reachability-init")
GENERATION_STAGES = ("sampling", "collision-check", "reachability-check", "retry-overhead")
STAGES = INIT_STAGES + GENERATION_STAGES + ("export",)

# stream purposes for the per-instance counter-based draws
_POSITION, _YAW, _JOINTS, _CACHE = 1, 2, 3, 4


class Timings(dict):
    """Seconds per stage."""

    @contextmanager
    def __call__(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self[stage] = self.get(stage, 0.0) + time.perf_counter() - t0

    def total(self, stages=None) -> float:
        return float(sum(v for k, v in self.items() if stages is None or k in stages))


@dataclass
class ObjectStats:
    retry_histogram: np.ndarray   # index r: placed at retry r; last entry: failed
    check_subsets: list[int]      # instances checked per round
    empty_region: int = 0


@dataclass
class GenerationReport:
    mode: str
    seed: int
    batch_size: int
    valid_mask: np.ndarray
    objects: dict[str, ObjectStats]
    timings: Timings
    wall_time: float

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())

    @property
    def generation_time(self) -> float:
        return self.timings.total(GENERATION_STAGES)

    @property
    def valid_per_second(self) -> float:
        """Valid scenes per second of this run's wall time (init included for cold runs)."""
        return self.n_valid / self.wall_time if self.wall_time > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "n_valid": self.n_valid,
            "wall_time": self.wall_time,
            "valid_per_second": self.valid_per_second,
            "timings": {k: self.timings.get(k, 0.0) for k in STAGES if k in self.timings},
            "objects": {
                name: {
                    "retry_histogram": s.retry_histogram.tolist(),
                    "check_subsets": list(s.check_subsets),
                    "empty_region": s.empty_region,
                }
                for name, s in self.objects.items()
            },
        }


@dataclass
class PlacementStep:
    index: int
    spec: PlacementModel
    asset: Asset
    gids: dict[str, int]               # part name -> collision geometry id
    parent_node: str
    surface: geo.SupportSurface | None
    base_region: object | None         # support polygon after ratio erosion
    z_offset: float
    rest_orientation: np.ndarray
    cache: SampleCache
    shared_region: ConstraintRegion | None
    shared_fingerprint: str | None
    fixed_pose: np.ndarray | None
    max_retries: int

    @property
    def name(self) -> str:
        return self.spec.object

    def node_name(self, part: str) -> str:
        return self.name if part == self.asset.root.name else f"{self.name}/{part}"


@dataclass
class EngineState:
    config: SceneConfig
    batch_size: int
    steps: list[PlacementStep]
    world: CollisionWorld
    reach_map: ReachMap4D | None
    robot_base: np.ndarray | None
    init_timings: Timings
    next_seed: int = 0
    generations: int = 0
    assets: dict[str, Asset] = field(default_factory=dict)


def _node_ref(ref: str, config: SceneConfig, assets: dict[str, Asset]) -> str:
    """Graph node name for an ``object`` or ``object/part`` reference."""
    if ref == ROOT:
        return ROOT
    obj, _, part = ref.partition("/")
    root = assets[config.placement(obj).asset_name].root.name
    return obj if not part or part == root else f"{obj}/{part}"


def _chain_from_config(robot) -> KinematicChain:
    links = []
    for link in robot.links:
        axis = np.asarray(link.joint.axis, dtype=float)
        joint = JointSpec(link.joint.kind, tuple(axis / np.linalg.norm(axis)), tuple(link.joint.limits))
        links.append(ChainLink(tf.from_xyz_rpy(link.origin), joint))
    return KinematicChain(links, tf.from_xyz_rpy(robot.tool))


def initialize(config: SceneConfig, batch_size: int, base_dir=None, refill_factor: int = 4,
               cache_enabled: bool = True) -> EngineState:
    """One-time setup for generating ``batch_size`` instances of ``config``."""
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    base_dir = Path(base_dir) if base_dir is not None else None
    timings = Timings()
    world = CollisionWorld(batch_size, config.collision_margin)

    with timings("asset-load"):
        assets = {}
        for p in config.placements:
            if p.asset_name not in assets:
                spec = config.assets[p.asset_name].model_dump(mode="python", exclude_none=True)
                try:
                    assets[p.asset_name] = asset_from_spec(p.asset_name, spec, base_dir)
                except (OSError, ValueError) as exc:
                    raise ConfigError(f"asset {p.asset_name!r}: {exc}") from exc

    surfaces: dict[tuple, list[geo.SupportSurface]] = {}
    steps = []
    for k, p in enumerate(config.placements):
        asset = assets[p.asset_name]
        surface = base_region = None
        parent_node = _node_ref(p.parent, config, assets)
        if not p.fixed:
            with timings("surface-extraction"):
                parent_obj, _, parent_part = p.parent.partition("/")
                parent_asset = assets[config.placement(parent_obj).asset_name]
                part = parent_asset.part(parent_part) if parent_part else parent_asset.root
                key = (parent_asset.name, part.name, p.relationship.kind)
                if key not in surfaces:
                    # roof test against the whole assembled asset seen from this part's frame
                    to_part = tf.invert(parent_asset.part_transforms()[part.name])[0]
                    roof = parent_asset.assembled().transformed(to_part)
                    surfaces[key] = geo.extract_support_surfaces(part.mesh, p.relationship.kind, roof)
                if not surfaces[key]:
                    raise ConfigError(
                        f"placement {p.object!r}: parent {p.parent!r} has no "
                        f"{'roofed' if p.relationship.kind == 'inside' else 'open'} support surface")
                surface = surfaces[key][0]
        with timings("sampler-init"):
            assembled = asset.assembled()
            rest_q, z_off = rest_pose(assembled)
            shared = fp = None
            if surface is not None:
                aabb = assembled.aabb()
                footprint = aabb[1, :2] - aabb[0, :2]
                base = ConstraintRegion(surface.polygon)
                if p.relationship.ratio_on_support > 0:
                    base = apply_ratio_on_support(base, footprint, p.relationship.ratio_on_support)
                base_region = base.region
                if not p.relationship.constrained:
                    shared = ConstraintRegion(base_region)
                    if not base_region.is_empty:
                        fp = region_fingerprint(base_region)
            cache = SampleCache(refill_factor, enabled=cache_enabled)
            if shared is not None and fp is not None:
                cache.refill(shared.region, 1, fp)   # triangulate once up front
        with timings("collision-init"):
            gids = {}
            for part in asset.parts:
                gid = world.register_geometry(part.mesh, key=(asset.name, part.name))
                gids[part.name] = gid
                node = p.object if part is asset.root else f"{p.object}/{part.name}"
                world.add_object(node, gid)
        steps.append(PlacementStep(
            k, p, asset, gids, parent_node, surface, base_region, z_off, rest_q, cache, shared, fp,
            tf.from_xyz_rpy(p.pose) if p.fixed else None,
            config.max_retries if p.max_retries is None else p.max_retries,
        ))

    reach_map = robot_base = None
    if config.robot is not None:
        with timings("reachability-init"):
            robot = config.robot
            robot_base = tf.from_xyz_rpy(robot.base_pose)
            if robot.map is not None:
                path = Path(robot.map)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                reach_map = load_map(path)
            else:
                reach_map = build_map(
                    _chain_from_config(robot), robot.samples, robot.resolution,
                    math.radians(robot.angle_resolution_deg), np.random.default_rng(robot.seed),
                )
    return EngineState(config, batch_size, steps, world, reach_map, robot_base, timings, assets=assets)


def _build_graph(state: EngineState) -> BatchedSceneGraph:
    graph = BatchedSceneGraph(state.batch_size, ROOT)
    n = state.batch_size
    for step in state.steps:
        for part in step.asset.parts:
            node = step.node_name(part.name)
            parent = step.parent_node if part.parent is None else step.node_name(part.parent)
            nid = graph.add_node(parent, node, step.gids[part.name], part.joint)
            graph.placed[nid][:] = False
            if part.parent is not None and not np.allclose(part.origin, np.eye(4)):
                graph.set_edge_batch(parent, node, np.broadcast_to(part.origin, (n, 4, 4)))
    return graph


def _anchor_frames(graph, refs, support_world_inv, rows):
    pos = np.empty((len(rows), len(refs), 2))
    yaw = np.empty((len(rows), len(refs)))
    for j, ref in enumerate(refs):
        local = support_world_inv[rows] @ graph.world_poses(ref)[rows]
        pos[:, j] = local[:, :2, 3]
        yaw[:, j] = np.arctan2(local[:, 1, 0], local[:, 0, 0])
    return pos, yaw


def _constraint(state, step, graph, support_world_inv, alive_idx) -> ConstraintRegion:
    if step.shared_region is not None:
        return step.shared_region
    cfg = state.config
    spec = step.spec.relationship
    refs = [_node_ref(a, cfg, state.assets) for a in spec.anchors]
    pos, yaw = _anchor_frames(graph, refs, support_world_inv, alive_idx)
    built = build_constraint_region(spec, step.base_region, pos, yaw)
    if not built.per_instance:
        return built
    full = np.full(state.batch_size, shapely.Polygon(), dtype=object)
    full[alive_idx] = built.regions_by_instance
    return ConstraintRegion(built.region, True, full)


def _place_step(state: EngineState, step: PlacementStep, graph: BatchedSceneGraph,
                alive: np.ndarray, seed: int, timings: Timings) -> ObjectStats:
    n = state.batch_size
    world = state.world
    k = step.index
    parts = step.asset.parts
    stats = ObjectStats(np.zeros(step.max_retries + 2, dtype=np.int64), [])
    edges = np.empty((n, 4, 4))
    poses = np.empty((n, 4, 4))
    joint_parts = [p for p in parts if p.joint is not None]
    q = {p.name: np.full(n, p.joint.limits[0]) for p in joint_parts}
    alive_idx = np.flatnonzero(alive)

    if step.fixed_pose is not None:
        done = alive_idx
        parent_world = graph.world_poses(step.parent_node)
        edges[done] = step.fixed_pose
        poses[done] = parent_world[done] @ step.fixed_pose
        stats.retry_histogram[0] = len(done)
    else:
        with timings("sampling"):
            support_world = graph.world_poses(step.parent_node) @ step.surface.frame
            support_inv = tf.invert(support_world)
            constraint = _constraint(state, step, graph, support_inv, alive_idx)
            empty = constraint.empty_mask(n) if constraint.per_instance else np.full(n, constraint.region.is_empty)
        pending = alive_idx[~empty[alive_idx]]
        stats.empty_region = int(len(alive_idx) - len(pending))
        fp = step.shared_fingerprint if constraint is step.shared_region else None
        rule = step.spec.orientation_rule
        face_ref = (_node_ref(step.spec.relationship.face_to, state.config, state.assets)
                    if rule == "face_to" else None)
        done_chunks = []
        part_buf = tf.identity(n)
        for r in range(step.max_retries + 1):
            if len(pending) == 0:
                break
            m = len(pending)
            stats.check_subsets.append(m)
            with timings("sampling"):
                u = rngs.instance_uniforms(seed, (k, r, _POSITION), pending, 3) if constraint.per_instance else None
                pos = sample_positions(constraint, support_world, pending,
                                       None if constraint.per_instance else step.cache, u, fp)
                if rule == "face_to":
                    target = (support_inv[pending] @ graph.world_poses(face_ref)[pending])[:, :2, 3]
                    yaw = sample_orientations(rule, m, positions=pos.local, targets=target)
                else:
                    uy = rngs.instance_uniforms(seed, (k, r, _YAW), pending, 1) if rule == "uniform_yaw" else None
                    yaw = sample_orientations(rule, m, uy)
                local = tf.xyz_yaw(np.column_stack([pos.local, np.full(m, step.z_offset)]), yaw)
                edge = step.surface.frame @ local
                obj_world = support_world[pending] @ local
                q_try = {}
                if step.spec.randomize_joints and joint_parts:
                    uj = rngs.instance_uniforms(seed, (k, r, _JOINTS), pending, len(joint_parts))
                    for j, p in enumerate(joint_parts):
                        lo, hi = p.joint.limits
                        q_try[p.name] = lo + uj[:, j] * (hi - lo)
                part_T = step.asset.part_transforms(q_try, m)
            free = pos.ok.copy()
            with timings("collision-check"):
                for p in parts:
                    active = np.flatnonzero(free)
                    if len(active) == 0:
                        break
                    part_buf[pending[active]] = obj_world[active] @ part_T[p.name][active]
                    mask = world.check_batch(step.gids[p.name], part_buf, pending[active])
                    free[active] &= mask.free[pending[active]]
            if step.spec.reachability or step.spec.reach_parts:
                with timings("reachability-check"):
                    active = np.flatnonzero(free)
                    if len(active):
                        frames = [obj_world[active] @ part_T[name][active] for name in step.spec.reach_parts]
                        base = np.broadcast_to(state.robot_base, (len(active), 4, 4))
                        free[active] &= placement_filter(state.reach_map, base, obj_world[active], frames)
            with timings("retry-overhead"):
                ok_idx = pending[free]
                edges[ok_idx] = edge[free]
                poses[ok_idx] = obj_world[free]
                for name, values in q_try.items():
                    q[name][ok_idx] = values[free]
                stats.retry_histogram[r] = len(ok_idx)
                done_chunks.append(ok_idx)
                pending = pending[~free]
        with timings("retry-overhead"):
            failed = np.union1d(pending, alive_idx[empty[alive_idx]])
            stats.retry_histogram[-1] = len(failed)
            alive[failed] = False
            done = np.sort(np.concatenate(done_chunks)) if done_chunks else np.empty(0, dtype=np.int64)

    with timings("retry-overhead"):
        if len(done):
            root = step.name
            graph.set_edge_batch(step.parent_node, root, edges[done], done)
            for p in joint_parts:
                graph.set_joint_states(step.node_name(p.name), q[p.name][done], done)
            part_T = step.asset.part_transforms({name: v[done] for name, v in q.items()}, len(done))
            for p in parts:
                node = step.node_name(p.name)
                graph.placed[graph.node(node)][done] = True
                world.update_transforms(node, poses[done] @ part_T[p.name], done)
                world.set_enabled(node, done, True)
    return stats


def generate(state: EngineState, seed: int | None = None, n: int | None = None,
             mode: str = "warm") -> tuple[BatchedSceneGraph, GenerationReport]:
    """Generate one batch. ``seed`` defaults to the state's next seed."""
    if n is not None and n != state.batch_size:
        raise ValueError(f"state was initialized for N={state.batch_size}, got N={n}")
    seed = state.next_seed if seed is None else int(seed)
    state.next_seed = seed + 1
    t0 = time.perf_counter()
    timings = Timings()
    with timings("retry-overhead"):
        state.world.disable_all()
        graph = _build_graph(state)
        for step in state.steps:
            step.cache.reset(rngs.generator(seed, step.index, _CACHE))
    alive = np.ones(state.batch_size, dtype=bool)
    objects = {}
    for step in state.steps:
        objects[step.name] = _place_step(state, step, graph, alive, seed, timings)
    graph.valid_mask[:] = alive
    state.generations += 1
    wall = time.perf_counter() - t0
    return graph, GenerationReport(mode, seed, state.batch_size, alive.copy(), objects, timings, wall)


def cold_generate(config: SceneConfig, batch_size: int, seed: int, base_dir=None, **kwargs):
    """Initialize and generate; the report covers both phases."""
    t0 = time.perf_counter()
    state = initialize(config, batch_size, base_dir, **kwargs)
    graph, report = generate(state, seed, mode="cold")
    report.timings.update({k: v for k, v in state.init_timings.items()})
    report.wall_time = time.perf_counter() - t0
    return state, graph, report


def warm_generate(state: EngineState, seed: int | None = None, n: int | None = None):
    """Generation only, reusing every structure built by :func:`initialize`."""
    return generate(state, seed, n, mode="warm")


@dataclass
class BaselineResult:
    graphs: list[BatchedSceneGraph]
    reports: list[GenerationReport]
    wall_time: float

    @property
    def n_valid(self) -> int:
        return sum(r.n_valid for r in self.reports)

    @property
    def per_scene_times(self) -> list[float]:
        return [r.wall_time for r in self.reports]


def sequential_baseline(config: SceneConfig, n: int, seed: int, base_dir=None) -> BaselineResult:
    """The whole pipeline once per scene at batch size 1; scene ``j`` uses ``seed + j``.

    Runs single-threaded and shares nothing between scenes.
    """
    import numba

    threads = numba.get_num_threads()
    numba.set_num_threads(1)
    try:
        t0 = time.perf_counter()
        graphs, reports = [], []
        for j in range(n):
            _, graph, report = cold_generate(config, 1, seed + j, base_dir)
            graphs.append(graph)
            reports.append(report)
        return BaselineResult(graphs, reports, time.perf_counter() - t0)
    finally:
        numba.set_num_threads(threads)
