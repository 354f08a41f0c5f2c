"""Planar region kernel and triangle-mesh utilities.

Regions are shapely polygonal geometries (``Polygon`` or ``MultiPolygon``)
expressed in a support surface's local frame. All functions are pure; random
draws come from caller-supplied generators or uniform arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from shapely.geometry import MultiPolygon, Polygon

UP_ANGLE_TOL = math.radians(5.0)
MIN_SURFACE_AREA = 1e-4
ROOF_RAYS = 16
ARC_STEP = math.radians(5.0)
# max chord deviation of a 5-degree arc, per metre of radius
ARC_SAGITTA = 1.0 - math.cos(ARC_STEP / 2.0)
BOUNDARY_EPS = 1e-9


@dataclass
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle index out of range")

    def __len__(self) -> int:
        return len(self.triangles)

    @property
    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    def aabb(self) -> np.ndarray:
        if len(self.vertices) == 0:
            raise ValueError("empty mesh has no bounding box")
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def face_normals(self) -> np.ndarray:
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    def cleaned(self, min_area: float = 1e-14) -> "TriMesh":
        """Drop zero-area and repeated-index triangles."""
        t = self.triangles
        keep = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
        if len(t):
            keep &= self.areas() > min_area
        return TriMesh(self.vertices, t[keep])

    def transformed(self, T: np.ndarray) -> "TriMesh":
        T = np.asarray(T)
        return TriMesh(self.vertices @ T[:3, :3].T + T[:3, 3], self.triangles)

    @staticmethod
    def concatenate(meshes) -> "TriMesh":
        verts, tris, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            offset += len(m.vertices)
        if not verts:
            return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        return TriMesh(np.concatenate(verts), np.concatenate(tris))


# ---------------------------------------------------------------------------
# planar regions
# ---------------------------------------------------------------------------

def polygonal(geom) -> Polygon | MultiPolygon:
    """Keep only the areal parts of a geometry (drops touching lines/points)."""
    if geom is None or geom.is_empty:
        return MultiPolygon()
    if isinstance(geom, (Polygon, MultiPolygon)):
        return geom
    parts = [g for g in shapely.get_parts(geom) if isinstance(g, (Polygon, MultiPolygon))]
    if not parts:
        return MultiPolygon()
    return shapely.union_all(parts)


def rectangle(xmin: float, ymin: float, xmax: float, ymax: float) -> Polygon:
    return shapely.box(xmin, ymin, xmax, ymax)


def erode(region, r: float):
    """Inward offset by ``r``; arcs at reflex corners use 5-degree segments."""
    if r < 0:
        raise ValueError("erosion radius must be >= 0")
    if r == 0:
        return region
    return polygonal(shapely.buffer(region, -r, quad_segs=18, join_style="round"))


def intersect(a, b):
    return polygonal(shapely.intersection(a, b))


def arc_segments(span: float) -> int:
    return max(1, int(math.ceil(span / ARC_STEP - 1e-12)))


def annulus_radii(distance_type: str, d: float) -> tuple[float, float]:
    """(min_r, max_r) for a single-anchor distance rule; max_r may be ``inf``."""
    if distance_type == "less":
        return 0.0, d
    if distance_type == "greater":
        return d, math.inf
    if distance_type == "equal":
        half = max(0.05 * d, 0.01)
        return max(d - half, 0.0), d + half
    if distance_type == "none":
        return 0.0, math.inf
    raise ValueError(f"no annulus for distance_type {distance_type!r}")


def _sector_ring(center, direction_angle, theta, min_r, max_r):
    """Vertex ring of an annulus sector with ``theta < pi``.

    The outer arc is inscribed and the inner arc circumscribed, so the polygon
    never reaches past ``max_r`` nor inside ``min_r`` by more than the chord
    sagitta.
    """
    n = arc_segments(2 * theta)
    ang = direction_angle + np.linspace(-theta, theta, n + 1)
    outer = np.stack([np.cos(ang), np.sin(ang)], axis=1) * max_r
    if min_r > 0:
        step = 2 * theta / n
        inner_r = min_r / math.cos(step / 2)
        mid = direction_angle + np.linspace(-theta + step / 2, theta - step / 2, n)
        inner = [np.array([math.cos(a), math.sin(a)]) * min_r for a in (ang[-1],)]
        inner += list(np.stack([np.cos(mid[::-1]), np.sin(mid[::-1])], axis=1) * inner_r)
        inner += [np.array([math.cos(ang[0]), math.sin(ang[0])]) * min_r]
        ring = np.concatenate([outer, np.asarray(inner)])
    else:
        ring = np.concatenate([outer, np.zeros((1, 2))])
    return ring + np.asarray(center, dtype=float)


def _circle_ring(center, r, inscribed: bool):
    n = arc_segments(2 * math.pi)
    ang = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    rr = r if inscribed else r / math.cos(math.pi / n)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1) * rr + np.asarray(center, dtype=float)


def annulus_sector(center, v, theta: float, min_r: float, max_r: float, clip_bound=None) -> Polygon:
    """Polygonal ring sector around ``center`` opening along unit vector ``v``.

    ``theta`` is the half-angle; ``theta == pi`` gives a full ring (any ``v``).
    An infinite ``max_r`` is replaced by the diagonal of ``clip_bound``
    (``(xmin, ymin, xmax, ymax)``).
    """
    if not 0 < theta <= math.pi:
        raise ValueError(f"theta must be in (0, pi], got {theta}")
    if not 0 <= min_r < max_r:
        raise ValueError(f"need 0 <= min_r < max_r, got {min_r}, {max_r}")
    if math.isinf(max_r):
        if clip_bound is None:
            raise ValueError("unbounded max_r needs a clip bound")
        xmin, ymin, xmax, ymax = clip_bound
        max_r = max(math.hypot(xmax - xmin, ymax - ymin), min_r * 1.01)
    if theta >= math.pi:
        shell = _circle_ring(center, max_r, inscribed=True)
        holes = [_circle_ring(center, min_r, inscribed=False)[::-1]] if min_r > 0 else []
        return Polygon(shell, holes)
    angle = math.atan2(v[1], v[0])
    return shapely.make_valid(Polygon(_sector_ring(center, angle, theta, min_r, max_r)))


def area(region) -> float:
    return float(shapely.area(region))


def point_in_region(region, p) -> bool:
    return bool(points_in_region(region, np.asarray(p, dtype=float).reshape(1, 2))[0])


def points_in_region(region, points) -> np.ndarray:
    """Containment test with the boundary counted as inside (within 1e-9)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if region.is_empty:
        return np.zeros(len(pts), dtype=bool)
    inside = shapely.intersects_xy(region, pts[:, 0], pts[:, 1])
    if not inside.all():
        miss = ~inside
        inside[miss] = shapely.dwithin(region, shapely.points(pts[miss]), BOUNDARY_EPS)
    return inside


def triangulate(region) -> np.ndarray:
    """Constrained triangulation of a region, shape (T, 3, 2)."""
    if region.is_empty:
        return np.zeros((0, 3, 2))
    tris = shapely.get_parts(shapely.constrained_delaunay_triangles(region))
    coords = shapely.get_coordinates(tris).reshape(-1, 4, 2)[:, :3]
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    keep = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) > 0
    return coords[keep]


def _tri_areas(tris: np.ndarray) -> np.ndarray:
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _barycentric_points(tris: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    flip = u1 + u2 > 1.0
    u1 = np.where(flip, 1.0 - u1, u1)
    u2 = np.where(flip, 1.0 - u2, u2)
    a = tris[:, 0]
    return a + u1[:, None] * (tris[:, 1] - a) + u2[:, None] * (tris[:, 2] - a)


class TriangleSampler:
    """Exact area-uniform point sampler over a triangulated region.

    Each point consumes three uniforms: one picks a triangle by area, two
    place a barycentric point inside it.
    """

    def __init__(self, region):
        self.region = region
        self.triangles = triangulate(region)
        if len(self.triangles) == 0:
            raise ValueError("cannot sample from an empty region")
        cum = np.cumsum(_tri_areas(self.triangles))
        self.area = float(cum[-1])
        self._cdf = cum / cum[-1]

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1, 3)
        idx = np.minimum(np.searchsorted(self._cdf, u[:, 0], side="right"), len(self._cdf) - 1)
        return _barycentric_points(self.triangles[idx], u[:, 1], u[:, 2])

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        return self.from_uniforms(rng.random((k, 3)))


def sample_uniform(region, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` i.i.d. points uniform over the region's area, shape (k, 2)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return TriangleSampler(region).sample(k, rng)


def _convex_simple(regions: np.ndarray) -> np.ndarray:
    """Single polygons without holes whose area equals their hull's."""
    simple = (shapely.get_type_id(regions) == 3) & (shapely.get_num_interior_rings(regions) == 0)
    a = shapely.area(regions)
    hull = shapely.area(shapely.convex_hull(regions))
    return simple & (hull - a <= 1e-9 * np.maximum(hull, 1e-12))


def _fan_triangles(polys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fan triangulation of convex polygons: (T, 3, 2) corners and owner rows."""
    if len(polys) == 0:
        return np.zeros((0, 3, 2)), np.zeros(0, dtype=np.int64)
    coords, owner = shapely.get_coordinates(shapely.get_exterior_ring(polys), return_index=True)
    counts = np.bincount(owner, minlength=len(polys)) - 1      # drop the closing vertex
    starts = np.concatenate([[0], np.cumsum(counts + 1)[:-1]])
    n_tri = np.maximum(counts - 2, 0)
    tri_owner = np.repeat(np.arange(len(polys)), n_tri)
    k = np.arange(len(tri_owner)) - np.repeat(np.cumsum(n_tri) - n_tri, n_tri)
    base = starts[tri_owner]
    tris = np.stack([coords[base], coords[base + k + 1], coords[base + k + 2]], axis=1)
    return tris, tri_owner


class RegionBatchSampler:
    """Area-uniform sampling from many regions at once, one point per region.

    All regions are triangulated up front so repeated draws (retries) only
    pay for a binary search and a barycentric map.
    """

    def __init__(self, regions):
        regions = np.asarray(regions, dtype=object)
        n = len(regions)
        self.n = n
        ok = ~shapely.is_empty(regions) if n else np.zeros(0, dtype=bool)
        self._first = np.zeros(n, dtype=np.int64)
        self._last = np.full(n, -1, dtype=np.int64)  # empty rows keep last < first
        self._cum = np.zeros(0)
        self._coords = np.zeros((0, 3, 2))
        if ok.any():
            idx = np.flatnonzero(ok)
            convex = _convex_simple(regions[idx])
            fan_tris, fan_rows = _fan_triangles(regions[idx[convex]])
            rest = idx[~convex]
            tri_geoms, owner = shapely.get_parts(
                shapely.constrained_delaunay_triangles(regions[rest]), return_index=True
            )
            cdt_tris = shapely.get_coordinates(tri_geoms).reshape(-1, 4, 2)[:, :3]
            tris = np.concatenate([fan_tris, cdt_tris])
            rows = np.concatenate([idx[convex][fan_rows], rest[owner]])
            order = np.argsort(rows, kind="stable")
            rows = rows[order]
            self._coords = tris[order]
            self._cum = np.cumsum(_tri_areas(self._coords))
            self._first[:] = np.searchsorted(rows, np.arange(n), side="left")
            self._last[:] = np.searchsorted(rows, np.arange(n), side="right") - 1
        cum0 = np.concatenate([[0.0], self._cum])
        self._base = cum0[self._first]
        self.areas = cum0[self._last + 1] - self._base
        self.ok = self.areas > 0

    def sample(self, rows, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One point for each entry of ``rows`` driven by ``u`` (k, 3)."""
        rows = np.asarray(rows, dtype=np.int64)
        points = np.full((len(rows), 2), np.nan)
        ok = self.ok[rows]
        sel = np.flatnonzero(ok)
        r = rows[sel]
        targets = self._base[r] + u[sel, 0] * self.areas[r]
        pick = np.clip(np.searchsorted(self._cum, targets, side="right"), self._first[r], self._last[r])
        points[sel] = _barycentric_points(self._coords[pick], u[sel, 1], u[sel, 2])
        return points, ok


def sample_one_per_region(regions, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One uniform point from each region of an array, driven by ``u`` (n, 3).

    Returns ``(points, ok)``; ``ok`` is false where the region is empty.
    """
    sampler = RegionBatchSampler(regions)
    return sampler.sample(np.arange(sampler.n), u)


# ---------------------------------------------------------------------------
# support surfaces
# ---------------------------------------------------------------------------

@dataclass
class SupportSurface:
    polygon: Polygon | MultiPolygon
    frame: np.ndarray
    roofed: bool
    area: float

    @property
    def height(self) -> float:
        return float(self.frame[2, 3])


def _weld(vertices: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keys = np.round(vertices / tol).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    return inverse.reshape(-1)


def upward_ray_hits(origins: np.ndarray, mesh: TriMesh, min_gap: float = 1e-6) -> np.ndarray:
    """For each origin, whether a +z ray hits the mesh strictly above it."""
    c = mesh.corners
    if len(c) == 0:
        return np.zeros(len(origins), dtype=bool)
    p = origins[:, None, :2]
    a, b, d = c[None, :, 0], c[None, :, 1], c[None, :, 2]
    v0 = b[..., :2] - a[..., :2]
    v1 = d[..., :2] - a[..., :2]
    v2 = p - a[..., :2]
    den = v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]
    safe = np.where(np.abs(den) > 1e-15, den, 1.0)
    s = (v2[..., 0] * v1[..., 1] - v1[..., 0] * v2[..., 1]) / safe
    t = (v0[..., 0] * v2[..., 1] - v2[..., 0] * v0[..., 1]) / safe
    inside = (np.abs(den) > 1e-15) & (s >= 0) & (t >= 0) & (s + t <= 1)
    z = a[..., 2] + s * (b[..., 2] - a[..., 2]) + t * (d[..., 2] - a[..., 2])
    return np.any(inside & (z > origins[:, None, 2] + min_gap), axis=1)


def extract_support_surfaces(
    mesh: TriMesh,
    mode: str = "on",
    roof_mesh: TriMesh | None = None,
    angle_tol: float = UP_ANGLE_TOL,
    min_area: float = MIN_SURFACE_AREA,
    seed: int = 0,
) -> list[SupportSurface]:
    """Connected clusters of upward-facing triangles as planar support surfaces.

    ``mode`` is ``on`` (unroofed only), ``inside`` (roofed only) or ``all``.
    A surface is roofed when at least half of 16 upward rays cast from
    interior points hit ``roof_mesh`` (default: ``mesh`` itself). Surfaces are
    returned largest first.
    """
    if mode not in ("on", "inside", "all"):
        raise ValueError(f"unknown support mode {mode!r}")
    if len(mesh) == 0:
        raise ValueError("mesh has no triangles")
    roof_mesh = mesh if roof_mesh is None else roof_mesh
    normals = mesh.face_normals()
    up = np.flatnonzero(normals[:, 2] >= math.cos(angle_tol))
    if len(up) == 0:
        return []
    welded = _weld(mesh.vertices)[mesh.triangles[up]]
    edges = np.sort(np.concatenate([welded[:, [0, 1]], welded[:, [1, 2]], welded[:, [2, 0]]]), axis=1)
    owner = np.tile(np.arange(len(up)), 3)
    _, edge_id = np.unique(edges, axis=0, return_inverse=True)
    edge_id = edge_id.reshape(-1)
    order = np.argsort(edge_id, kind="stable")
    same = edge_id[order][1:] == edge_id[order][:-1]
    i, j = owner[order][:-1][same], owner[order][1:][same]
    adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(len(up), len(up)))
    n_comp, labels = connected_components(adj, directed=False)

    rng = np.random.default_rng(seed)
    corners = mesh.corners[up]
    tri_area = mesh.areas()[up]
    out = []
    for comp in range(n_comp):
        members = np.flatnonzero(labels == comp)
        if tri_area[members].sum() < min_area:
            continue
        polys = shapely.polygons(corners[members][:, :, :2])
        poly = polygonal(shapely.union_all(shapely.make_valid(polys)))
        poly = shapely.orient_polygons(poly) if hasattr(shapely, "orient_polygons") else poly
        a = area(poly)
        if a < min_area:
            continue
        centroids_z = corners[members][:, :, 2].mean(axis=1)
        h = float(np.average(centroids_z, weights=tri_area[members]))
        frame = np.eye(4)
        frame[2, 3] = h
        pts = TriangleSampler(poly).sample(ROOF_RAYS, rng)
        origins = np.column_stack([pts, np.full(len(pts), h)])
        roofed = bool(upward_ray_hits(origins, roof_mesh).mean() >= 0.5)
        if (mode == "on" and roofed) or (mode == "inside" and not roofed):
            continue
        out.append(SupportSurface(poly, frame, roofed, a))
    out.sort(key=lambda s: -s.area)
    return out
