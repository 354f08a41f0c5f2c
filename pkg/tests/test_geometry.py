import math

import numpy as np
import pytest
import shapely
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import MultiPolygon, Polygon

from batchscene import assets
from batchscene import geometry as geo
from batchscene import transforms as tf
import oracles as O


def signed_volume(mesh):
    c = mesh.corners
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


@pytest.mark.parametrize("mesh, volume, n_tris", [
    (assets.box((1, 2, 3)), 6.0, 12),
    (assets.cylinder(0.5, 2.0, segments=64), math.pi * 0.25 * 2.0, 256),
    (assets.sphere(1.0, segments=48, rings=24), 4.0 / 3.0 * math.pi, 2 * 48 * 23),
])
def test_primitives_closed_and_outward(mesh, volume, n_tris):
    assert len(mesh) == n_tris
    assert signed_volume(mesh) == pytest.approx(volume, rel=0.02)


def test_cylinder_axis_and_offset():
    m = assets.cylinder(0.02, 0.16, axis="x", offset=(1, 0, 0))
    np.testing.assert_allclose(m.aabb(), [[0.92, -0.02, -0.02], [1.08, 0.02, 0.02]], atol=1e-12)


def test_obj_roundtrip(tmp_path):
    m = assets.box((1, 1, 1), (0, 0, 0.5))
    assets.write_obj(tmp_path / "m.obj", m)
    back = assets.load_obj(tmp_path / "m.obj")
    np.testing.assert_allclose(back.corners, m.corners)


def test_obj_quads_fanned_and_errors(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    assert len(assets.load_obj(p)) == 2
    p.write_text("v 0 0 0\nv 1 0 0\nf 1 2 7\n")
    with pytest.raises(assets.MeshParseError, match=":3:"):
        assets.load_obj(p)
    p.write_text("v 0 0\n")
    with pytest.raises(assets.MeshParseError):
        assets.load_obj(p)
    with pytest.raises(FileNotFoundError):
        assets.load_obj(tmp_path / "missing.obj")


def test_cleaned_drops_degenerate_triangles():
    m = geo.TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], [[0, 1, 2], [0, 1, 3], [1, 1, 2]])
    assert len(m.cleaned()) == 1
    with pytest.raises(ValueError):
        geo.TriMesh([[0, 0, 0]], [[0, 1, 2]])


def test_erode_rectangle():
    r = geo.erode(geo.rectangle(0, 0, 2, 1), 0.25)
    assert r.bounds == pytest.approx((0.25, 0.25, 1.75, 0.75))
    assert geo.erode(geo.rectangle(0, 0, 2, 1), 0.6).is_empty
    with pytest.raises(ValueError):
        geo.erode(geo.rectangle(0, 0, 1, 1), -1)


def test_annulus_radii_case_table():
    assert geo.annulus_radii("less", 0.7) == (0.0, 0.7)
    lo, hi = geo.annulus_radii("greater", 0.5)
    assert lo == 0.5 and math.isinf(hi)
    lo, hi = geo.annulus_radii("equal", 1.0)
    assert lo < 1.0 < hi
    with pytest.raises(ValueError):
        geo.annulus_radii("middle", 1.0)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-math.pi, math.pi),
    st.floats(0.1, math.pi),
    st.floats(0.0, 1.0),
    st.floats(0.05, 1.5),
)
def test_sector_polygon_inside_exact_sector(angle, theta, min_r, width):
    max_r = min_r + width
    v = (math.cos(angle), math.sin(angle))
    poly = geo.annulus_sector((0.2, -0.1), v, theta, min_r, max_r)
    pts = geo.sample_uniform(poly, 2000, np.random.default_rng(0))
    assert O.annulus_sector_contains(pts, (0.2, -0.1), angle, theta, min_r, max_r, eps=1e-9).all()
    exact = theta * (max_r ** 2 - min_r ** 2)
    assert poly.area <= exact * (1 + 1e-9)
    # chords cut each arc by at most its sagitta
    assert exact - poly.area <= 2 * geo.ARC_SAGITTA * theta * (max_r ** 2 + min_r ** 2) + 1e-9


def test_annulus_sector_argument_checks():
    with pytest.raises(ValueError):
        geo.annulus_sector((0, 0), (1, 0), 0.0, 0, 1)
    with pytest.raises(ValueError):
        geo.annulus_sector((0, 0), (1, 0), 1.0, 1, 1)
    with pytest.raises(ValueError):
        geo.annulus_sector((0, 0), (1, 0), 1.0, 0, math.inf)
    ring = geo.annulus_sector((0, 0), (1, 0), 1.0, 0.5, math.inf, clip_bound=(0, 0, 3, 4))
    assert np.hypot(*np.asarray(ring.exterior.coords).T).max() == pytest.approx(5.0)


L_SHAPE = Polygon([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)])


@pytest.mark.parametrize("region", [
    geo.rectangle(-1, -0.5, 1, 0.5),
    L_SHAPE,
    geo.annulus_sector((0, 0), (0, 1), math.pi / 3, 0.5, 1.5),
    MultiPolygon([geo.rectangle(0, 0, 1, 1), geo.rectangle(2, 0, 3, 2)]),
])
def test_triangle_sampler_contained_and_uniform(region):
    pts = geo.sample_uniform(region, 10_000, np.random.default_rng(3))
    assert geo.points_in_region(region, pts).all()
    contains = lambda p: shapely.contains_xy(region, p[:, 0], p[:, 1])  # noqa: E731
    assert O.chi_square_uniform(pts, contains, region.bounds) > 0.01


def test_triangle_sampler_area_matches_monte_carlo():
    s = geo.TriangleSampler(L_SHAPE)
    contains = lambda p: shapely.contains_xy(L_SHAPE, p[:, 0], p[:, 1])  # noqa: E731
    est, se = O.monte_carlo_area(contains, L_SHAPE.bounds, 200_000, np.random.default_rng(0))
    assert abs(s.area - est) < 4 * se
    with pytest.raises(ValueError):
        geo.TriangleSampler(Polygon())
    with pytest.raises(ValueError):
        geo.sample_uniform(L_SHAPE, 0, np.random.default_rng(0))


def test_region_batch_sampler_mixed_regions():
    regions = np.array([
        geo.rectangle(0, 0, 1, 1),            # convex fan path
        L_SHAPE,                              # constrained triangulation path
        Polygon(),                            # empty
        geo.annulus_sector((0, 0), (1, 0), math.pi, 0.5, 1.0),  # ring with a hole
    ], dtype=object)
    sampler = geo.RegionBatchSampler(regions)
    assert sampler.ok.tolist() == [True, True, False, True]
    np.testing.assert_allclose(sampler.areas[[0, 1, 3]], [r.area for r in regions[[0, 1, 3]]], rtol=1e-9)
    rows = np.repeat(np.arange(4), 500)
    u = np.random.default_rng(0).random((len(rows), 3))
    pts, ok = sampler.sample(rows, u)
    assert not ok[rows == 2].any() and np.isnan(pts[rows == 2]).all()
    for k in (0, 1, 3):
        assert geo.points_in_region(regions[k], pts[rows == k]).all()


def test_fan_and_constrained_triangulation_agree_in_distribution():
    square = geo.rectangle(0, 0, 1, 1)
    u = np.random.default_rng(4).random((10_000, 3))
    fan, _ = geo.sample_one_per_region(np.array([square] * len(u), dtype=object), u)
    cdt = geo.TriangleSampler(square).from_uniforms(np.random.default_rng(5).random((10_000, 3)))
    assert O.chi_square_two_sample(fan, cdt, square.bounds) > 0.01


def test_polygonal_drops_lines():
    touching = shapely.intersection(geo.rectangle(0, 0, 1, 1), geo.rectangle(1, 0, 2, 1))
    assert geo.polygonal(touching).is_empty
    mixed = shapely.GeometryCollection([geo.rectangle(0, 0, 1, 1), shapely.LineString([(2, 2), (3, 3)])])
    assert geo.polygonal(mixed).area == pytest.approx(1.0)


def test_upward_rays():
    roof = assets.box((1, 1, 0.1), (0, 0, 1.0))
    origins = np.array([[0, 0, 0], [2, 0, 0], [0, 0, 1.5]], dtype=float)
    assert geo.upward_ray_hits(origins, roof).tolist() == [True, False, False]


def test_support_surfaces_of_open_box():
    floor = assets.box((1.0, 1.0, 0.02), (0, 0, 0.01))
    roof = assets.box((1.0, 1.0, 0.02), (0, 0, 0.51))
    shelf = geo.TriMesh.concatenate([floor, roof])
    on = geo.extract_support_surfaces(shelf, "on")
    inside = geo.extract_support_surfaces(shelf, "inside")
    assert len(on) == 1 and on[0].height == pytest.approx(0.52)
    assert len(inside) == 1 and inside[0].height == pytest.approx(0.02) and inside[0].roofed
    assert inside[0].area == pytest.approx(1.0)
    both = geo.extract_support_surfaces(shelf, "all")
    assert sorted(s.height for s in both) == pytest.approx([0.02, 0.52])
    with pytest.raises(ValueError):
        geo.extract_support_surfaces(shelf, "under")


def test_support_surfaces_follow_transforms():
    top = geo.extract_support_surfaces(assets.box((2, 1, 0.5)).transformed(tf.translation([0, 0, 1])[0]))
    assert top[0].height == pytest.approx(1.25)
    assert top[0].polygon.bounds == pytest.approx((-1, -0.5, 1, 0.5))
