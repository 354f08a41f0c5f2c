"""Numba kernels for the narrow phase: dual-BVH descent and triangle tests."""

from __future__ import annotations

import math
import os

import numpy as np
from numba import config, njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

STACK_SIZE = 512
# signed plane distances below this are snapped to zero
PLANE_EPS = 1e-12
# intervals must overlap by more than this to count (touching is free)
OVERLAP_EPS = 1e-12


@njit(cache=True, inline="always")
def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@njit(cache=True, inline="always")
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True, inline="always")
def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


@njit(cache=True)
def _interval(p0, p1, p2, d0, d1, d2):
    # returns (lo, hi, ok); ok=False when the triangle lies in the plane
    if d0 * d1 > 0.0:
        a = p2 + (p0 - p2) * d2 / (d2 - d0)
        b = p2 + (p1 - p2) * d2 / (d2 - d1)
    elif d0 * d2 > 0.0:
        a = p1 + (p0 - p1) * d1 / (d1 - d0)
        b = p1 + (p2 - p1) * d1 / (d1 - d2)
    elif d1 * d2 > 0.0 or d0 != 0.0:
        a = p0 + (p1 - p0) * d0 / (d0 - d1)
        b = p0 + (p2 - p0) * d0 / (d0 - d2)
    elif d1 != 0.0:
        a = p1 + (p0 - p1) * d1 / (d1 - d0)
        b = p1 + (p2 - p1) * d1 / (d1 - d2)
    elif d2 != 0.0:
        a = p2 + (p0 - p2) * d2 / (d2 - d0)
        b = p2 + (p1 - p2) * d2 / (d2 - d1)
    else:
        return 0.0, 0.0, False
    if a > b:
        a, b = b, a
    return a, b, True


@njit(cache=True)
def tri_tri_intersect(v0, v1, v2, u0, u1, u2):
    """Interval-overlap triangle test; coplanar or merely touching pairs are free."""
    n1 = _cross(_sub(v1, v0), _sub(v2, v0))
    l1 = math.sqrt(_dot(n1, n1))
    if l1 == 0.0:
        return False
    c1 = _dot(n1, v0)
    du0 = (_dot(n1, u0) - c1) / l1
    du1 = (_dot(n1, u1) - c1) / l1
    du2 = (_dot(n1, u2) - c1) / l1
    if abs(du0) < PLANE_EPS:
        du0 = 0.0
    if abs(du1) < PLANE_EPS:
        du1 = 0.0
    if abs(du2) < PLANE_EPS:
        du2 = 0.0
    # no strict sign change: the pair is apart or only touches
    if (du0 >= 0.0 and du1 >= 0.0 and du2 >= 0.0) or (du0 <= 0.0 and du1 <= 0.0 and du2 <= 0.0):
        return False

    n2 = _cross(_sub(u1, u0), _sub(u2, u0))
    l2 = math.sqrt(_dot(n2, n2))
    if l2 == 0.0:
        return False
    c2 = _dot(n2, u0)
    dv0 = (_dot(n2, v0) - c2) / l2
    dv1 = (_dot(n2, v1) - c2) / l2
    dv2 = (_dot(n2, v2) - c2) / l2
    if abs(dv0) < PLANE_EPS:
        dv0 = 0.0
    if abs(dv1) < PLANE_EPS:
        dv1 = 0.0
    if abs(dv2) < PLANE_EPS:
        dv2 = 0.0
    if (dv0 >= 0.0 and dv1 >= 0.0 and dv2 >= 0.0) or (dv0 <= 0.0 and dv1 <= 0.0 and dv2 <= 0.0):
        return False

    d = _cross(n1, n2)
    ax, ay, az = abs(d[0]), abs(d[1]), abs(d[2])
    k = 0
    if ay > ax and ay >= az:
        k = 1
    elif az > ax and az > ay:
        k = 2
    lo1, hi1, ok1 = _interval(v0[k], v1[k], v2[k], dv0, dv1, dv2)
    lo2, hi2, ok2 = _interval(u0[k], u1[k], u2[k], du0, du1, du2)
    if not (ok1 and ok2):
        return False
    return min(hi1, hi2) - max(lo1, lo2) > OVERLAP_EPS


@njit(cache=True)
def _point_tri_dist2(p, a, b, c):
    ab = _sub(b, a)
    ac = _sub(c, a)
    ap = _sub(p, a)
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return _dot(ap, ap)
    bp = _sub(p, b)
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    if d3 >= 0.0 and d4 <= d3:
        return _dot(bp, bp)
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        q = (a[0] + v * ab[0], a[1] + v * ab[1], a[2] + v * ab[2])
        r = _sub(p, q)
        return _dot(r, r)
    cp = _sub(p, c)
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    if d6 >= 0.0 and d5 <= d6:
        return _dot(cp, cp)
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        q = (a[0] + w * ac[0], a[1] + w * ac[1], a[2] + w * ac[2])
        r = _sub(p, q)
        return _dot(r, r)
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        q = (b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2]))
        r = _sub(p, q)
        return _dot(r, r)
    den = 1.0 / (va + vb + vc)
    v = vb * den
    w = vc * den
    q = (a[0] + ab[0] * v + ac[0] * w, a[1] + ab[1] * v + ac[1] * w, a[2] + ab[2] * v + ac[2] * w)
    r = _sub(p, q)
    return _dot(r, r)


@njit(cache=True)
def _seg_seg_dist2(p1, q1, p2, q2):
    d1 = _sub(q1, p1)
    d2 = _sub(q2, p2)
    r = _sub(p1, p2)
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    s = 0.0
    t = 0.0
    if a <= 1e-30 and e <= 1e-30:
        return _dot(r, r)
    if a <= 1e-30:
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = _dot(d1, r)
        if e <= 1e-30:
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = _dot(d1, d2)
            den = a * e - b * b
            if den != 0.0:
                s = min(max((b * f - c * e) / den, 0.0), 1.0)
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    c1 = (p1[0] + d1[0] * s, p1[1] + d1[1] * s, p1[2] + d1[2] * s)
    c2 = (p2[0] + d2[0] * t, p2[1] + d2[1] * t, p2[2] + d2[2] * t)
    w = _sub(c1, c2)
    return _dot(w, w)


@njit(cache=True)
def tri_tri_within(v0, v1, v2, u0, u1, u2, margin):
    """True when the triangles intersect or come closer than ``margin``."""
    if tri_tri_intersect(v0, v1, v2, u0, u1, u2):
        return True
    m2 = margin * margin
    vs = (v0, v1, v2)
    us = (u0, u1, u2)
    for i in range(3):
        if _point_tri_dist2(vs[i], u0, u1, u2) < m2:
            return True
        if _point_tri_dist2(us[i], v0, v1, v2) < m2:
            return True
    for i in range(3):
        for j in range(3):
            if _seg_seg_dist2(vs[i], vs[(i + 1) % 3], us[j], us[(j + 1) % 3]) < m2:
                return True
    return False


@njit(cache=True, inline="always")
def _xf(R, t, p):
    return (
        R[0, 0] * p[0] + R[0, 1] * p[1] + R[0, 2] * p[2] + t[0],
        R[1, 0] * p[0] + R[1, 1] * p[1] + R[1, 2] * p[2] + t[1],
        R[2, 0] * p[0] + R[2, 1] * p[1] + R[2, 2] * p[2] + t[2],
    )


@njit(cache=True, inline="always")
def _tri_boxes_apart(v0, v1, v2, u0, u1, u2, margin):
    for k in range(3):
        if min(v0[k], v1[k], v2[k]) > max(u0[k], u1[k], u2[k]) + margin:
            return True
        if min(u0[k], u1[k], u2[k]) > max(v0[k], v1[k], v2[k]) + margin:
            return True
    return False


@njit(cache=True)
def pair_hit(rel, na0, nb0, ta0, tb0, node_min, node_max, left, right, start, count, tris, margin):
    """Dual descent of two BVHs; ``rel`` maps geometry A's frame into B's."""
    R = rel[:3, :3]
    t = rel[:3, 3]
    stack = np.empty((STACK_SIZE, 2), dtype=np.int64)
    stack[0, 0] = na0
    stack[0, 1] = nb0
    sp = 1
    while sp > 0:
        sp -= 1
        a = stack[sp, 0]
        b = stack[sp, 1]
        # A's box carried into B's frame as a conservative AABB
        ha = (
            0.5 * (node_max[a, 0] - node_min[a, 0]),
            0.5 * (node_max[a, 1] - node_min[a, 1]),
            0.5 * (node_max[a, 2] - node_min[a, 2]),
        )
        ca = _xf(R, t, (
            0.5 * (node_max[a, 0] + node_min[a, 0]),
            0.5 * (node_max[a, 1] + node_min[a, 1]),
            0.5 * (node_max[a, 2] + node_min[a, 2]),
        ))
        apart = False
        for k in range(3):
            hk = abs(R[k, 0]) * ha[0] + abs(R[k, 1]) * ha[1] + abs(R[k, 2]) * ha[2]
            cb = 0.5 * (node_max[b, k] + node_min[b, k])
            hb = 0.5 * (node_max[b, k] - node_min[b, k])
            if abs(ca[k] - cb) > hk + hb + margin:
                apart = True
                break
        if apart:
            continue
        leaf_a = count[a] > 0
        leaf_b = count[b] > 0
        if leaf_a and leaf_b:
            for i in range(ta0 + start[a], ta0 + start[a] + count[a]):
                v0 = _xf(R, t, (tris[i, 0, 0], tris[i, 0, 1], tris[i, 0, 2]))
                v1 = _xf(R, t, (tris[i, 1, 0], tris[i, 1, 1], tris[i, 1, 2]))
                v2 = _xf(R, t, (tris[i, 2, 0], tris[i, 2, 1], tris[i, 2, 2]))
                for j in range(tb0 + start[b], tb0 + start[b] + count[b]):
                    u0 = (tris[j, 0, 0], tris[j, 0, 1], tris[j, 0, 2])
                    u1 = (tris[j, 1, 0], tris[j, 1, 1], tris[j, 1, 2])
                    u2 = (tris[j, 2, 0], tris[j, 2, 1], tris[j, 2, 2])
                    if _tri_boxes_apart(v0, v1, v2, u0, u1, u2, margin):
                        continue
                    if margin > 0.0:
                        if tri_tri_within(v0, v1, v2, u0, u1, u2, margin):
                            return True
                    elif tri_tri_intersect(v0, v1, v2, u0, u1, u2):
                        return True
            continue
        if sp + 2 > STACK_SIZE:
            raise RuntimeError("BVH traversal stack overflow")
        split_a = not leaf_a
        if split_a and not leaf_b:
            size_a = ha[0] + ha[1] + ha[2]
            size_b = 0.5 * (node_max[b, 0] - node_min[b, 0] + node_max[b, 1]
                            - node_min[b, 1] + node_max[b, 2] - node_min[b, 2])
            split_a = size_a >= size_b
        if split_a:
            stack[sp, 0] = na0 + left[a]
            stack[sp, 1] = b
            stack[sp + 1, 0] = na0 + right[a]
            stack[sp + 1, 1] = b
        else:
            stack[sp, 0] = a
            stack[sp, 1] = nb0 + left[b]
            stack[sp + 1, 0] = a
            stack[sp + 1, 1] = nb0 + right[b]
        sp += 2
    return False


@njit(parallel=True, cache=True)
def narrow_phase(geom_a, geom_b, rel, node_off, tri_off, node_min, node_max,
                 left, right, start, count, tris, margin, out):
    """Evaluate each (candidate geometry, placed geometry, relative pose) pair."""
    for p in prange(len(geom_a)):
        ga = geom_a[p]
        gb = geom_b[p]
        out[p] = pair_hit(rel[p], node_off[ga], node_off[gb], tri_off[ga], tri_off[gb],
                          node_min, node_max, left, right, start, count, tris, margin)
