"""Reference implementations used to cross-check the package.

Everything here is written independently of ``batchscene`` internals: plain
numpy loops or closed forms, slow but easy to audit.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats


# ---------------------------------------------------------------------------
# triangle intersection by edge piercing
# ---------------------------------------------------------------------------

def _edges_pierce(A: np.ndarray, B: np.ndarray, tol: float) -> np.ndarray:
    """Whether any edge of each triangle in ``A`` crosses the matching triangle in ``B``.

    ``A``, ``B``: (k, 3, 3). A crossing needs the edge endpoints strictly on
    opposite sides of B's plane and the crossing point strictly inside B
    (``tol`` > 0 widens both tests, ``tol`` < 0 narrows them).
    """
    n = np.cross(B[:, 1] - B[:, 0], B[:, 2] - B[:, 0])
    ln = np.linalg.norm(n, axis=1)
    good = ln > 0
    n = n / np.where(good, ln, 1.0)[:, None]
    hit = np.zeros(len(A), dtype=bool)
    for i in range(3):
        p, q = A[:, i], A[:, (i + 1) % 3]
        dp = np.einsum("kj,kj->k", n, p - B[:, 0])
        dq = np.einsum("kj,kj->k", n, q - B[:, 0])
        cross = (np.minimum(dp, dq) < tol) & (np.maximum(dp, dq) > -tol)
        denom = np.where(np.abs(dp - dq) > 0, dp - dq, 1.0)
        x = p + (dp / denom)[:, None] * (q - p)
        # x must sit on the inner side of all three edges of B
        inside = np.ones(len(A), dtype=bool)
        for j in range(3):
            a, b = B[:, j], B[:, (j + 1) % 3]
            edge = b - a
            side = np.einsum("kj,kj->k", np.cross(edge, x - a), n)
            scale = np.linalg.norm(edge, axis=1)
            inside &= side / np.where(scale > 0, scale, 1.0) > -tol
        hit |= good & cross & inside
    return hit


def triangles_intersect(A: np.ndarray, B: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Proper intersection of triangle pairs; touching and coplanar pairs count as free."""
    A = np.asarray(A, dtype=float).reshape(-1, 3, 3)
    B = np.asarray(B, dtype=float).reshape(-1, 3, 3)
    return _edges_pierce(A, B, tol) | _edges_pierce(B, A, tol)


def mesh_pair_collides(A: np.ndarray, B: np.ndarray, chunk: int = 200_000) -> bool:
    """All-pairs test between two triangle soups, pruned only by exact box disjointness."""
    lo_a, hi_a = A.min(axis=1), A.max(axis=1)
    lo_b, hi_b = B.min(axis=1), B.max(axis=1)
    overlap = np.all(
        (lo_a[:, None, :] <= hi_b[None, :, :]) & (lo_b[None, :, :] <= hi_a[:, None, :]), axis=2
    )
    ia, ib = np.nonzero(overlap)
    for s in range(0, len(ia), chunk):
        if triangles_intersect(A[ia[s:s + chunk]], B[ib[s:s + chunk]]).any():
            return True
    return False


def world_triangles(corners: np.ndarray, pose: np.ndarray) -> np.ndarray:
    return corners @ pose[:3, :3].T + pose[:3, 3]


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------

def scalar_fk(parents: list[int], edges: list[np.ndarray], node: int, instance: int) -> np.ndarray:
    """Compose edge matrices from the root down to ``node`` for one instance."""
    chain = []
    while node != 0:
        chain.append(node)
        node = parents[node]
    T = np.eye(4)
    for nid in reversed(chain):
        M = edges[nid][instance]
        out = np.zeros((4, 4))
        for r in range(4):
            for c in range(4):
                out[r, c] = sum(T[r, k] * M[k, c] for k in range(4))
        T = out
    return T


def random_rigid(rng: np.random.Generator, n: int) -> np.ndarray:
    """Random rotations (via QR) and translations, shape (n, 4, 4)."""
    out = np.tile(np.eye(4), (n, 1, 1))
    for i in range(n):
        q, r = np.linalg.qr(rng.normal(size=(3, 3)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        out[i, :3, :3] = q
        out[i, :3, 3] = rng.uniform(-2, 2, size=3)
    return out


# ---------------------------------------------------------------------------
# planar regions and statistics
# ---------------------------------------------------------------------------

def annulus_sector_contains(points, center, direction_angle, theta, min_r, max_r, eps=0.0):
    """Closed-form membership in a ring sector (angles measured from ``direction_angle``)."""
    d = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    r = np.hypot(d[:, 0], d[:, 1])
    dev = np.abs((np.arctan2(d[:, 1], d[:, 0]) - direction_angle + math.pi) % (2 * math.pi) - math.pi)
    ok = (r >= min_r - eps) & (r <= max_r + eps)
    if theta < math.pi:
        ok &= (dev <= theta + 1e-12) | (r <= eps)
    return ok


def monte_carlo_area(contains, bounds, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Hit-or-miss area estimate and its standard error."""
    xmin, ymin, xmax, ymax = bounds
    pts = rng.uniform((xmin, ymin), (xmax, ymax), size=(n, 2))
    p = contains(pts).mean()
    box = (xmax - xmin) * (ymax - ymin)
    return box * p, box * math.sqrt(max(p * (1 - p), 1e-12) / n)


def grid_counts(points, bounds, bins: int = 4) -> np.ndarray:
    xmin, ymin, xmax, ymax = bounds
    h, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=bins, range=[[xmin, xmax], [ymin, ymax]])
    return h.ravel()


def cell_fractions(contains, bounds, bins: int = 4, per_cell: int = 200_000, seed: int = 12345) -> np.ndarray:
    """Fraction of the region's area in each grid cell, by dense Monte-Carlo per cell."""
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = bounds
    xs = np.linspace(xmin, xmax, bins + 1)
    ys = np.linspace(ymin, ymax, bins + 1)
    areas = []
    for i in range(bins):
        for j in range(bins):
            pts = rng.uniform((xs[i], ys[j]), (xs[i + 1], ys[j + 1]), size=(per_cell, 2))
            areas.append(contains(pts).mean())
    a = np.asarray(areas)
    return a / a.sum()


def chi_square_uniform(points, contains, bounds, bins: int = 4) -> float:
    """p-value of observed grid counts against the area-proportional expectation."""
    observed = grid_counts(points, bounds, bins)
    frac = cell_fractions(contains, bounds, bins)
    keep = frac > 1e-4
    expected = frac[keep] * observed[keep].sum()
    assert observed[~keep].sum() <= 1e-3 * observed.sum()
    return float(stats.chisquare(observed[keep], expected).pvalue)


def chi_square_two_sample(a, b, bounds, bins: int = 4) -> float:
    ca, cb = grid_counts(a, bounds, bins), grid_counts(b, bounds, bins)
    keep = (ca + cb) > 0
    return float(stats.chi2_contingency(np.vstack([ca[keep], cb[keep]]))[1])


# ---------------------------------------------------------------------------
# reachability
# ---------------------------------------------------------------------------

def planar_annulus_hits_cell(lo_x, lo_y, size, r_min, r_max) -> bool:
    """Whether the square cell meets the closed annulus r_min <= |p| <= r_max."""
    hi_x, hi_y = lo_x + size, lo_y + size
    nx = min(max(0.0, lo_x), hi_x)
    ny = min(max(0.0, lo_y), hi_y)
    near = math.hypot(nx, ny)
    far = max(math.hypot(x, y) for x in (lo_x, hi_x) for y in (lo_y, hi_y))
    return near <= r_max and far >= r_min
