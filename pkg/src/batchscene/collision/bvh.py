"""Axis-aligned bounding volume hierarchy over a triangle mesh.

Nodes are stored as flat arrays so the numba kernels can walk them. Leaves
hold a contiguous run of triangles in ``order``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


@dataclass
class BVH:
    node_min: np.ndarray   # (M, 3)
    node_max: np.ndarray   # (M, 3)
    left: np.ndarray       # (M,) child index or -1
    right: np.ndarray      # (M,)
    start: np.ndarray      # (M,) first triangle (into ``order``) for leaves
    count: np.ndarray      # (M,) triangle count, 0 for inner nodes
    order: np.ndarray      # (T,) triangle permutation

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def depth(self) -> int:
        best, stack = 0, [(0, 1)]
        while stack:
            i, d = stack.pop()
            best = max(best, d)
            if self.count[i] == 0:
                stack.append((self.left[i], d + 1))
                stack.append((self.right[i], d + 1))
        return best


def build_bvh(corners: np.ndarray, leaf_size: int = LEAF_SIZE) -> BVH:
    """Split at the midpoint of the longest centroid axis; ``corners`` is (T, 3, 3).

    Falls back to a median split when the midpoint leaves one side empty.
    """
    n = len(corners)
    if n == 0:
        raise ValueError("cannot build a BVH over zero triangles")
    tmin = corners.min(axis=1)
    tmax = corners.max(axis=1)
    cent = corners.mean(axis=1)
    order = np.arange(n)
    node_min, node_max, left, right, start, count = [], [], [], [], [], []

    def new_node(lo, hi):
        idx = order[lo:hi]
        node_min.append(tmin[idx].min(axis=0))
        node_max.append(tmax[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        return len(left) - 1

    root = new_node(0, n)
    stack = [(root, 0, n)]
    while stack:
        node, lo, hi = stack.pop()
        if hi - lo <= leaf_size:
            continue
        idx = order[lo:hi]
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        key = c[:, axis]
        below = key < 0.5 * (key.min() + key.max())
        mid = int(below.sum())
        if 0 < mid < hi - lo:
            part = np.argsort(~below, kind="stable")
        else:
            mid = (hi - lo) // 2
            part = np.argpartition(key, mid)
        order[lo:hi] = idx[part]
        lo_node = new_node(lo, lo + mid)
        hi_node = new_node(lo + mid, hi)
        left[node], right[node], count[node] = lo_node, hi_node, 0
        stack.append((lo_node, lo, lo + mid))
        stack.append((hi_node, lo + mid, hi))
    return BVH(
        np.asarray(node_min), np.asarray(node_max),
        np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64), np.asarray(count, dtype=np.int64), order,
    )
