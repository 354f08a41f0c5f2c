"""Scene graph whose edges carry one transform per scene instance.

A node is an object or an object part; the edge into a node stores an
``(N, 4, 4)`` stack, one homogeneous matrix per instance. Articulated nodes
keep a base transform plus a per-instance joint value, and their edge is
``base @ motion(value)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import transforms as tf

NodeId = int


@dataclass(frozen=True)
class JointSpec:
    kind: str
    axis: tuple[float, float, float]
    limits: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        lo, hi = self.limits
        if not lo <= hi:
            raise ValueError(f"joint limits must satisfy lo <= hi, got {self.limits}")
        if abs(float(np.linalg.norm(self.axis)) - 1.0) > 1e-9:
            raise ValueError(f"joint axis must be a unit vector, got {self.axis}")

    def motion(self, values) -> np.ndarray:
        """Joint motion transforms, one per value."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if self.kind == "revolute":
            return tf.axis_rotation(self.axis, values)
        return tf.translation(values[:, None] * np.asarray(self.axis)[None, :])

    def within_limits(self, values, tol: float = 1e-12) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return (v >= self.limits[0] - tol) & (v <= self.limits[1] + tol)


@dataclass
class _Node:
    name: str
    parent: NodeId | None
    geometry: Any
    joint: JointSpec | None
    base: np.ndarray
    edge: np.ndarray
    state: np.ndarray | None = None
    children: list[NodeId] = field(default_factory=list)


class BatchedSceneGraph:
    """Tree of nodes rooted at ``world`` holding ``batch_size`` scene instances."""

    def __init__(self, batch_size: int, root_name: str = "world"):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.batch_size = int(batch_size)
        self.valid_mask = np.ones(self.batch_size, dtype=bool)
        root = _Node(root_name, None, None, None, tf.identity(1), tf.identity(1))
        self._nodes: list[_Node] = [root]
        self._by_name: dict[str, NodeId] = {root_name: 0}
        self.placed: dict[NodeId, np.ndarray] = {0: np.ones(self.batch_size, dtype=bool)}

    @property
    def root(self) -> NodeId:
        return 0

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def node(self, ref: NodeId | str) -> NodeId:
        if isinstance(ref, str):
            try:
                return self._by_name[ref]
            except KeyError:
                raise KeyError(f"unknown node {ref!r}") from None
        if not 0 <= ref < len(self._nodes):
            raise KeyError(f"unknown node id {ref}")
        return int(ref)

    def name(self, node: NodeId | str) -> str:
        return self._nodes[self.node(node)].name

    def names(self) -> list[str]:
        return [n.name for n in self._nodes]

    def parent(self, node: NodeId | str) -> NodeId | None:
        return self._nodes[self.node(node)].parent

    def children(self, node: NodeId | str) -> list[NodeId]:
        return list(self._nodes[self.node(node)].children)

    def geometry(self, node: NodeId | str):
        return self._nodes[self.node(node)].geometry

    def joint(self, node: NodeId | str) -> JointSpec | None:
        return self._nodes[self.node(node)].joint

    def add_node(
        self,
        parent: NodeId | str,
        name: str,
        geometry: Any = None,
        joint: JointSpec | None = None,
    ) -> NodeId:
        pid = self.node(parent)
        if name in self._by_name:
            raise ValueError(f"duplicate node name {name!r}")
        n = self.batch_size
        node = _Node(name, pid, geometry, joint, tf.identity(n), tf.identity(n))
        if joint is not None:
            node.state = np.full(n, joint.limits[0], dtype=float)
            node.edge = node.base @ joint.motion(node.state)
        nid = len(self._nodes)
        self._nodes.append(node)
        self._nodes[pid].children.append(nid)
        self._by_name[name] = nid
        self.placed[nid] = np.ones(n, dtype=bool)
        return nid

    def edge(self, parent: NodeId | str, child: NodeId | str) -> np.ndarray:
        return self._nodes[self._edge_child(parent, child)].edge

    def _edge_child(self, parent, child) -> NodeId:
        pid, cid = self.node(parent), self.node(child)
        if self._nodes[cid].parent != pid:
            raise KeyError(f"no edge ({self.name(pid)!r}, {self.name(cid)!r})")
        return cid

    def set_edge_batch(self, parent, child, transforms: np.ndarray, instances=None) -> None:
        """Replace the edge transforms, optionally only for a subset of instances.

        For articulated children the stored transform is the joint's base; the
        edge is recomputed with the current joint state.
        """
        cid = self._edge_child(parent, child)
        T = np.asarray(transforms, dtype=float)
        expected = self.batch_size if instances is None else len(np.atleast_1d(instances))
        if T.ndim != 3 or T.shape != (expected, 4, 4):
            raise ValueError(f"transform batch shape {T.shape} does not match ({expected}, 4, 4)")
        tf.check_homogeneous(T, 1e-6 if __debug__ else None)
        node = self._nodes[cid]
        idx = slice(None) if instances is None else np.asarray(instances)
        node.base[idx] = T
        if node.joint is None:
            node.edge[idx] = T
        else:
            node.edge[idx] = T @ node.joint.motion(node.state[idx])

    def set_joint_states(self, node, values, instances=None) -> None:
        nid = self.node(node)
        n = self._nodes[nid]
        if n.joint is None:
            raise ValueError(f"node {n.name!r} is not articulated")
        v = np.atleast_1d(np.asarray(values, dtype=float))
        expected = self.batch_size if instances is None else len(np.atleast_1d(instances))
        if v.shape != (expected,):
            raise ValueError(f"expected {expected} joint values, got shape {v.shape}")
        if not np.all(n.joint.within_limits(v)):
            raise ValueError(f"joint value outside limits {n.joint.limits} for {n.name!r}")
        idx = slice(None) if instances is None else np.asarray(instances)
        n.state[idx] = v
        n.edge[idx] = n.base[idx] @ n.joint.motion(v)

    def joint_states(self, node) -> np.ndarray:
        n = self._nodes[self.node(node)]
        if n.joint is None:
            raise ValueError(f"node {n.name!r} is not articulated")
        return n.state.copy()

    def path(self, node) -> list[NodeId]:
        """Node ids from the first child of the root down to ``node``."""
        nid = self.node(node)
        out = []
        while nid != 0:
            out.append(nid)
            nid = self._nodes[nid].parent
        return out[::-1]

    def world_poses(self, node) -> np.ndarray:
        """Batched forward kinematics: composed root-to-node transforms, (N, 4, 4)."""
        path = self.path(node)
        if not path:
            return tf.identity(self.batch_size)
        out = self._nodes[path[0]].edge.copy()
        for nid in path[1:]:
            out = out @ self._nodes[nid].edge
        return out

    def check_tree(self) -> None:
        """Raise if parent links contain a cycle or children lists disagree."""
        for nid in range(1, len(self._nodes)):
            seen = set()
            cur = nid
            while cur != 0:
                if cur in seen:
                    raise ValueError(f"cycle through node {self._nodes[nid].name!r}")
                seen.add(cur)
                cur = self._nodes[cur].parent
                if cur is None:
                    raise ValueError("non-root node without a parent")
            if nid not in self._nodes[self._nodes[nid].parent].children:
                raise ValueError(f"child list of {self._nodes[nid].parent} misses {nid}")

    def subtree(self, node) -> list[NodeId]:
        stack, out = [self.node(node)], []
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self._nodes[nid].children))
        return out

    def iter_nodes(self) -> Sequence[tuple[NodeId, str]]:
        return [(i, n.name) for i, n in enumerate(self._nodes)]
