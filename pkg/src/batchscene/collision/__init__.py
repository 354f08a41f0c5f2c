"""Batched collision checking (CPU, data-parallel over scene instances)."""

from .bvh import BVH, build_bvh
from .world import CollisionMask, CollisionStats, CollisionWorld

__all__ = ["BVH", "build_bvh", "CollisionMask", "CollisionStats", "CollisionWorld"]
