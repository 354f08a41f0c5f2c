"""Batched homogeneous-transform helpers.

Every function here works on stacks of 4x4 matrices with shape ``(n, 4, 4)``.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation


def identity(n: int) -> np.ndarray:
    out = np.zeros((n, 4, 4))
    out[:, 0, 0] = out[:, 1, 1] = out[:, 2, 2] = out[:, 3, 3] = 1.0
    return out


def translation(xyz) -> np.ndarray:
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    out = identity(len(xyz))
    out[:, :3, 3] = xyz
    return out


def rot_z(yaw) -> np.ndarray:
    yaw = np.atleast_1d(np.asarray(yaw, dtype=float))
    c, s = np.cos(yaw), np.sin(yaw)
    out = identity(len(yaw))
    out[:, 0, 0] = c
    out[:, 0, 1] = -s
    out[:, 1, 0] = s
    out[:, 1, 1] = c
    return out


def xyz_yaw(xyz, yaw) -> np.ndarray:
    """Poses with a yaw rotation about +z followed by a translation."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    yaw = np.atleast_1d(np.asarray(yaw, dtype=float))
    if len(yaw) == 1 and len(xyz) > 1:
        yaw = np.broadcast_to(yaw, (len(xyz),))
    out = rot_z(yaw)
    out[:, :3, 3] = xyz
    return out


def from_xyz_rpy(xyz_rpy) -> np.ndarray:
    """Single 4x4 pose from ``(x, y, z, roll, pitch, yaw)`` (extrinsic xyz)."""
    v = np.asarray(xyz_rpy, dtype=float)
    out = np.eye(4)
    out[:3, :3] = Rotation.from_euler("xyz", v[3:6]).as_matrix()
    out[:3, 3] = v[:3]
    return out


def axis_rotation(axis, angles) -> np.ndarray:
    """Rodrigues rotation about a fixed unit ``axis`` for each angle, as (n, 4, 4)."""
    k = np.asarray(axis, dtype=float)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    kk = kx @ kx
    s = np.sin(angles)[:, None, None]
    c = (1.0 - np.cos(angles))[:, None, None]
    out = identity(len(angles))
    out[:, :3, :3] = np.eye(3) + s * kx + c * kk
    return out


def invert(T: np.ndarray) -> np.ndarray:
    """Inverse of rigid transforms (rotation block assumed orthonormal)."""
    R = T[..., :3, :3]
    Rt = np.swapaxes(R, -1, -2)
    out = np.zeros_like(T)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, T[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def apply(T: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply per-row transforms ``T (n,4,4)`` to points ``(n,3)``."""
    return np.einsum("nij,nj->ni", T[:, :3, :3], points) + T[:, :3, 3]


def yaw_of(T: np.ndarray) -> np.ndarray:
    return np.arctan2(T[..., 1, 0], T[..., 0, 0])


def check_homogeneous(T: np.ndarray, orthonormal_tol: float | None = 1e-6) -> None:
    """Raise ``ValueError`` unless every matrix is a proper homogeneous transform.

    The bottom row must be exactly ``(0, 0, 0, 1)``. Pass ``orthonormal_tol=None``
    to skip the rotation-block check on hot paths.
    """
    T = np.asarray(T)
    if T.ndim != 3 or T.shape[1:] != (4, 4):
        raise ValueError(f"expected (n, 4, 4) transforms, got shape {T.shape}")
    if not np.all(T[:, 3, :3] == 0.0) or not np.all(T[:, 3, 3] == 1.0):
        raise ValueError("bottom row of a homogeneous matrix must be (0, 0, 0, 1)")
    if not np.all(np.isfinite(T)):
        raise ValueError("transforms contain non-finite values")
    if orthonormal_tol is not None:
        R = T[:, :3, :3]
        err = np.abs(np.einsum("nki,nkj->nij", R, R) - np.eye(3)).max(initial=0.0)
        if err > orthonormal_tol:
            raise ValueError(f"rotation block is not orthonormal (|R^T R - I| = {err:.3g})")
