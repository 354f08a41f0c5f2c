"""Counter-based random streams.

Each scene instance draws from its own stream keyed by
``(seed, instance, *tags)``. Values depend only on the key and the draw index,
never on how work is split or scheduled, so the same seed reproduces the same
scenes at any batch split or thread count.
"""

from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps by design
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_key(seed: int, *tags: int) -> np.uint64:
    """Fold a seed and integer tags into one 64-bit key."""
    with np.errstate(over="ignore"):
        k = _mix(np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF)]))
        for t in tags:
            k = _mix(k ^ (np.uint64(t & 0xFFFFFFFFFFFFFFFF) + _GOLDEN))
    return k[0]


def instance_uniforms(seed: int, tags: tuple[int, ...], instances, n_draws: int) -> np.ndarray:
    """Uniform [0, 1) draws, shape ``(len(instances), n_draws)``.

    Row ``j`` belongs to instance ``instances[j]`` and is identical whatever
    other instances are requested alongside it.
    """
    key = stream_key(seed, *tags)
    inst = np.asarray(instances, dtype=np.uint64).reshape(-1, 1)
    draw = np.arange(n_draws, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over="ignore"):
        z = _mix(inst * _GOLDEN + key)
        z = _mix(z + (draw + np.uint64(1)) * _M2)
    return (z >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def generator(seed: int, *tags: int) -> np.random.Generator:
    """A sequential numpy generator for one keyed stream (used by sample caches)."""
    return np.random.default_rng([seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *tags])
