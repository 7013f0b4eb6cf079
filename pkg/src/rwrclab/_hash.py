"""Counter-based hashing used as the package's only source of randomness.

Every random quantity is a pure function of ``(seed, tag, a, b)`` so that
fields can be realized lazily, in any order, on any thread.  The mixer is
the splitmix64 finalizer applied in a short chain.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# purpose tags; keep distinct so streams never overlap
TAG_INTENSITY = 1
TAG_EDGE_H = 2
TAG_EDGE_V = 3
TAG_WALK = 4
TAG_BLOCK = 64  # + level
TAG_POINT = 160

# coordinates are shifted into the positive int64 range before mixing
_OFFSET = 1 << 62
_MASK = (1 << 64) - 1


@njit(cache=True, inline="always")
def mix64(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def hash4(seed, tag, a, b):
    """64-bit hash of (seed, tag, a, b); seed is uint64, the rest int64."""
    h = mix64(seed ^ mix64(np.uint64(tag)))
    h = mix64(h ^ np.uint64(a + _OFFSET))
    h = mix64(h ^ np.uint64(b + _OFFSET))
    return h


@njit(cache=True, inline="always")
def to_unit(h):
    """Map a 64-bit hash to the open interval (0, 1)."""
    return (float(h >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def uniform4(seed, tag, a, b):
    return to_unit(hash4(seed, tag, a, b))


def as_seed(seed: int) -> np.uint64:
    return np.uint64(int(seed) & _MASK)


# Pure-Python reference of the same construction.  Used by the tests to pin
# the compiled mixer, and handy for one-off queries without compilation.

def _mix64_py(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def hash4_py(seed: int, tag: int, a: int, b: int) -> int:
    h = _mix64_py((seed & _MASK) ^ _mix64_py(tag))
    h = _mix64_py(h ^ ((a + _OFFSET) & _MASK))
    h = _mix64_py(h ^ ((b + _OFFSET) & _MASK))
    return h


def uniform4_py(seed: int, tag: int, a: int, b: int) -> float:
    return ((hash4_py(seed, tag, a, b) >> 11) + 0.5) / 9007199254740992.0
