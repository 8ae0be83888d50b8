"""Counter-based uniform streams keyed by ``(seed, path index)``.

Draw ``n`` of path ``i`` is a pure function of ``(seed, i, n)``: the SplitMix64
output sequence started from a key obtained by mixing the seed with the path
index.  Paths can therefore be simulated in any order, on any number of
workers, and reproduce bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_M1 = uint64(0xBF58476D1CE4E5B9)
_M2 = uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(cache=True, nogil=True)
def path_key(seed, path):
    return _mix(uint64(seed) ^ _mix(uint64(path) + _GOLDEN))


@njit(cache=True, nogil=True)
def uniform_at(key, counter):
    """Open-interval uniform: ``(m + 0.5) / 2**53`` with ``m`` the top 53 bits."""
    z = _mix(key + (uint64(counter) + uint64(1)) * _GOLDEN)
    return (float(z >> uint64(11)) + 0.5) * _INV_2_53


class PathStream:
    """Sequential view of the uniforms belonging to one path."""

    def __init__(self, seed: int, path: int = 0):
        if seed < 0 or path < 0:
            raise ValueError("seed and path index must be non-negative")
        self.seed = int(seed)
        self.path = int(path)
        self.key = np.uint64(path_key(np.uint64(self.seed), np.uint64(self.path)))
        self.counter = 0

    def uniform(self) -> float:
        u = uniform_at(self.key, self.counter)
        self.counter += 1
        return u

    def __repr__(self):
        return f"PathStream(seed={self.seed}, path={self.path}, counter={self.counter})"
