"""Low-level numerical helpers shared by the simulators.

Compensated (Neumaier) summation, a splitmix64 avalanche mix, and a
counter-based exponential generator.  Everything that runs inside the
simulation loops is compiled with numba.
"""

import math

import numpy as np
from numba import njit

GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer on a Python int (bijective on 64-bit words)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mix64` over a uint64 array (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64).copy()
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= np.uint64(0xBF58476D1CE4E5B9)
        z ^= z >> np.uint64(27)
        z *= np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
    return z


class Accumulator:
    """Running Neumaier sum.  Like math.fsum, but incremental."""

    __slots__ = ("_s", "_c")

    def __init__(self, value: float = 0.0):
        self._s = float(value)
        self._c = 0.0

    def add(self, x: float) -> None:
        s = self._s
        t = s + x
        if abs(s) >= abs(x):
            self._c += (s - t) + x
        else:
            self._c += (x - t) + s
        self._s = t

    @property
    def value(self) -> float:
        return self._s + self._c

    def __float__(self) -> float:
        return self.value


@njit(cache=True)
def neumaier_add(s, c, x):
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@njit(cache=True)
def compensated_cumsum(values, start_s, start_c, out):
    """Write S_{k+1} = S_k + values[k] into out[k], continuing from (s, c)."""
    s = start_s
    c = start_c
    for k in range(values.shape[0]):
        s, c = neumaier_add(s, c, values[k])
        out[k] = s + c
    return s, c


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_G = np.uint64(GOLDEN)
_P1 = np.uint64(0xD6E8FEB86659FD93)
_P2 = np.uint64(0xA0761D6478BD642F)
_TWO53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def keyed_exponential(seed, site, direction, index):
    """Mean-one exponential addressed by (seed, site, direction, index).

    The uniform is the top 53 bits of a double splitmix64 hash, shifted to
    the open interval (0, 1); the exponential is its inverse CDF.
    """
    key = (np.uint64(site + (1 << 40)) * _P1) ^ (np.uint64(index) * _P2)
    key = key ^ np.uint64(direction + 1) * _G
    h = _mix(np.uint64(seed) + _mix(key))
    u = (float(h >> np.uint64(11)) + 0.5) * _TWO53
    return -math.log1p(-u)
