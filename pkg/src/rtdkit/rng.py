"""Seeded 64-bit random streams shared by the generator, DPLL and the SLS kernels.

Every random decision in the package goes through xoshiro256** whose state
is expanded from a 64-bit seed with splitmix64.  Per-trial and per-candidate
seeds are derived with :func:`derive_seed`, so a single base seed determines
an entire experiment.  The Python class and the numba helpers below produce
bit-identical streams.
"""
from __future__ import annotations

import numba as nb
import numpy as np

RNG_NAME = "xoshiro256**/splitmix64"
RNG_VERSION = "1"

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STREAM = 0xD1B54A32D192ED03
_INV53 = 1.0 / (1 << 53)


def rng_info() -> dict:
    return {"algorithm": RNG_NAME, "version": RNG_VERSION}


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64(x: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    x = (x + _GOLDEN) & MASK64
    return x, _mix64(x)


def derive_seed(base_seed: int, index: int) -> int:
    """Seed for child ``index`` of ``base_seed``; independent of sibling order."""
    h = _mix64((base_seed + _GOLDEN) & MASK64)
    return _mix64((h ^ (((index + 1) * _STREAM) & MASK64)) & MASK64)


def derive_seeds(base_seed: int, count: int) -> np.ndarray:
    return np.array([derive_seed(base_seed, i) for i in range(count)], dtype=np.uint64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """Pure-Python xoshiro256** stream (used where numba is not worth it)."""

    def __init__(self, seed: int):
        x = seed & MASK64
        s = []
        for _ in range(4):
            x, out = splitmix64(x)
            s.append(out)
        self.s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return int(self.random() * n)

    def coin(self) -> bool:
        return (self.next_u64() >> 63) == 1

    def choice(self, seq):
        return seq[self.below(len(seq))]


# numba mirror -------------------------------------------------------------

_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)


@nb.njit(cache=True, inline="always")
def _nb_rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def nb_seed_state(seed):
    s = np.empty(4, dtype=np.uint64)
    x = np.uint64(seed)
    for i in range(4):
        x = x + _U_GOLDEN
        z = x
        z = (z ^ (z >> np.uint64(30))) * _U_MIX1
        z = (z ^ (z >> np.uint64(27))) * _U_MIX2
        s[i] = z ^ (z >> np.uint64(31))
    return s


@nb.njit(cache=True, inline="always")
def nb_next(s):
    result = _nb_rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _nb_rotl(s[3], 45)
    return result


@nb.njit(cache=True, inline="always")
def nb_random(s):
    return float(nb_next(s) >> np.uint64(11)) * _INV53


@nb.njit(cache=True, inline="always")
def nb_below(s, n):
    return int(nb_random(s) * n)


@nb.njit(cache=True, inline="always")
def nb_coin(s):
    return (nb_next(s) >> np.uint64(63)) == np.uint64(1)
