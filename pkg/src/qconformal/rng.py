"""Portable 64-bit pseudo-random streams.

Seeds are derived with splitmix64 and streams are xoshiro256**, so every
dataset and model is reproducible from integer seeds alone, independent of
numpy's generator internals.

``Xoshiro256`` is a scalar stream on Python ints. ``uniform_batch`` advances
many streams in lockstep on numpy uint64 arrays and yields exactly the same
numbers as the scalar stream for each seed.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Output number ``index + 1`` of a splitmix64 stream started at ``seed``."""
    if index < 0:
        raise ValueError("index must be non-negative")
    return mix64((seed & MASK64) + (index + 1) * GOLDEN)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def _initial_state(seed: int) -> list[int]:
    return [derive_seed(seed, i) for i in range(4)]


class Xoshiro256:
    """xoshiro256** seeded from four splitmix64 outputs."""

    def __init__(self, seed: int):
        self.s = _initial_state(seed)

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def randbelow(self, n: int) -> int:
        """Integer in [0, n). Uses floor(uniform * n); bias is below n / 2**53."""
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.uniform() * n), n - 1)

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle, returning a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.randbelow(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def _rotl_arr(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


def iter_uniform_batch(seeds, count: int):
    """Yield ``count`` arrays of uniforms, one value per stream per step.

    Element j of step i equals the (i+1)-th ``Xoshiro256(seeds[j]).uniform()``.
    """
    state = np.array([_initial_state(int(s)) for s in seeds], dtype=np.uint64)
    s0, s1, s2, s3 = (state[:, i].copy() for i in range(4))
    five, nine = np.uint64(5), np.uint64(9)
    for _ in range(count):
        result = _rotl_arr(s1 * five, 7) * nine
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl_arr(s3, 45)
        yield (result >> np.uint64(11)).astype(np.float64) * _INV_2_53


def uniform_batch(seeds, count: int) -> np.ndarray:
    """Array of shape (count, len(seeds)) from ``iter_uniform_batch``."""
    seeds = list(seeds)
    out = np.empty((count, len(seeds)), dtype=np.float64)
    for i, row in enumerate(iter_uniform_batch(seeds, count)):
        out[i] = row
    return out
