"""Deterministic randomness primitives: SplitMix64, Box-Muller, FNV-1a hashing.

Everything here is pinned bit-exactly so that seeded dataset splits and
weight initialization reproduce across runs and platforms.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of `text`."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


class SplitMix64:
    """Scalar SplitMix64 stream: the standard finalizer over a Weyl sequence."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, n: int) -> int:
        """Uniform-ish draw in [0, n); modulo bias is negligible for n << 2^64."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n


def splitmix64_array(seed: int, n: int) -> np.ndarray:
    """First `n` outputs of SplitMix64(seed) as a uint64 array.

    The stream's i-th state is seed + (i+1)*GOLDEN mod 2^64, so the whole
    block vectorizes: build the states, then apply the finalizer elementwise.
    """
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return z


def uniform_open01(raw: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles in (0, 1]: ((x >> 11) + 1) * 2^-53."""
    return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)


def normals(seed: int, n: int) -> np.ndarray:
    """`n` standard-normal float64 draws from SplitMix64(seed) via Box-Muller.

    Uniform pairs are consumed in stream order (u1, u2, u1, u2, ...) and the
    cos/sin outputs are interleaved, so the mapping from seed to draws is
    fully pinned.
    """
    if n == 0:
        return np.empty(0, dtype=np.float64)
    pairs = (n + 1) // 2
    raw = splitmix64_array(seed, 2 * pairs)
    u1 = uniform_open01(raw[0::2])
    u2 = uniform_open01(raw[1::2])
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * math.pi * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def fisher_yates(items: list, seed: int) -> list:
    """Return a SplitMix64-driven Fisher-Yates shuffle of `items` (not in place)."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out
