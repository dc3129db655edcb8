"""Deterministic pseudo-random streams (splitmix64, version 1).

Every random draw in the toolkit flows through this module so that runs
are reproducible bit-for-bit from a single 64-bit seed, independent of
platform, thread schedule, or numpy version.

Generator definition (fixed; do not change without bumping the version):

    output(i) = mix64(seed + (i + 1) * GAMMA)   for i = 0, 1, 2, ...

    GAMMA = 0x9E3779B97F4A7C15
    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
              z ^= z >> 27; z *= 0x94D049BB133111EB
              z ^= z >> 31
    (all arithmetic modulo 2**64)

This is the splitmix64 finalizer applied to a Weyl sequence, a
counter-based form of the xorshift-multiply family. Being counter-based
it vectorizes, so large parameter blocks can be filled without a Python
loop while still producing the exact sequence the scalar definition
states.

Derived streams: ``derive(seed, *tags)`` folds string tags into a child
seed via mix64 over the tag's 64-bit content digest, giving independent,
order-sensitive substreams (per epoch, per tree, per image, ...).

Conversions (also fixed):
  * uniform double in [0, 1): (output >> 11) * 2**-53
  * bounded int in [0, n):    output % n
  * standard normal:          Box-Muller on pairs of outputs, with
                              u1 = (output >> 11 | 1) * 2**-53 to avoid 0
"""

from __future__ import annotations

import numpy as np

from facekit.hashing import digest64

PRNG_NAME = "splitmix64"
PRNG_VERSION = 1

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 2.0 ** -53


def mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive(seed: int, *tags) -> int:
    """Child seed for a named substream. Tags are stringified in order."""
    h = seed & _MASK
    for tag in tags:
        h = mix64(h ^ digest64(str(tag).encode("utf-8")))
    return h


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


class Stream:
    """Sequential view over the splitmix64 output sequence for one seed."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._index = 0

    def next_u64(self) -> int:
        value = mix64((self.seed + ((self._index + 1) * _GAMMA)) & _MASK)
        self._index += 1
        return value

    def u64_block(self, n: int) -> np.ndarray:
        """Next n outputs as a uint64 array (vectorized, same sequence)."""
        idx = np.arange(self._index + 1, self._index + n + 1, dtype=np.uint64)
        self._index += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
            return _mix64_vec(z)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.u64_block(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        if low != 0.0 or high != 1.0:
            u = low + (high - low) * u
        return u

    def normal(self, n: int) -> np.ndarray:
        """Standard normal draws via Box-Muller; consumes 2 outputs each."""
        pairs = self.u64_block(2 * n)
        u1 = ((pairs[:n] >> np.uint64(11)) | np.uint64(1)).astype(np.float64) * _INV_2_53
        u2 = (pairs[n:] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        return self.next_u64() % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        order = np.arange(n)
        for i in range(n - 1):
            j = i + self.randbelow(n - i)
            order[i], order[j] = order[j], order[i]
        return order

    def sample(self, items, k: int) -> list:
        """First k entries of a Fisher-Yates shuffle (without replacement)."""
        pool = list(items)
        n = len(pool)
        k = min(k, n)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
