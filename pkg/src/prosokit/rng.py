"""Deterministic pseudo-random primitives for reproducible shuffles and draws.

Dataset splits and demonstration draws must reproduce bit-for-bit across
runs, platforms, and architectures, so this module implements its own
64-bit generator (splitmix64) and Fisher-Yates shuffle instead of relying
on any runtime's RNG internals.  All arithmetic is unsigned 64-bit
(Python ints masked to 64 bits), with the constants below.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

_MASK64 = (1 << 64) - 1

# splitmix64 constants (Steele, Lea & Flood's SplitMix generator).
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

T = TypeVar("T")


class SplitMix64:
    """splitmix64 stream seeded from a 64-bit integer."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, n: int) -> int:
        """Uniform-ish integer in [0, n).

        Plain modulo reduction; the bias is < n / 2**64, irrelevant for
        shuffling but the choice is pinned here for reproducibility.
        """
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n


def derive_seed(master: int, index: int) -> int:
    """Sub-seed for draw `index` of a master seed.

    Defined as the (index+1)-th output of a splitmix64 stream seeded with
    `master`, so independent draws stay reproducible when run in parallel.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    stream = SplitMix64(master)
    out = 0
    for _ in range(index + 1):
        out = stream.next_u64()
    return out


def shuffled(items: Sequence[T], seed: int) -> list[T]:
    """Fisher-Yates shuffle driven by splitmix64; input is not modified."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out
