"""Deterministic random number helpers.

Corpus splits use a self-contained SplitMix64 generator driving a
Fisher-Yates shuffle, so the exact permutation is pinned down by the seed
alone and reproduces on any platform (documented in the README).

Model sampling uses numpy PCG64 generators. Independent streams are
derived from a master seed with `SeedSequence.spawn`, one per work chunk,
so results do not depend on how chunks are distributed over workers.
"""

from __future__ import annotations

from typing import List

import numpy as np

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64: 64-bit state, one multiply-shift-xor avalanche per draw."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            v = self.next_u64()
            if v <= limit:
                return v % n


def fisher_yates(items: list, seed: int) -> None:
    """In-place Fisher-Yates shuffle driven by SplitMix64(seed)."""
    rng = SplitMix64(seed)
    for i in range(len(items) - 1, 0, -1):
        j = rng.below(i + 1)
        items[i], items[j] = items[j], items[i]


def spawn_generators(seed: int, n: int) -> List[np.random.Generator]:
    """n independent PCG64 generators derived from one master seed."""
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
