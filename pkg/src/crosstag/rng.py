"""Deterministic 64-bit PRNG used for corpus splitting.

Corpus splits must be byte-identical across runs, platforms, and
implementations, so we pin the generator to splitmix64 (Steele, Lea &
Flood 2014; Vigna's reference C implementation) instead of relying on
whatever a host library ships.  State is a single 64-bit word advanced
by the golden-ratio increment; output passes through the murmur-style
finalizer.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """splitmix64 stream seeded with an unsigned 64-bit integer."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Unbiased draw from [0, bound) by rejection sampling.

        Rejection keeps the draw exactly uniform; the acceptance region is
        the largest multiple of ``bound`` that fits in 64 bits.
        """
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, iterating from the back."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def shuffled_indices(n: int, seed: int) -> list[int]:
    order = list(range(n))
    SplitMix64(seed).shuffle(order)
    return order
