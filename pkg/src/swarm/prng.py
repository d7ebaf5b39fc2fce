"""Deterministic 64-bit PRNG shared by every node role.

SplitMix64 with the standard constants (gamma 0x9E3779B97F4A7C15,
mixers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). Workers select
prompts with it and validators replay the selection, so the update
rule is part of the wire protocol: any reimplementation must match
these constants bit for bit. See docs/formats.md.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """One SplitMix64 finalizer round: a fixed 64-bit bijection."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential SplitMix64 stream over a 64-bit state."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        """Uniform double in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) as next_u64() % n.

        The modulo bias is ~n/2^64 and we accept it: the simple rule is
        trivial to reproduce in any language, which matters more here
        than the last ulp of uniformity.
        """
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def substream(self, index: int) -> "SplitMix64":
        """Deterministic child stream; index 0 is distinct from self."""
        return SplitMix64(mix64(self.state ^ ((index + 1) * _GAMMA)))
