"""Deterministic 64-bit generator backing every randomized decision.

The compiled execution core re-implements the same recurrence in C, so a
seed produces bit-identical behaviour no matter which core is active.
"""

MASK64 = (1 << 64) - 1

GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(state: int) -> int:
    """Output function applied to an (already incremented) generator state."""
    z = state & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def randbelow(self, n: int) -> int:
        # Modulo bias is negligible for n << 2**64 and keeps the compiled
        # core's draw sequence trivially identical.
        return self.next_u64() % n

    def chance(self, threshold: int) -> bool:
        """True with probability threshold / 2**64."""
        return self.next_u64() < threshold

    def shuffle(self, seq: list) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]


def probability_threshold(p: float) -> int:
    """Map a probability to the integer threshold used by SplitMix64.chance."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    return min(int(p * 2.0**64), 1 << 64)
