"""Counter-based random streams built on splitmix64.

Every sample index gets its own stream derived from ``(seed, index)``, so the
values drawn for a sample never depend on the order in which samples are
processed.
"""
import math

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z):
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, state):
        self.state = state & MASK64

    def next_u64(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def random(self):
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo, hi):
        return lo + (hi - lo) * self.random()

    def uniform_vec(self, lo, hi):
        return [self.uniform(a, b) for a, b in zip(lo, hi)]

    def normal(self):
        # Box-Muller; 1 - u keeps the log argument in (0, 1]
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def stream(seed, index):
    """Independent generator for sample ``index`` under ``seed``."""
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return SplitMix64(mix64(seed ^ mix64((index + 1) * GOLDEN_GAMMA & MASK64)))
