"""Counter-based SplitMix64 streams shared by both kernel backends.

A draw is ``mix64(key + n * GAMMA)`` for the n-th call on a stream, so every
event category gets an independent, reproducible sequence and the compiled
and pure-Python engines consume identical bits.
"""
from __future__ import annotations

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
STREAM_MULT = 0xD1B54A32D192ED03
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB
TWO_M53 = 2.0**-53

# stream ids
TIME, SITE, KIND, MARK, INIT = 0, 1, 2, 3, 4


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * M1) & MASK
    z = ((z ^ (z >> 27)) * M2) & MASK
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int) -> int:
    return mix64((seed & MASK) + (stream + 1) * STREAM_MULT)


def to_unit(z: int) -> float:
    """Map 64 random bits to an odd multiple of 2^-53 in the open interval (0, 1)."""
    return float(((z >> 12) << 1) + 1) * TWO_M53


class Stream:
    __slots__ = ("key", "counter")

    def __init__(self, seed: int, stream: int):
        self.key = stream_key(seed, stream)
        self.counter = 0

    def uniform(self) -> float:
        self.counter += 1
        return to_unit(mix64(self.key + self.counter * GAMMA))
