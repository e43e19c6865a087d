"""Deterministic random streams: SplitMix64-seeded xoshiro256**.

Every matrix and every synthetic trace draws from its own substream
derived from (seed, tags...), so values never depend on the order in
which weights are materialized.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TO_UNIT = 2.0 ** -53  # top 53 bits of a u64 -> [0, 1)


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Counter-based 64-bit generator; used only to seed xoshiro state."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        return _mix64(self._state)


def derive_seed(base: int, *tags: int) -> int:
    """Fold integer tags into a base seed, one finalizer round per tag."""
    x = base & MASK64
    for t in tags:
        x = _mix64((x + _GOLDEN) & MASK64)
        x = _mix64(x ^ (t & MASK64))
    return x


class Xoshiro256StarStar:
    """xoshiro256** 1.0 with its state filled from four SplitMix64 draws."""

    __slots__ = ("_s",)

    def __init__(self, seed: int) -> None:
        sm = SplitMix64(seed)
        self._s = [sm.next_u64() for _ in range(4)]

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s1 * 5) & MASK64
        result = (((x << 7) | (x >> 57)) & MASK64) * 9 & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * _TO_UNIT

    def fill(self, n: int, lo: float = -0.1, hi: float = 0.1) -> list[float]:
        """n uniform floats in [lo, hi); loop is inlined for speed."""
        s0, s1, s2, s3 = self._s
        span = hi - lo
        out: list[float] = []
        append = out.append
        for _ in range(n):
            x = (s1 * 5) & MASK64
            r = (((x << 7) | (x >> 57)) & MASK64) * 9 & MASK64
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
            append(lo + span * ((r >> 11) * _TO_UNIT))
        self._s = [s0, s1, s2, s3]
        return out

    def fill_matrix(self, rows: int, cols: int,
                    lo: float = -0.1, hi: float = 0.1) -> list[list[float]]:
        flat = self.fill(rows * cols, lo, hi)
        return [flat[r * cols:(r + 1) * cols] for r in range(rows)]
