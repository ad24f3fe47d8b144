"""Deterministic random generation for every experiment in the package.

The generator is SplitMix64 (Steele, Lea & Flood's mix function). Its i-th
output is the closed form ``mix(seed + i * GOLDEN)``, which makes the scalar
stream and the vectorized numpy stream identical by construction, keeps
replay trivially seekable, and has no platform- or version-dependent state.
Per-sample substreams derive as ``seed + sample_index``.

Uniform doubles use the top 53 bits, so every value is exactly representable
and the stream is bit-identical everywhere.
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 2.0 ** -53


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class Rng:
    """SplitMix64 stream seeded by a 64-bit integer."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._i = 0

    def derive(self, index: int) -> "Rng":
        """Substream for sample `index`, per the seed + index convention."""
        return Rng((self.seed + index) & _MASK)

    def next_u64(self) -> int:
        self._i += 1
        return _mix((self.seed + self._i * _GOLDEN) & _MASK)

    def u01(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.u01()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        return lo + self.next_u64() % span

    def shuffle(self, xs: list) -> None:
        """Fisher-Yates in place."""
        for i in range(len(xs) - 1, 0, -1):
            j = self.randint(0, i)
            xs[i], xs[j] = xs[j], xs[i]

    def u01_array(self, n: int) -> np.ndarray:
        """Next `n` uniforms as float64, identical to `n` calls of u01()."""
        idx = np.arange(self._i + 1, self._i + n + 1, dtype=np.uint64)
        self._i += n
        z = (np.uint64(self.seed) + idx * np.uint64(_GOLDEN)) & np.uint64(_MASK)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform_array(self, lo: float, hi: float, n: int) -> np.ndarray:
        return lo + (hi - lo) * self.u01_array(n)

    def uniform_matrix(self, lo: float, hi: float, rows: int, cols: int) -> list[list[float]]:
        flat = self.uniform_array(lo, hi, rows * cols).tolist()
        return [flat[r * cols:(r + 1) * cols] for r in range(rows)]
