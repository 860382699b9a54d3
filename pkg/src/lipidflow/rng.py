"""Fixed, documented pseudo-random generator for the synthetic renderer.

The generator is splitmix64: a 64-bit counter advanced by the golden-ratio
increment 0x9E3779B97F4A7C15 whose output is an xorshift-multiply finalizer
(constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).  Being counter-based
it vectorizes trivially and any implementation language reproduces identical
streams bit for bit.  Independent named streams are derived by folding a
label hash into the seed.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def mix64(x: np.ndarray | int) -> np.ndarray:
    with np.errstate(over="ignore"):  # wraparound is the point
        z = np.asarray(x, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


class Stream:
    """Named deterministic stream of draws derived from (seed, label)."""

    def __init__(self, seed: int, label: str):
        h = 2166136261
        for ch in label.encode():  # FNV-1a folded to 64 bits
            h = ((h ^ ch) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
        self._base = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(h))
        self._pos = 0

    def uint64(self, n: int) -> np.ndarray:
        idx = np.arange(self._pos + 1, self._pos + n + 1, dtype=np.uint64)
        self._pos += n
        with np.errstate(over="ignore"):
            return mix64(self._base + idx * _GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) with 53-bit resolution."""
        return (self.uint64(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def normal(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive uniform pairs."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]: keeps the log finite
        u2 = self.uniform(m)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return out[:n]
