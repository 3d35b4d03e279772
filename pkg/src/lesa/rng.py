"""Seeded random source shared by initialisation, dropout, splitting and batching."""
from __future__ import annotations

import numpy as np


class Rng:
    """Thin wrapper over a PCG64 generator.

    PCG64 streams are specified bit-for-bit by numpy, so one seed gives the
    same draw sequence on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self, shape) -> np.ndarray:
        return self._gen.random(shape)

    def normal(self, shape, std: float = 1.0, dtype=np.float32) -> np.ndarray:
        return (self._gen.standard_normal(shape) * std).astype(dtype)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, seq, size=None, replace=True):
        return self._gen.choice(seq, size=size, replace=replace)

    def spawn(self, offset: int) -> "Rng":
        """Independent child stream derived from this seed (not from the draw state)."""
        return Rng(self.seed * 1_000_003 + offset)
