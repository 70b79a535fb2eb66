"""Seeded random number generation.

Streams are produced by the Philox counter-based generator, so a given
64-bit seed yields a bit-identical sequence on every platform. Independent
substreams for e.g. per-run or per-trajectory work come from `spawn`,
which derives child keys deterministically from the parent seed.
"""

from __future__ import annotations

import numpy as np


class SeededRng:
    """Philox-backed generator with deterministic spawning."""

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._key = _key
        seq = np.random.SeedSequence(self.seed, spawn_key=_key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def spawn(self, index: int) -> "SeededRng":
        """Deterministic child stream #`index`, independent of draws made here."""
        return SeededRng(self.seed, self._key + (int(index),))

    def normal(self, shape=(), loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size=shape)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
