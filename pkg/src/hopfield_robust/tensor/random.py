"""Seeded random source on top of the counter-based Philox generator."""
from __future__ import annotations

import numpy as np

from ..errors import ParameterError


class Rng:
    """Deterministic sample stream; identical seeds give identical streams.

    Normals come from the Box-Muller transform applied to Philox uniforms, so
    the stream depends only on the seed and the sequence of calls.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def spawn(self, offset: int) -> "Rng":
        """An independent stream derived from this seed (used for fresh sub-streams)."""
        return Rng((self.seed * 1_000_003 + offset) % (2**63))

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return low + (high - low) * self._gen.random(shape)

    def normal(self, shape) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape))
        half = (n + 1) // 2
        u1 = 1.0 - self._gen.random(half)  # (0, 1], keeps log finite
        u2 = self._gen.random(half)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape)

    def integers(self, high: int, size=None) -> np.ndarray:
        return self._gen.integers(0, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def signs(self, shape) -> np.ndarray:
        """Uniform +-1 entries as float64."""
        return np.where(self._gen.random(shape) < 0.5, -1.0, 1.0)


def gaussian_sample(rng: Rng, shape, mean=0.0, std: float = 1.0) -> np.ndarray:
    """i.i.d. normal samples centred on ``mean`` (broadcast to ``shape``)."""
    if std < 0:
        raise ParameterError(f"std must be non-negative, got {std}")
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), shape)
    if std == 0:
        return mean.copy()
    return mean + std * rng.normal(tuple(shape))
