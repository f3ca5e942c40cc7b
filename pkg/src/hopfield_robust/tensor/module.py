from __future__ import annotations

import hashlib

import numpy as np

from ..errors import DataError
from .tensor import Tensor


class Module:
    """Owner of named parameter tensors. Subclasses fill ``self.params``."""

    kind = "module"

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def named_parameters(self) -> dict[str, Tensor]:
        return self.params

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise DataError(f"state dict keys differ from model parameters: {sorted(missing)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise DataError(f"parameter {k}: shape {arr.shape} != expected {t.shape}")
            t.data = arr.copy()

    def fingerprint(self) -> str:
        """SHA-256 over parameter names, shapes and bytes."""
        h = hashlib.sha256()
        for k, t in self.params.items():
            h.update(k.encode())
            h.update(repr(t.shape).encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


def glorot_uniform(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(shape, -limit, limit)
