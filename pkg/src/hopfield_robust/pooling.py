"""Trainable multi-head Hopfield pooling denoiser.

An image is cut into S stored patterns of width d_in (the *arrangement*). Each
head projects them to keys K = Y W_K and values V = Y W_V, then evolves a
learned state pattern s (initialised from q) in key space:

    s <- K^T softmax(beta K s)

for at most ``update_steps_max`` steps or until the step norm is below ``tol``.
The head output is V^T softmax(beta K s*). Head outputs are concatenated and
mapped by W_O back to S * d_in pixels, which are inverse-arranged to an image.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import DataError, NumericError, ParameterError
from .tensor import AdamW, Rng, Tensor, concat, gaussian_sample, matmul, mse_loss, parameter
from .tensor import reshape, softmax, transpose
from .tensor.module import Module, glorot_uniform

IMAGE_SIDE = 28
IMAGE_PIXELS = IMAGE_SIDE * IMAGE_SIDE


class Arrangement:
    """How a 28x28 image is split into stored patterns.

    ``singleton``: one pattern of 784 pixels. ``rows``: 28 patterns of 28
    pixels. ``patches``: (28/p)^2 non-overlapping p x p patches.
    """

    def __init__(self, variant: str = "singleton", patch: int = 7):
        if variant not in ("singleton", "rows", "patches"):
            raise ParameterError(f"unknown arrangement {variant!r}")
        if variant == "patches" and (patch < 1 or IMAGE_SIDE % patch):
            raise ParameterError(f"patch size must divide {IMAGE_SIDE}, got {patch}")
        self.variant = variant
        self.patch = patch

    @classmethod
    def parse(cls, text: str) -> "Arrangement":
        """Parse ``singleton``, ``rows`` or ``patches:<p>``."""
        if text.startswith("patches"):
            _, _, p = text.partition(":")
            return cls("patches", int(p) if p else 7)
        return cls(text)

    def __str__(self) -> str:
        return f"patches:{self.patch}" if self.variant == "patches" else self.variant

    def __eq__(self, other) -> bool:
        return isinstance(other, Arrangement) and str(self) == str(other)

    @property
    def num_patterns(self) -> int:
        return {"singleton": 1, "rows": IMAGE_SIDE}.get(self.variant, (IMAGE_SIDE // self.patch) ** 2)

    @property
    def pattern_size(self) -> int:
        return IMAGE_PIXELS // self.num_patterns

    def arrange(self, images: np.ndarray) -> np.ndarray:
        """(B, 784) or (B, 28, 28) -> (B, S, d_in)."""
        x = np.asarray(images, dtype=np.float64).reshape(-1, IMAGE_SIDE, IMAGE_SIDE)
        b = x.shape[0]
        if self.variant == "patches":
            p, g = self.patch, IMAGE_SIDE // self.patch
            x = x.reshape(b, g, p, g, p).transpose(0, 1, 3, 2, 4)
        return np.ascontiguousarray(x).reshape(b, self.num_patterns, self.pattern_size)

    def inverse(self, arranged: np.ndarray) -> np.ndarray:
        """(B, S, d_in) or (B, S * d_in) -> (B, 784)."""
        x = np.asarray(arranged)
        b = x.shape[0]
        if self.variant == "patches":
            p, g = self.patch, IMAGE_SIDE // self.patch
            x = x.reshape(b, g, g, p, p).transpose(0, 1, 3, 2, 4)
        return np.ascontiguousarray(x).reshape(b, IMAGE_PIXELS)

    def inverse_tensor(self, out: Tensor) -> Tensor:
        b = out.shape[0]
        if self.variant != "patches":
            return reshape(out, (b, IMAGE_PIXELS))
        p, g = self.patch, IMAGE_SIDE // self.patch
        return reshape(transpose(reshape(out, (b, g, g, p, p)), (0, 1, 3, 2, 4)), (b, IMAGE_PIXELS))


@dataclass
class PoolingConfig:
    """Layer hyperparameters; defaults follow the published training setup."""

    input_size: int = IMAGE_PIXELS   # width of one stored pattern
    hidden_size: int = 8             # association (key/state) dimension
    num_heads: int = 8
    value_size: int | None = None    # defaults to hidden_size
    output_size: int = IMAGE_PIXELS  # S * input_size for the denoiser
    update_steps_max: int = 5
    scaling: float = 0.25            # softmax beta
    tol: float = 1e-4

    def __post_init__(self):
        if self.value_size is None:
            self.value_size = self.hidden_size
        if not self.scaling > 0:
            raise ParameterError(f"scaling must be positive, got {self.scaling}")
        if self.update_steps_max < 1:
            raise ParameterError("update_steps_max must be >= 1")
        if self.tol < 0:
            raise ParameterError("tol must be non-negative")
        if min(self.input_size, self.hidden_size, self.num_heads, self.value_size, self.output_size) < 1:
            raise ParameterError("all layer sizes must be positive")

    @classmethod
    def for_arrangement(cls, arrangement: Arrangement, **overrides) -> "PoolingConfig":
        return cls(input_size=arrangement.pattern_size, output_size=IMAGE_PIXELS, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


class HopfieldPooling(Module):
    kind = "hopfield"

    def __init__(self, config: PoolingConfig, rng: Rng, arrangement: Arrangement | None = None):
        super().__init__()
        self.config = config
        self.arrangement = arrangement or Arrangement()
        c = config
        for i in range(c.num_heads):
            self.params[f"head{i}.key"] = parameter(
                glorot_uniform(rng, c.input_size, c.hidden_size, (c.input_size, c.hidden_size)))
            self.params[f"head{i}.value"] = parameter(
                glorot_uniform(rng, c.input_size, c.value_size, (c.input_size, c.value_size)))
            self.params[f"head{i}.state"] = parameter(np.zeros(c.hidden_size))
        fan_in = c.num_heads * c.value_size
        self.params["out"] = parameter(
            glorot_uniform(rng, fan_in, c.output_size, (fan_in, c.output_size)))
        self.last_steps: list[int] = []

    def forward_stored(self, stored: Tensor) -> Tensor:
        """(B, S, d_in) stored patterns -> (B, output_size)."""
        c = self.config
        if stored.ndim != 3 or stored.shape[2] != c.input_size:
            raise DataError(f"stored patterns must be (B, S, {c.input_size}), got {stored.shape}")
        b = stored.shape[0]
        heads = []
        self.last_steps = []
        for i in range(c.num_heads):
            keys = matmul(stored, self.params[f"head{i}.key"])        # (B, S, d_a)
            values = matmul(stored, self.params[f"head{i}.value"])    # (B, S, d_v)
            keys_t = transpose(keys, (0, 2, 1))                       # (B, d_a, S)
            state = reshape(self.params[f"head{i}.state"], (1, c.hidden_size, 1))
            steps = 0
            for steps in range(1, c.update_steps_max + 1):
                weights = softmax(matmul(keys, state), axis=1, beta=c.scaling)
                new = matmul(keys_t, weights)                         # (B, d_a, 1)
                delta = np.sqrt(((new.data - state.data) ** 2).sum(axis=(1, 2))).max()
                state = new
                if delta < c.tol:
                    break
            self.last_steps.append(steps)
            weights = softmax(matmul(keys, state), axis=1, beta=c.scaling)
            heads.append(reshape(matmul(transpose(values, (0, 2, 1)), weights), (b, c.value_size)))
        return matmul(concat(heads, axis=1), self.params["out"])

    def forward(self, images) -> Tensor:
        """(B, 784) images in [0, 1] (or noised) -> (B, 784) reconstructions."""
        data = images.data if isinstance(images, Tensor) else np.asarray(images, dtype=np.float64)
        if data.ndim == 1:
            data = data[None]
        if data.shape[-1] != IMAGE_PIXELS and data.shape[-2:] != (IMAGE_SIDE, IMAGE_SIDE):
            raise DataError(f"expected images of {IMAGE_PIXELS} pixels, got {data.shape}")
        stored = Tensor(self.arrangement.arrange(data))
        return self.arrangement.inverse_tensor(self.forward_stored(stored))


def init_params(rng: Rng, config: PoolingConfig | None = None,
                arrangement: Arrangement | None = None) -> HopfieldPooling:
    """Glorot-uniform projections, zero learned state patterns."""
    arrangement = arrangement or Arrangement()
    config = config or PoolingConfig.for_arrangement(arrangement)
    return HopfieldPooling(config, rng, arrangement)


def pooling_forward(image: np.ndarray, model: HopfieldPooling) -> np.ndarray:
    """Forward a single 784-pixel image; returns 784 unclamped values."""
    image = np.asarray(image, dtype=np.float64)
    if image.size != IMAGE_PIXELS:
        raise DataError(f"image must have {IMAGE_PIXELS} pixels, got {image.size}")
    return model(image.reshape(1, IMAGE_PIXELS)).data[0]


def denoise_batch(images: np.ndarray, model: Module, chunk: int = 500,
                  clamp: bool = True) -> np.ndarray:
    """Apply a denoiser in eval mode; output clamped to [0, 1] for the classifier."""
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    if x.shape[1] != IMAGE_PIXELS:
        raise DataError(f"images must have {IMAGE_PIXELS} pixels, got {x.shape[1]}")
    out = np.empty_like(x)
    for start in range(0, len(x), chunk):
        out[start:start + chunk] = model(x[start:start + chunk]).data
    return np.clip(out, 0.0, 1.0) if clamp else out


def train_denoiser(
    model: Module,
    clean: np.ndarray,
    rng: Rng,
    epochs: int = 20,
    batch: int = 20,
    noise_std: float = 0.5,
    lr: float = 1e-3,
    weight_decay: float = 0.01,
    on_epoch: Callable[[int, float], None] | None = None,
) -> list[float]:
    """Minimise per-pixel MSE between clean images and model(clean + noise).

    Noise is redrawn for every batch of every epoch and is not clamped. Returns
    the mean training MSE of each epoch.
    """
    if len(clean) == 0:
        raise DataError("cannot train on an empty dataset")
    x = np.asarray(clean, dtype=np.float64).reshape(len(clean), -1)
    if batch < 1 or epochs < 0:
        raise ParameterError("batch must be >= 1 and epochs >= 0")
    opt = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        total, count = 0.0, 0
        for start in range(0, len(x), batch):
            xb = x[order[start:start + batch]]
            noisy = gaussian_sample(rng, xb.shape, xb, noise_std)
            loss = mse_loss(model(noisy), Tensor(xb))
            if not np.isfinite(loss.data):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(xb)
            count += len(xb)
        curve.append(total / count)
        if on_epoch is not None:
            on_epoch(epoch + 1, curve[-1])
    return curve
