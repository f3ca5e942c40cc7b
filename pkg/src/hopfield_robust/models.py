"""Baseline CNN classifier and the convolutional denoising autoencoder (CDAE)."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .data import ImageDataset
from .errors import DataError, NumericError, ParameterError
from .pooling import IMAGE_PIXELS, train_denoiser
from .tensor import (
    AdamW, Rng, Tensor, conv2d, conv2d_transpose, dropout, flatten, linear, log_softmax,
    maxpool2d, nll_loss, parameter, relu, reshape, sigmoid,
)
from .tensor.module import Module

MNIST_MEAN = 0.1307
MNIST_STD = 0.3081


def _torch_default(rng: Rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(shape, -bound, bound)


def _as_images(x, name: str) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if data.ndim == 1:
        data = data[None]
    if data.size % IMAGE_PIXELS or data.shape[-1] not in (IMAGE_PIXELS, 28, 1):
        raise DataError(f"{name}: expected 28x28 images, got shape {data.shape}")
    return data.reshape(-1, 28, 28, 1)


class CnnClassifier(Module):
    """conv(1->32) relu conv(32->64) relu maxpool dropout fc(9216->128) relu dropout fc(128->10).

    Inputs are [0, 1] images; the MNIST mean/std standardisation happens here,
    at the classifier boundary.
    """

    kind = "baseline"

    def __init__(self, rng: Rng):
        super().__init__()
        p = self.params
        p["conv1.weight"] = parameter(_torch_default(rng, 9, (3, 3, 1, 32)))
        p["conv1.bias"] = parameter(_torch_default(rng, 9, (32,)))
        p["conv2.weight"] = parameter(_torch_default(rng, 288, (3, 3, 32, 64)))
        p["conv2.bias"] = parameter(_torch_default(rng, 288, (64,)))
        p["fc1.weight"] = parameter(_torch_default(rng, 9216, (9216, 128)))
        p["fc1.bias"] = parameter(_torch_default(rng, 9216, (128,)))
        p["fc2.weight"] = parameter(_torch_default(rng, 128, (128, 10)))
        p["fc2.bias"] = parameter(_torch_default(rng, 128, (10,)))
        self.flat_width: int | None = None

    def forward(self, images, training: bool = False, rng: Rng | None = None) -> Tensor:
        p = self.params
        x = Tensor((_as_images(images, "cnn_forward") - MNIST_MEAN) / MNIST_STD)
        x = relu(conv2d(x, p["conv1.weight"], 1, 0, p["conv1.bias"]))
        x = relu(conv2d(x, p["conv2.weight"], 1, 0, p["conv2.bias"]))
        x = dropout(maxpool2d(x, 2), 0.25, rng, training)
        x = flatten(x)
        self.flat_width = x.shape[1]
        x = dropout(relu(linear(x, p["fc1.weight"], p["fc1.bias"])), 0.5, rng, training)
        return log_softmax(linear(x, p["fc2.weight"], p["fc2.bias"]), axis=1)


def cnn_forward(image, model: CnnClassifier, training: bool = False,
                rng: Rng | None = None) -> np.ndarray:
    """Log-probabilities (10,) for one image, or (B, 10) for a batch."""
    out = model(image, training=training, rng=rng).data
    return out[0] if np.asarray(image).ndim in (1, 2) and out.shape[0] == 1 else out


class Cdae(Module):
    """Convolutional denoising autoencoder.

    Encoder: three (3x3 conv, pad 1, ReLU, 2x2 max-pool) blocks with 32, 16 and
    8 kernels, 28x28x1 -> 3x3x8. Decoder: transposed convs 8 (3x3, stride 2),
    16 (2x2, stride 2), 32 (2x2, stride 2) with ReLU, then a 3x3 conv to one
    channel and a sigmoid in place of the last ReLU.
    """

    kind = "cdae"

    ENCODER = (("enc1", 1, 32), ("enc2", 32, 16), ("enc3", 16, 8))
    DECODER = (("dec1", 8, 8, 3), ("dec2", 8, 16, 2), ("dec3", 16, 32, 2))

    def __init__(self, rng: Rng):
        super().__init__()
        p = self.params
        for name, cin, cout in self.ENCODER:
            p[f"{name}.weight"] = parameter(_torch_default(rng, cin * 9, (3, 3, cin, cout)))
            p[f"{name}.bias"] = parameter(_torch_default(rng, cin * 9, (cout,)))
        for name, cin, cout, k in self.DECODER:
            # transposed kernels are (k, k, C_out, C_in); torch uses C_out * k * k as fan-in
            p[f"{name}.weight"] = parameter(_torch_default(rng, cout * k * k, (k, k, cout, cin)))
            p[f"{name}.bias"] = parameter(_torch_default(rng, cout * k * k, (cout,)))
        p["out.weight"] = parameter(_torch_default(rng, 32 * 9, (3, 3, 32, 1)))
        p["out.bias"] = parameter(_torch_default(rng, 32 * 9, (1,)))

    def forward(self, images, trace: list | None = None) -> Tensor:
        p = self.params
        x = Tensor(_as_images(images, "cdae_forward"))
        b = x.shape[0]

        def note(t):
            if trace is not None:
                trace.append(tuple(t.shape[1:]))
            return t

        for name, _, _ in self.ENCODER:
            x = note(relu(conv2d(x, p[f"{name}.weight"], 1, 1, p[f"{name}.bias"])))
            x = note(maxpool2d(x, 2, 2))
        for name, _, _, k in self.DECODER:
            x = note(relu(conv2d_transpose(x, p[f"{name}.weight"], 2, 0, p[f"{name}.bias"])))
        x = note(sigmoid(conv2d(x, p["out.weight"], 1, 1, p["out.bias"])))
        return reshape(x, (b, IMAGE_PIXELS))


def cdae_forward(image, model: Cdae) -> np.ndarray:
    return model(np.asarray(image).reshape(-1, IMAGE_PIXELS)).data.reshape(np.shape(image))


def train_classifier(
    model: CnnClassifier,
    data: ImageDataset,
    rng: Rng,
    epochs: int = 20,
    batch: int = 20,
    lr: float = 1e-3,
    weight_decay: float = 0.01,
    on_epoch: Callable[[int, float], None] | None = None,
    on_batch: Callable[[int, int, float], None] | None = None,
) -> list[float]:
    """NLL training with AdamW; returns the mean loss of each epoch."""
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    if batch < 1 or epochs < 0:
        raise ParameterError("batch must be >= 1 and epochs >= 0")
    x = data.unit()
    y = data.labels.astype(np.int64)
    opt = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    curve = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(x))
        total = 0.0
        for step, start in enumerate(range(0, len(x), batch)):
            idx = order[start:start + batch]
            loss = nll_loss(model(x[idx], training=True, rng=rng), y[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * len(idx)
            if on_batch is not None:
                on_batch(epoch, step, value)
        curve.append(total / len(x))
        if on_epoch is not None:
            on_epoch(epoch, curve[-1])
    return curve


def train_cdae(model: Cdae, clean: np.ndarray, rng: Rng, epochs: int = 20, batch: int = 20,
               **kwargs) -> list[float]:
    """Same Gaussian denoising protocol as the Hopfield layer."""
    return train_denoiser(model, clean, rng, epochs=epochs, batch=batch, **kwargs)


def predict_log_probs(model: CnnClassifier, images: np.ndarray, chunk: int = 500) -> np.ndarray:
    """Eval-mode log-probabilities, (N, 10)."""
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    out = np.empty((len(x), 10))
    for start in range(0, len(x), chunk):
        out[start:start + chunk] = model(x[start:start + chunk]).data
    return out


def accuracy(model: CnnClassifier, data: ImageDataset) -> float:
    """Clean accuracy in percent."""
    pred = predict_log_probs(model, data.unit()).argmax(axis=1)
    return 100.0 * float(np.mean(pred == data.labels))
