"""Convolution, pooling, dropout and loss operators on NHWC batches.

Image tensors are (B, H, W, C); unbatched (H, W, C) inputs are accepted and
returned unbatched. Convolution kernels are (kh, kw, C_in, C_out) and the
transposed convolution reuses the same layout, mapping C_out back to C_in, so
``conv2d_transpose(., k)`` is the adjoint of ``conv2d(., k)``.
"""
from __future__ import annotations

import numpy as np

from .. import _kernels
from ..errors import DataError, ParameterError, ShapeError
from .random import Rng
from .tensor import Tensor, _make, as_tensor, matmul


def _batched(x: Tensor, name: str) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected (H, W, C) or (B, H, W, C), got {x.shape}")
    return x, False


def _unbatch(out: Tensor, squeeze: bool) -> Tensor:
    return out.reshape(out.shape[1:]) if squeeze else out


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x, kernels, stride: int = 1, padding: int = 0, bias=None) -> Tensor:
    """Cross-correlation of an NHWC batch with (kh, kw, C_in, C_out) kernels."""
    x, squeeze = _batched(as_tensor(x), "conv2d")
    kernels = as_tensor(kernels)
    if kernels.ndim != 4:
        raise ShapeError(f"conv2d kernels must be 4-d, got {kernels.shape}")
    kh, kw, cin, cout = kernels.shape
    b, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"conv2d: input has {c} channels, kernels expect {cin}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} / padding={padding}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}+{padding}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    cols = _kernels.im2col(xp, kh, kw, stride).reshape(b * ho * wo, kh * kw * cin)
    kmat = kernels.data.reshape(kh * kw * cin, cout)
    out = (cols @ kmat).reshape(b, ho, wo, cout)
    hp, wp = xp.shape[1], xp.shape[2]

    def bw(g):
        g2 = g.reshape(b * ho * wo, cout)
        gk = (cols.T @ g2).reshape(kernels.shape)
        dcols = (g2 @ kmat.T).reshape(b, ho, wo, kh, kw, cin)
        dxp = _kernels.col2im(dcols, hp, wp, stride)
        gx = dxp[:, padding:padding + h, padding:padding + w, :]
        return gx, gk

    y = _make(out, (x, kernels), bw, "conv2d")
    if bias is not None:
        y = y + bias
    return _unbatch(y, squeeze)


def conv2d_transpose(x, kernels, stride: int = 1, padding: int = 0, bias=None) -> Tensor:
    """Transposed convolution; output size is (H - 1) * stride - 2 * padding + kh."""
    x, squeeze = _batched(as_tensor(x), "conv2d_transpose")
    kernels = as_tensor(kernels)
    if kernels.ndim != 4:
        raise ShapeError(f"conv2d_transpose kernels must be 4-d, got {kernels.shape}")
    kh, kw, cout, cin = kernels.shape
    b, h, w, c = x.shape
    if c != cin:
        raise ShapeError(f"conv2d_transpose: input has {c} channels, kernels expect {cin}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d_transpose: invalid stride={stride} / padding={padding}")
    hp = (h - 1) * stride + kh
    wp = (w - 1) * stride + kw
    ho, wo = hp - 2 * padding, wp - 2 * padding
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d_transpose: padding {padding} leaves no output")

    kmat = kernels.data.reshape(kh * kw * cout, cin)
    xd = x.data.reshape(b * h * w, cin)
    cols = (xd @ kmat.T).reshape(b, h, w, kh, kw, cout)
    out = _kernels.col2im(cols, hp, wp, stride)[:, padding:padding + ho, padding:padding + wo, :]

    def bw(g):
        gp = np.pad(g, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
        gcols = _kernels.im2col(gp, kh, kw, stride).reshape(b * h * w, kh * kw * cout)
        gx = (gcols @ kmat).reshape(b, h, w, cin)
        gk = (gcols.T @ xd).reshape(kernels.shape)
        return gx, gk

    y = _make(np.ascontiguousarray(out), (x, kernels), bw, "conv2d_transpose")
    if bias is not None:
        y = y + bias
    return _unbatch(y, squeeze)


def maxpool2d(x, window: int = 2, stride: int | None = None) -> Tensor:
    """Window maximum; gradient routes to the first maximal entry (row-major)."""
    x, squeeze = _batched(as_tensor(x), "maxpool2d")
    stride = window if stride is None else stride
    b, h, w, c = x.shape
    if window < 1 or stride < 1 or window > h or window > w:
        raise ShapeError(f"maxpool2d: window {window} / stride {stride} invalid for {h}x{w}")
    out, idx = _kernels.maxpool_forward(x.data, window, window, stride)

    def bw(g):
        return (_kernels.maxpool_backward(g, idx, h, w, window, window, stride),)

    return _unbatch(_make(out, (x,), bw, "maxpool2d"), squeeze)


def linear(x, weight, bias=None) -> Tensor:
    """x @ weight (+ bias), weight shaped (in, out)."""
    y = matmul(x, weight)
    return y + bias if bias is not None else y


def dropout(x, p: float, rng: Rng | None, training: bool) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs an Rng")
    mask = (rng.uniform(x.shape) >= p) / (1.0 - p)
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def mse_loss(pred, target) -> Tensor:
    """Per-pixel mean squared error: divides by batch size and pixel count."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def bw(g):
        gp = g * 2.0 * diff / n
        return gp, -gp

    return _make(np.mean(diff * diff), (pred, target), bw, "mse")


def nll_loss(log_probs, labels) -> Tensor:
    """Mean of -log_probs[i, labels[i]]."""
    log_probs = as_tensor(log_probs)
    labels = np.asarray(labels)
    if log_probs.ndim != 2 or labels.shape != (log_probs.shape[0],):
        raise ShapeError(f"nll_loss: log_probs {log_probs.shape} vs labels {labels.shape}")
    k = log_probs.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"nll_loss: labels must lie in [0, {k})")
    labels = labels.astype(np.int64)
    rows = np.arange(labels.size)
    n = labels.size

    def bw(g):
        gl = np.zeros(log_probs.shape)
        gl[rows, labels] = -g / n
        return (gl,)

    return _make(-log_probs.data[rows, labels].mean(), (log_probs,), bw, "nll")
