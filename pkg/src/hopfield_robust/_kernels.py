"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics. Setting the
environment variable ``HOPFIELD_ROBUST_PURE_NUMPY=1`` before import selects the
numpy path; the numba path is otherwise used whenever numba imports cleanly.
Both implementations stay importable (``NUMPY_KERNELS`` / ``NUMBA_KERNELS``) so
tests and benchmarks can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

PURE_NUMPY = os.environ.get("HOPFIELD_ROBUST_PURE_NUMPY", "0") not in ("", "0")


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Sliding windows of a padded NHWC batch as a (B, Ho, Wo, kh, kw, C) copy."""
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # (B, Ho, Wo, C, kh, kw) -> (B, Ho, Wo, kh, kw, C)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


# --------------------------------------------------------------------------
# numpy implementations


def _col2im_numpy(cols, hp, wp, stride):
    b, ho, wo, kh, kw, c = cols.shape
    out = np.zeros((b, hp, wp, c))
    hspan = stride * (ho - 1) + 1
    wspan = stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[:, i:i + hspan:stride, j:j + wspan:stride, :] += cols[:, :, :, i, j, :]
    return out


def _maxpool_forward_numpy(x, kh, kw, stride):
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    b, ho, wo, c = win.shape[:4]
    flat = win.reshape(b, ho, wo, c, kh * kw)
    # np.argmax returns the first maximal index, i.e. row-major first on ties
    idx = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.int64)


def _maxpool_backward_numpy(dout, idx, h, w, kh, kw, stride):
    b, ho, wo, c = dout.shape
    dx = np.zeros((b, h, w, c))
    hspan = stride * (ho - 1) + 1
    wspan = stride * (wo - 1) + 1
    for o in range(kh * kw):
        i, j = divmod(o, kw)
        dx[:, i:i + hspan:stride, j:j + wspan:stride, :] += np.where(idx == o, dout, 0.0)
    return dx


def _async_sweep_numpy(sigma, weights, order):
    flips = 0
    for i in order:
        field = weights[i] @ sigma
        new = 1.0 if field >= 0.0 else -1.0
        if new != sigma[i]:
            sigma[i] = new
            flips += 1
    return flips


# --------------------------------------------------------------------------
# loop implementations (numba-compiled below)


def _col2im_loops(cols, hp, wp, stride):
    b, ho, wo, kh, kw, c = cols.shape
    out = np.zeros((b, hp, wp, c))
    for n in range(b):
        for y in range(ho):
            for x in range(wo):
                for i in range(kh):
                    for j in range(kw):
                        oy = y * stride + i
                        ox = x * stride + j
                        for ch in range(c):
                            out[n, oy, ox, ch] += cols[n, y, x, i, j, ch]
    return out


def _maxpool_forward_loops(x, kh, kw, stride):
    b, h, w, c = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.empty((b, ho, wo, c))
    idx = np.empty((b, ho, wo, c), dtype=np.int64)
    for n in range(b):
        for y in range(ho):
            for xx in range(wo):
                for ch in range(c):
                    best = x[n, y * stride, xx * stride, ch]
                    arg = 0
                    for i in range(kh):
                        for j in range(kw):
                            v = x[n, y * stride + i, xx * stride + j, ch]
                            if v > best:
                                best = v
                                arg = i * kw + j
                    out[n, y, xx, ch] = best
                    idx[n, y, xx, ch] = arg
    return out, idx


def _maxpool_backward_loops(dout, idx, h, w, kh, kw, stride):
    b, ho, wo, c = dout.shape
    dx = np.zeros((b, h, w, c))
    for n in range(b):
        for y in range(ho):
            for xx in range(wo):
                for ch in range(c):
                    a = idx[n, y, xx, ch]
                    i = a // kw
                    j = a - i * kw
                    dx[n, y * stride + i, xx * stride + j, ch] += dout[n, y, xx, ch]
    return dx


def _async_sweep_loops(sigma, weights, order):
    n = sigma.shape[0]
    flips = 0
    for k in range(order.shape[0]):
        i = order[k]
        field = 0.0
        for j in range(n):
            field += weights[i, j] * sigma[j]
        new = 1.0 if field >= 0.0 else -1.0
        if new != sigma[i]:
            sigma[i] = new
            flips += 1
    return flips


NUMPY_KERNELS = {
    "col2im": _col2im_numpy,
    "maxpool_forward": _maxpool_forward_numpy,
    "maxpool_backward": _maxpool_backward_numpy,
    "async_sweep": _async_sweep_numpy,
}

if HAVE_NUMBA:
    NUMBA_KERNELS = {
        "col2im": njit(cache=True)(_col2im_loops),
        "maxpool_forward": njit(cache=True)(_maxpool_forward_loops),
        "maxpool_backward": njit(cache=True)(_maxpool_backward_loops),
        "async_sweep": njit(cache=True)(_async_sweep_loops),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

BACKEND = "numba" if (HAVE_NUMBA and not PURE_NUMPY) else "numpy"
_ACTIVE = NUMBA_KERNELS if BACKEND == "numba" else NUMPY_KERNELS


def col2im(cols: np.ndarray, hp: int, wp: int, stride: int) -> np.ndarray:
    """Scatter-add window columns back onto a (B, hp, wp, C) canvas."""
    return _ACTIVE["col2im"](np.ascontiguousarray(cols), hp, wp, stride)


def maxpool_forward(x: np.ndarray, kh: int, kw: int, stride: int):
    return _ACTIVE["maxpool_forward"](np.ascontiguousarray(x), kh, kw, stride)


def maxpool_backward(dout, idx, h, w, kh, kw, stride):
    return _ACTIVE["maxpool_backward"](np.ascontiguousarray(dout), idx, h, w, kh, kw, stride)


def async_sweep(sigma: np.ndarray, weights: np.ndarray, order: np.ndarray) -> int:
    """Update neurons in ``order`` one at a time, in place. Returns the flip count."""
    return _ACTIVE["async_sweep"](sigma, weights, order)
