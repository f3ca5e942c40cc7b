import os
from pathlib import Path

import numpy as np
import pytest

from hopfield_robust.data import ImageDataset


def pytest_addoption(parser):
    parser.addoption("--mnist-dir", default=os.environ.get("HOPFIELD_ROBUST_MNIST_DIR"),
                     help="directory with MNIST IDX files (enables real-data tests)")
    parser.addoption("--mnist-c-dir", default=os.environ.get("HOPFIELD_ROBUST_MNIST_C_DIR"),
                     help="MNIST-C root directory (enables end-to-end robustness tests)")


@pytest.fixture(scope="session")
def mnist_dir(request):
    path = request.config.getoption("--mnist-dir")
    return Path(path) if path and Path(path).is_dir() else None


@pytest.fixture(scope="session")
def mnist_c_dir(request):
    path = request.config.getoption("--mnist-c-dir")
    return Path(path) if path and Path(path).is_dir() else None


def _stroke(canvas, r0, c0, r1, c1, width=2):
    for t in np.linspace(0.0, 1.0, 40):
        r, c = int(round(r0 + t * (r1 - r0))), int(round(c0 + t * (c1 - c0)))
        canvas[max(r - width // 2, 0):r + width - width // 2, max(c - width // 2, 0):c + width - width // 2] = 255


# crude seven-segment-style glyphs: enough structure for classifiers and denoisers to learn
_SEGMENTS = {
    "a": (6, 9, 6, 18), "b": (6, 18, 13, 18), "c": (13, 18, 21, 18), "d": (21, 9, 21, 18),
    "e": (13, 9, 21, 9), "f": (6, 9, 13, 9), "g": (13, 9, 13, 18),
}
_DIGITS = ["abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg"]


def synthetic_digits(n, seed=0):
    """(n, 28, 28) uint8 glyph images with random shifts, plus labels."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n).astype(np.uint8)
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    for i, y in enumerate(labels):
        canvas = np.zeros((28, 28), dtype=np.uint8)
        for seg in _DIGITS[y]:
            _stroke(canvas, *_SEGMENTS[seg])
        dr, dc = rng.integers(-2, 3, 2)
        images[i] = np.roll(canvas, (dr, dc), axis=(0, 1))
    return ImageDataset(images, labels, "synthetic")


@pytest.fixture(scope="session")
def digits():
    return synthetic_digits(600, seed=0)
