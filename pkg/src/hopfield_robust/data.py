"""MNIST (IDX) and MNIST-C (NPY) ingestion plus Gaussian corruption.

Parsers are total: every malformed byte string raises a ``FormatError`` /
``LengthError`` / ``DataError`` and header-declared sizes are checked against
the actual payload before anything is allocated from them.
"""
from __future__ import annotations

import ast
import gzip
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, LengthError
from .tensor.random import Rng, gaussian_sample

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
NPY_MAGIC = b"\x93NUMPY"

IDENTITY = "identity"
CORRUPTIONS = (
    "brightness", "canny_edges", "dotted_line", "fog", "glass_blur", "impulse_noise",
    "motion_blur", "rotate", "scale", "shear", "shot_noise", "spatter", "stripe",
    "translate", "zigzag",
)

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class ImageDataset:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8
    name: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.images.ndim == 4 and self.images.shape[-1] == 1:
            self.images = self.images[..., 0]
        if self.images.ndim != 3 or self.images.shape[1:] != (28, 28):
            raise DataError(f"{self.name}: images must be (N, 28, 28), got {self.images.shape}")
        if self.labels.shape != (len(self.images),):
            raise DataError(f"{self.name}: {len(self.images)} images but labels {self.labels.shape}")
        if self.labels.size and self.labels.max() >= 10:
            raise DataError(f"{self.name}: label {int(self.labels.max())} out of range")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int | None) -> "ImageDataset":
        if n is None or n >= len(self):
            return self
        return ImageDataset(self.images[:n], self.labels[:n], self.name)

    def unit(self) -> np.ndarray:
        """Images as (N, 784) float64 in [0, 1]."""
        return to_unit_interval(self.images).reshape(len(self), -1)


@dataclass
class CorruptionSet:
    """Ordered corruption name -> dataset; ``identity`` is the clean test set."""

    datasets: dict[str, ImageDataset]
    missing: list[str] = field(default_factory=list)

    def __post_init__(self):
        names = list(self.datasets)
        if not names:
            raise DataError("corruption set is empty")
        ref = self.datasets[names[0]].labels
        for name in names[1:]:
            if not np.array_equal(self.datasets[name].labels, ref):
                raise DataError(f"labels of {name!r} differ from labels of {names[0]!r}")

    def __iter__(self):
        return iter(self.datasets.items())

    def __len__(self) -> int:
        return len(self.datasets)

    def __getitem__(self, name: str) -> ImageDataset:
        return self.datasets[name]

    def names(self) -> list[str]:
        return list(self.datasets)

    def subset(self, n: int | None) -> "CorruptionSet":
        return CorruptionSet({k: v.subset(n) for k, v in self.datasets.items()}, list(self.missing))


# --------------------------------------------------------------------------
# IDX


def _idx_header(data: bytes, magic: int, ndims: int, kind: str) -> tuple[int, ...]:
    need = 4 * (ndims + 1)
    if len(data) < need:
        if len(data) >= 4 and struct.unpack(">I", data[:4])[0] != magic:
            raise FormatError(f"IDX {kind}: bad magic {data[:4].hex()}")
        raise LengthError(f"IDX {kind}: header truncated at {len(data)} bytes")
    got, *dims = struct.unpack(f">{ndims + 1}I", data[:need])
    if got != magic:
        raise FormatError(f"IDX {kind}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    return tuple(dims)


def _reshape(flat: np.ndarray, shape: tuple, kind: str) -> np.ndarray:
    # an empty payload can still declare absurd dimensions, e.g. (0, 2**32, 2**32)
    try:
        return flat.reshape(shape).copy()
    except ValueError:
        raise FormatError(f"{kind}: cannot represent shape {shape}") from None


def parse_idx_images(data: bytes) -> np.ndarray:
    """Decode an IDX3 image file into an (N, rows, cols) uint8 array."""
    data = bytes(data)
    n, rows, cols = _idx_header(data, IDX_IMAGES_MAGIC, 3, "images")
    payload = len(data) - 16
    if payload != n * rows * cols:
        raise LengthError(f"IDX images: header declares {n}x{rows}x{cols} = {n * rows * cols} "
                          f"bytes, payload has {payload}")
    return _reshape(np.frombuffer(data, dtype=np.uint8, offset=16), (n, rows, cols), "IDX images")


def parse_idx_labels(data: bytes) -> np.ndarray:
    data = bytes(data)
    (n,) = _idx_header(data, IDX_LABELS_MAGIC, 1, "labels")
    if len(data) - 8 != n:
        raise LengthError(f"IDX labels: header declares {n} labels, payload has {len(data) - 8}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8).copy()
    if labels.size and labels.max() >= 10:
        raise DataError(f"IDX labels: label {int(labels.max())} out of range [0, 10)")
    return labels


def encode_idx_images(images: np.ndarray) -> bytes:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DataError(f"IDX images must be 3-d, got {images.shape}")
    return struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes()


def encode_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise DataError(f"IDX labels must be 1-d, got {labels.shape}")
    return struct.pack(">2I", IDX_LABELS_MAGIC, labels.size) + labels.tobytes()


# --------------------------------------------------------------------------
# NPY


def parse_npy_u8(data: bytes) -> tuple[tuple[int, ...], np.ndarray]:
    """Decode a C-ordered uint8 .npy file (format versions 1.0 and 2.0)."""
    data = bytes(data)
    if len(data) < 8 or data[:6] != NPY_MAGIC:
        raise FormatError("NPY: bad magic")
    major, minor = data[6], data[7]
    if major == 1:
        if len(data) < 10:
            raise LengthError("NPY: header length field truncated")
        (hlen,) = struct.unpack("<H", data[8:10])
        start = 10
    elif major == 2:
        if len(data) < 12:
            raise LengthError("NPY: header length field truncated")
        (hlen,) = struct.unpack("<I", data[8:12])
        start = 12
    else:
        raise FormatError(f"NPY: unsupported format version {major}.{minor}")
    if minor != 0:
        raise FormatError(f"NPY: unsupported format version {major}.{minor}")
    if len(data) < start + hlen:
        raise LengthError(f"NPY: header declares {hlen} bytes, only {len(data) - start} present")
    try:
        text = data[start:start + hlen].decode("latin1")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # hostile headers can trigger escape-sequence warnings
            header = ast.literal_eval(text)
    except (SyntaxError, ValueError, TypeError, MemoryError, RecursionError):
        raise FormatError("NPY: header is not a Python literal") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError("NPY: header must be a dict with keys descr, fortran_order, shape")
    if header["descr"] not in ("|u1", "u1"):
        raise FormatError(f"NPY: only uint8 ('|u1') is accepted, got {header['descr']!r}")
    if header["fortran_order"] is not False:
        raise FormatError("NPY: Fortran-ordered arrays are not accepted")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(
            isinstance(d, int) and not isinstance(d, bool) and d >= 0 for d in shape):
        raise FormatError(f"NPY: invalid shape {shape!r}")
    count = 1
    for d in shape:
        count *= d
    payload = len(data) - start - hlen
    if payload != count:
        raise LengthError(f"NPY: shape {shape} needs {count} bytes, payload has {payload}")
    return shape, _reshape(np.frombuffer(data, dtype=np.uint8, offset=start + hlen), shape, "NPY")


def encode_npy_u8(array: np.ndarray) -> bytes:
    """Write a version 1.0 .npy file (64-byte aligned header, like numpy)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    shape = repr(tuple(int(d) for d in arr.shape))
    header = "{'descr': '|u1', 'fortran_order': False, 'shape': %s, }" % shape
    pad = 64 - (10 + len(header) + 1) % 64
    header = header + " " * (pad % 64) + "\n"
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1") + arr.tobytes()


# --------------------------------------------------------------------------
# datasets on disk


def _read(path: Path) -> bytes:
    for candidate in (path, path.with_name(path.name + ".gz")):
        if candidate.exists():
            raw = candidate.read_bytes()
            return gzip.decompress(raw) if candidate.suffix == ".gz" else raw
    raise FileNotFoundError(f"{path} (or {path.name}.gz) not found")


def load_mnist(root, split: str = "train") -> ImageDataset:
    """Load the MNIST ``train`` or ``test`` split from standard IDX file names."""
    img_name, lbl_name = MNIST_FILES[split]
    root = Path(root)
    images = parse_idx_images(_read(root / img_name))
    labels = parse_idx_labels(_read(root / lbl_name))
    return ImageDataset(images, labels, f"mnist-{split}")


def save_mnist(root, split: str, dataset: ImageDataset) -> None:
    img_name, lbl_name = MNIST_FILES[split]
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / img_name).write_bytes(encode_idx_images(dataset.images))
    (root / lbl_name).write_bytes(encode_idx_labels(dataset.labels))


def load_mnist_c(root, identity: ImageDataset) -> CorruptionSet:
    """Assemble ``identity`` plus every ``<root>/<corruption>/test_*.npy`` pair found.

    Missing corruption directories produce a warning and a partial set.
    """
    root = Path(root)
    datasets = {IDENTITY: ImageDataset(identity.images, identity.labels, IDENTITY)}
    missing = []
    for name in CORRUPTIONS:
        sub = root / name
        if not sub.is_dir():
            missing.append(name)
            continue
        _, images = parse_npy_u8((sub / "test_images.npy").read_bytes())
        _, labels = parse_npy_u8((sub / "test_labels.npy").read_bytes())
        ds = ImageDataset(images, labels, name)
        if not np.array_equal(ds.labels, identity.labels):
            raise DataError(f"labels of corruption {name!r} differ from the clean test labels")
        datasets[name] = ds
    if missing:
        warnings.warn(f"MNIST-C corruptions missing under {root}: {', '.join(missing)}",
                      stacklevel=2)
    return CorruptionSet(datasets, missing)


def save_mnist_c(root, name: str, dataset: ImageDataset) -> None:
    sub = Path(root) / name
    sub.mkdir(parents=True, exist_ok=True)
    (sub / "test_images.npy").write_bytes(encode_npy_u8(dataset.images[..., None]))
    (sub / "test_labels.npy").write_bytes(encode_npy_u8(dataset.labels))


# --------------------------------------------------------------------------
# pixel transforms


def to_unit_interval(images: np.ndarray) -> np.ndarray:
    return np.asarray(images, dtype=np.float64) / 255.0


def corrupt_gaussian(images: np.ndarray, rng: Rng, std: float = 0.5) -> np.ndarray:
    """x + std * z with z standard normal; not clamped."""
    images = np.asarray(images, dtype=np.float64)
    return gaussian_sample(rng, images.shape, images, std)
