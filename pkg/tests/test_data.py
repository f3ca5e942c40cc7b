import gzip
import io
import struct
import warnings

import numpy as np
import pytest

from hopfield_robust.data import (
    CORRUPTIONS, IDENTITY, CorruptionSet, ImageDataset, corrupt_gaussian, encode_idx_images,
    encode_idx_labels, encode_npy_u8, load_mnist, load_mnist_c, parse_idx_images,
    parse_idx_labels, parse_npy_u8, save_mnist, save_mnist_c, to_unit_interval,
)
from hopfield_robust.errors import DataError, FormatError, HopfieldRobustError, LengthError
from hopfield_robust.report import quantize
from hopfield_robust.tensor import Rng


def tiny_images(n=2, seed=0):
    return np.random.default_rng(seed).integers(0, 256, (n, 28, 28), dtype=np.uint8)


# ---------------------------------------------------------------- IDX


def test_idx_images_magic():
    data = encode_idx_images(tiny_images())
    assert data[:4] == b"\x00\x00\x08\x03"
    parse_idx_images(data)
    with pytest.raises(FormatError):
        parse_idx_images(b"\x00\x00\x08\x01" + data[4:])


def test_idx_images_roundtrip_bytes():
    data = encode_idx_images(tiny_images())
    assert encode_idx_images(parse_idx_images(data)) == data


def test_idx_images_length_error():
    imgs = tiny_images(2)
    data = struct.pack(">4I", 0x803, 3, 28, 28) + imgs.tobytes()
    with pytest.raises(LengthError):
        parse_idx_images(data)
    with pytest.raises(LengthError):
        parse_idx_images(b"\x00\x00\x08\x03\x00")


def test_idx_labels():
    data = encode_idx_labels(np.array([0, 9, 4], dtype=np.uint8))
    assert data[:4] == b"\x00\x00\x08\x01"
    assert encode_idx_labels(parse_idx_labels(data)) == data
    with pytest.raises(DataError):
        parse_idx_labels(data[:-1] + b"\x0b")
    with pytest.raises(FormatError):
        parse_idx_labels(b"\x00\x00\x08\x03" + data[4:])


# ---------------------------------------------------------------- NPY


def test_npy_magic_and_roundtrip():
    arr = tiny_images(2)[..., None]
    data = encode_npy_u8(arr)
    assert data[:6] == b"\x93NUMPY"
    shape, out = parse_npy_u8(data)
    assert shape == (2, 28, 28, 1)
    np.testing.assert_array_equal(out, arr)
    assert encode_npy_u8(out) == data
    with pytest.raises(FormatError):
        parse_npy_u8(b"\x93NUMPX" + data[6:])


def test_npy_matches_numpy_writer():
    """numpy's own writer as an independent oracle, both directions."""
    arr = tiny_images(3)
    buf = io.BytesIO()
    np.save(buf, arr)
    assert buf.getvalue() == encode_npy_u8(arr)
    np.testing.assert_array_equal(np.load(io.BytesIO(encode_npy_u8(arr))), arr)
    buf = io.BytesIO()
    np.lib.format.write_array(buf, arr, version=(2, 0))
    np.testing.assert_array_equal(parse_npy_u8(buf.getvalue())[1], arr)


def _npy(header: str, payload: bytes) -> bytes:
    h = header.encode("latin1") + b"\n"
    return b"\x93NUMPY\x01\x00" + struct.pack("<H", len(h)) + h + payload


def test_npy_length_contract():
    head = "{'descr': '|u1', 'fortran_order': False, 'shape': (2, 28, 28, 1), }"
    assert parse_npy_u8(_npy(head, bytes(1568)))[0] == (2, 28, 28, 1)
    with pytest.raises(LengthError):
        parse_npy_u8(_npy(head, bytes(1500)))


@pytest.mark.parametrize("header", [
    "{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }",
    "{'descr': '|u1', 'fortran_order': True, 'shape': (2,), }",
    "{'descr': '|u1', 'fortran_order': False, 'shape': (-2,), }",
    "{'descr': '|u1', 'fortran_order': False, 'shape': [2], }",
    "{'descr': '|u1', 'fortran_order': False}",
    "__import__('os')",
    "{'descr': '|u1', 'fortran_order': False, 'shape': (2,), 'extra': 1}",
])
def test_npy_rejects_bad_headers(header):
    with pytest.raises(FormatError):
        parse_npy_u8(_npy(header, bytes(2)))


def test_empty_payload_with_absurd_dims():
    with pytest.raises(FormatError):
        parse_idx_images(struct.pack(">4I", 0x803, 0, 2**32 - 1, 2**32 - 1))
    with pytest.raises(FormatError):
        parse_npy_u8(_npy("{'descr': '|u1', 'fortran_order': False, 'shape': (0, 2**62, 2**62), }", b""))


def test_npy_unsupported_version():
    data = bytearray(encode_npy_u8(np.zeros(3, np.uint8)))
    data[6] = 3
    with pytest.raises(FormatError):
        parse_npy_u8(bytes(data))


# ---------------------------------------------------------------- fuzzing


def _mutate(rng, data: bytes, head: int) -> bytes:
    buf = bytearray(data)
    kind = rng.integers(6)
    if kind == 0:  # flip random header bytes
        for _ in range(rng.integers(1, 4)):
            buf[rng.integers(min(head, len(buf)))] = rng.integers(256)
    elif kind == 1:  # truncate
        del buf[rng.integers(len(buf)):]
    elif kind == 2:  # insert junk into the header
        pos = rng.integers(head)
        buf[pos:pos] = bytes(rng.integers(0, 256, rng.integers(1, 6), dtype=np.uint8))
    elif kind == 3:  # delete header bytes
        pos = rng.integers(head)
        del buf[pos:pos + rng.integers(1, 5)]
    elif kind == 4:  # append payload bytes
        buf += bytes(rng.integers(1, 9))
    else:  # printable substitution, keeps NPY headers parseable more often
        pos = rng.integers(head)
        buf[pos] = rng.choice(list(b"0123456789(),' :{}[]-uf<|TrueFals"))
    return bytes(buf)


FUZZ_CASES = 100_000


def _fuzz(parse, seed_inputs, head, seed):
    rng = np.random.default_rng(seed)
    outcomes = {"ok": 0, "typed": 0}
    for i in range(FUZZ_CASES):
        data = _mutate(rng, seed_inputs[i % len(seed_inputs)], head)
        try:
            parse(data)
            outcomes["ok"] += 1
        except HopfieldRobustError:
            outcomes["typed"] += 1
    return outcomes


def test_fuzz_idx():
    images = [encode_idx_images(tiny_images(n, n)) for n in (0, 1, 2)]
    labels = [encode_idx_labels(np.arange(n, dtype=np.uint8) % 10) for n in (0, 3, 12)]
    out = _fuzz(parse_idx_images, images, 16, 1)
    out2 = _fuzz(parse_idx_labels, labels, 8, 2)
    assert out["typed"] > 0 and out2["typed"] > 0


def test_fuzz_npy():
    seeds = [encode_npy_u8(np.zeros(s, np.uint8)) for s in [(2, 28, 28, 1), (5,), (0,), (3, 4)]]
    out = _fuzz(parse_npy_u8, seeds, 74, 3)
    assert out["typed"] > 0


# ---------------------------------------------------------------- datasets


def test_image_dataset_validation():
    with pytest.raises(DataError):
        ImageDataset(np.zeros((2, 28, 27)), np.zeros(2))
    with pytest.raises(DataError):
        ImageDataset(np.zeros((2, 28, 28)), np.zeros(3))
    with pytest.raises(DataError):
        ImageDataset(np.zeros((1, 28, 28)), [10])
    ds = ImageDataset(np.zeros((3, 28, 28, 1)), [1, 2, 3])
    assert ds.images.shape == (3, 28, 28) and len(ds.subset(2)) == 2


def test_load_mnist_plain_and_gzip(tmp_path):
    ds = ImageDataset(tiny_images(4), [1, 2, 3, 4], "x")
    save_mnist(tmp_path / "plain", "test", ds)
    np.testing.assert_array_equal(load_mnist(tmp_path / "plain", "test").images, ds.images)
    gz = tmp_path / "gz"
    gz.mkdir()
    for f in (tmp_path / "plain").iterdir():
        (gz / (f.name + ".gz")).write_bytes(gzip.compress(f.read_bytes()))
    np.testing.assert_array_equal(load_mnist(gz, "test").labels, ds.labels)
    with pytest.raises(FileNotFoundError):
        load_mnist(tmp_path / "nothing", "train")


def _mnist_c_tree(root, identity, names):
    for name in names:
        imgs = np.clip(identity.images.astype(int) + 40, 0, 255)
        save_mnist_c(root, name, ImageDataset(imgs, identity.labels, name))


def test_mnist_c_complete_tree(tmp_path):
    identity = ImageDataset(tiny_images(5), [0, 1, 2, 3, 4])
    _mnist_c_tree(tmp_path, identity, CORRUPTIONS)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cs = load_mnist_c(tmp_path, identity)
    assert len(cs) == 16
    assert cs.names()[0] == IDENTITY and set(cs.names()[1:]) == set(CORRUPTIONS)
    assert cs.missing == []


def test_mnist_c_partial_tree_warns(tmp_path):
    identity = ImageDataset(tiny_images(5), [0, 1, 2, 3, 4])
    _mnist_c_tree(tmp_path, identity, ["fog"])
    with pytest.warns(UserWarning, match="missing"):
        cs = load_mnist_c(tmp_path, identity)
    assert cs.names() == [IDENTITY, "fog"] and len(cs.missing) == 14


def test_mnist_c_label_mismatch(tmp_path):
    identity = ImageDataset(tiny_images(5), [0, 1, 2, 3, 4])
    save_mnist_c(tmp_path, "fog", ImageDataset(identity.images, [0, 1, 2, 3, 5], "fog"))
    with pytest.raises(DataError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        load_mnist_c(tmp_path, identity)


def test_corruption_set_rejects_mismatched_labels():
    a = ImageDataset(tiny_images(2), [0, 1])
    b = ImageDataset(tiny_images(2), [1, 1])
    with pytest.raises(DataError):
        CorruptionSet({IDENTITY: a, "fog": b})


# ---------------------------------------------------------------- pixel transforms


def test_to_unit_interval():
    x = to_unit_interval(np.array([0, 128, 255], dtype=np.uint8))
    assert x.tolist() == [0.0, 128 / 255, 1.0]
    u8 = np.arange(256, dtype=np.uint8)
    assert np.max(np.abs(to_unit_interval(quantize(to_unit_interval(u8))) - to_unit_interval(u8))) == 0
    y = np.random.default_rng(0).random(10_000)
    assert np.max(np.abs(to_unit_interval(quantize(y)) - y)) <= 1 / 510 + 1e-15


def test_corrupt_gaussian():
    x = np.random.default_rng(0).random((10, 784))
    np.testing.assert_array_equal(corrupt_gaussian(x, Rng(0), 0.0), x)
    np.testing.assert_array_equal(corrupt_gaussian(x, Rng(4)), corrupt_gaussian(x, Rng(4)))
    big = np.full((1000, 1000), 0.3)
    d = corrupt_gaussian(big, Rng(9), 0.5) - big
    assert abs(d.mean()) < 0.002 and abs(d.std() - 0.5) < 0.002
    assert (big + d).min() < 0  # not clamped
