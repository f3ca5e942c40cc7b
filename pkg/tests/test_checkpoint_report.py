import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference_values as ref
from hopfield_robust.checkpoint import (
    MAGIC, Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
)
from hopfield_robust.cli import RunConfig, model_checkpoint, model_from_checkpoint
from hopfield_robust.errors import DataError, FormatError, LengthError
from hopfield_robust.evaluation import report_from_accuracies
from hopfield_robust.hopfield import CapacityRow
from hopfield_robust.models import Cdae, CnnClassifier
from hopfield_robust.pooling import Arrangement, init_params
from hopfield_robust.report import (
    CSV_COLUMNS, FOOTNOTE, capacity_csv, decode_pgm, encode_pgm, quantize, report_csv,
    report_markdown,
)
from hopfield_robust.tensor import Rng


# ---------------------------------------------------------------- checkpoints


def test_encode_decode_roundtrip():
    params = {"w": np.arange(6.0).reshape(2, 3) / 7, "b": np.array([1.5, -2.0])}
    ckpt = Checkpoint("baseline", params, {"epochs": 3}, seed=11)
    blob = encode_checkpoint(ckpt)
    assert blob.startswith(MAGIC)
    back = decode_checkpoint(blob)
    assert (back.kind, back.seed, back.config) == ("baseline", 11, {"epochs": 3})
    assert list(back.params) == ["w", "b"]
    np.testing.assert_array_equal(back.params["w"], params["w"].astype(np.float32))


def test_byte_determinism(tmp_path):
    a = model_checkpoint(init_params(Rng(4)), RunConfig(seed=4))
    b = model_checkpoint(init_params(Rng(4)), RunConfig(seed=4))
    save_checkpoint(tmp_path / "a.ckpt", a)
    save_checkpoint(tmp_path / "b.ckpt", b)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


@pytest.mark.parametrize("make", [
    lambda: CnnClassifier(Rng(1)),
    lambda: Cdae(Rng(1)),
    lambda: init_params(Rng(1), arrangement=Arrangement("patches", 7)),
])
def test_model_roundtrip_forward(make, tmp_path):
    model = make()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model_checkpoint(model, RunConfig(seed=1)))
    back = model_from_checkpoint(load_checkpoint(path))
    x = np.random.default_rng(0).random((3, 784))
    a, b = model(x).data, back(x).data
    # relative to the output norm; per-entry ratios are meaningless for outputs near zero
    assert np.linalg.norm(a - b) / np.linalg.norm(a) <= 1e-6
    # float32 storage: second round trip is exact
    again = model_from_checkpoint(decode_checkpoint(encode_checkpoint(model_checkpoint(back, RunConfig(seed=1)))))
    np.testing.assert_array_equal(back(x).data, again(x).data)


def test_roundtrip_relative_error_bound():
    model = CnnClassifier(Rng(2))
    back = model_from_checkpoint(decode_checkpoint(encode_checkpoint(model_checkpoint(model, RunConfig()))))
    x = np.random.default_rng(1).random((4, 784))
    p, q = np.exp(model(x).data), np.exp(back(x).data)
    assert np.max(np.abs(p - q) / p) <= 1e-6
    assert np.array_equal(p.argmax(1), q.argmax(1))


def test_checkpoint_errors():
    blob = encode_checkpoint(Checkpoint("cdae", {"w": np.ones(4)}))
    with pytest.raises(FormatError):
        decode_checkpoint(b"NOTACKPT" + blob[8:])
    with pytest.raises(LengthError):
        decode_checkpoint(blob[:-1])
    with pytest.raises(LengthError):
        decode_checkpoint(blob + b"\0")
    with pytest.raises(LengthError):
        decode_checkpoint(MAGIC + struct.pack("<I", 1000) + b"{}")
    with pytest.raises(FormatError):
        decode_checkpoint(MAGIC + struct.pack("<I", 2) + b"{]")
    with pytest.raises(FormatError):
        model_from_checkpoint(Checkpoint("resnet", {}))


@settings(max_examples=2000, deadline=None)
@given(st.binary(max_size=200))
def test_decode_fuzz_only_raises_package_errors(data):
    from hopfield_robust.errors import HopfieldRobustError
    try:
        decode_checkpoint(MAGIC + data)
    except HopfieldRobustError:
        pass


# ---------------------------------------------------------------- reports


@pytest.fixture
def report():
    usage = {k: v[0] for k, v in ref.USAGE_INCREASE.items()}
    return report_from_accuracies(ref.BASE_ACCURACY, ref.INTEGRATED_ACCURACY, usage,
                                  module_kind="hopfield", metadata={"seed": 0})


def test_report_csv(report):
    lines = report_csv(report).splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 17
    brightness = next(line for line in lines if line.startswith("brightness,"))
    assert ",0.1742," in brightness and ",0.1154," in brightness
    identity = next(line for line in lines if line.startswith("identity,"))
    assert identity.count("undefined") == 2


def test_report_markdown_conventions(report):
    both = report_markdown(report, "both")
    assert "42.51" in both and "69.20" in both and "39.39" in both
    assert FOOTNOTE in both
    assert "89.76" in both and "75.92" in both
    assert "r = 0.637, p = 0.008" in both
    assert "- seed: 0" in both
    published = report_markdown(report, "paper")
    assert "42.51" in published and "69.20" not in published and FOOTNOTE not in published


def test_capacity_csv():
    rows = [CapacityRow("classical", 100, 10, float("nan"), "flip", 0.1, 5, 0.8),
            CapacityRow("modern", 64, 128, 8.0, "mask", 0.5, 5, 1.0)]
    assert capacity_csv(rows).splitlines() == [
        "network,N,K,beta,corruption,fraction,trials,recovery_rate",
        "classical,100,10,,flip,0.1,5,0.8000",
        "modern,64,128,8,mask,0.5,5,1.0000",
    ]


# ---------------------------------------------------------------- PGM


def test_pgm_header_and_roundtrip():
    img = np.random.default_rng(0).integers(0, 256, (28, 28), dtype=np.uint8)
    blob = encode_pgm(img)
    assert blob.startswith(b"P5\n28 28\n255\n") and len(blob) == 13 + 784
    np.testing.assert_array_equal(decode_pgm(blob), img)


def test_pgm_float_quantization():
    x = np.array([-0.5, 0.0, 0.5, 1.0, 2.0, 0.002])
    np.testing.assert_array_equal(quantize(x), [0, 0, 128, 255, 255, 1])
    img = np.random.default_rng(1).random(784)
    np.testing.assert_array_equal(decode_pgm(encode_pgm(img)).reshape(-1), quantize(img))
    with pytest.raises(DataError):
        encode_pgm(np.zeros((2, 3, 4), dtype=np.uint8))
    with pytest.raises(DataError):
        decode_pgm(b"P6\n28 28\n255\n")
