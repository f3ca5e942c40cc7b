"""Serialisation of evaluation reports, capacity tables and PGM image dumps."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import IDENTITY
from .errors import DataError
from .evaluation import MEAN_OF_RATIOS, RATIO_OF_MEANS, EvalReport
from .hopfield import CapacityRow

CONVENTION_FLAGS = {
    "paper": (RATIO_OF_MEANS,),
    "eq11": (MEAN_OF_RATIOS,),
    "both": (RATIO_OF_MEANS, MEAN_OF_RATIOS),
}
CONVENTION_LABELS = {
    RATIO_OF_MEANS: "ratio of means (published-table compatible)",
    MEAN_OF_RATIOS: "mean of per-corruption ratios",
}
FOOTNOTE = (
    "Per-corruption CE and relative CE are ratios of error rates. Averaging those ratios "
    "(mean of ratios) and dividing mean error rates (ratio of means) give different "
    "aggregates; the published summary numbers are reproduced by the ratio of means."
)

CSV_COLUMNS = ("corruption", "n", "base_accuracy", "accuracy", "error", "base_error",
               "ce", "relative_ce", "usage")


def _fmt(x, digits: int = 4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "undefined"
    return f"{x:.{digits}f}"


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        ce = report.ce(r.name) if r.name != IDENTITY else None
        rel = report.relative_ce(r.name) if r.name != IDENTITY else None
        w.writerow([r.name, r.n, _fmt(r.base_accuracy), _fmt(r.accuracy), _fmt(r.error),
                    _fmt(r.base_error), _fmt(ce), _fmt(rel), _fmt(r.usage)])
    return buf.getvalue()


def report_markdown(report: EvalReport, convention: str = "both") -> str:
    """Summary, per-corruption accuracy and usage tables with a provenance header."""
    conventions = CONVENTION_FLAGS[convention]
    lines = ["# Corruption robustness report", "", "## Provenance", ""]
    meta = dict(report.metadata)
    meta.setdefault("module", report.module_kind)
    for key in sorted(meta):
        lines.append(f"- {key}: {meta[key]}")
    lines += ["", "## Summary metrics", "",
              "| Metric | Baseline | Integrated | Improvement |", "|---|---|---|---|"]
    for conv in conventions:
        label = CONVENTION_LABELS[conv]
        rel = report.relative_mce(conv)
        mce = report.mce(conv)
        lines.append(f"| Relative mCE (%), {label} | 100 | {_fmt(rel, 2)} | "
                     f"{_fmt(None if rel is None else 100 - rel, 2)} |")
        lines.append(f"| mCE (%), {label} | 100 | {_fmt(mce, 2)} | "
                     f"{_fmt(None if mce is None else 100 - mce, 2)} |")
    base_avg = report.base_average_corruption_accuracy()
    avg = report.average_corruption_accuracy()
    lines.append(f"| Average corruption accuracy (%) | {_fmt(base_avg, 2)} | {_fmt(avg, 2)} | "
                 f"{_fmt(avg - base_avg, 2)} |")
    if len(conventions) > 1:
        lines += ["", f"Note: {FOOTNOTE}"]
    lines += ["", "## Accuracy per corruption", "",
              "| Corruption | n | Baseline | Integrated |", "|---|---|---|---|"]
    for r in report.rows:
        lines.append(f"| {r.name} | {r.n} | {_fmt(r.base_accuracy, 2)} | {_fmt(r.accuracy, 2)} |")
    lines += ["", "## Module usage", "",
              "| Corruption | Module usage (%) | Increase in accuracy (%) |", "|---|---|---|"]
    for r in report.rows:
        lines.append(f"| {r.name} | {_fmt(r.usage, 2)} | {_fmt(r.increase, 2)} |")
    stats = report.pearson()
    lines.append("")
    if stats is None:
        lines.append("Pearson correlation (usage vs increase): undefined (constant column)")
    else:
        r, p, n = stats
        lines.append(f"Pearson correlation (usage vs increase, n={n}, identity row included): "
                     f"r = {r:.3f}, p = {p:.3f}")
    return "\n".join(lines) + "\n"


def capacity_csv(rows: Iterable[CapacityRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("network", "N", "K", "beta", "corruption", "fraction", "trials", "recovery_rate"))
    for r in rows:
        beta = "" if math.isnan(r.beta) else f"{r.beta:g}"
        w.writerow((r.network, r.N, r.K, beta, r.corruption, f"{r.fraction:g}", r.trials,
                    f"{r.recovery_rate:.4f}"))
    return buf.getvalue()


def quantize(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats -> uint8 by rounding, after clamping."""
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_pgm(image: np.ndarray) -> bytes:
    """Binary (P5) 8-bit PGM of a 28x28 image given as uint8 or [0, 1] floats."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = quantize(img)
    img = img.reshape(28, 28) if img.size == 784 else img
    if img.ndim != 2:
        raise DataError(f"PGM needs a 2-d image, got {img.shape}")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise DataError("not an 8-bit binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")
