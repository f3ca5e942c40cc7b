"""Confidence-gated test-time integration and corruption-robustness metrics.

For every input the frozen classifier f is run on x and on h(x); the branch
whose top class probability is larger wins, with ties going to h(x).

Error rates are percentages. For a corruption c, CE_c = E_c^g / E_c^f and
relative CE_c = (E_c^g - E_i^g) / (E_c^f - E_i^f), i the clean (identity) set.
Two aggregates are reported for each: the mean of per-corruption ratios and
the ratio of mean error rates (the latter reproduces the published tables).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .data import IDENTITY, CorruptionSet
from .errors import DataError, NumericError, UndefinedMetricError, UsageError
from .models import predict_log_probs
from .pooling import denoise_batch
from .tensor.module import Module

MEAN_OF_RATIOS = "mean_of_ratios"
RATIO_OF_MEANS = "ratio_of_means"
CONVENTIONS = (MEAN_OF_RATIOS, RATIO_OF_MEANS)

# predictions are computed in fixed chunks so results never depend on sharding
CHUNK = 250


@dataclass(frozen=True)
class PredictionRecord:
    base_max_prob: float
    hopfield_max_prob: float
    base_class: int
    hopfield_class: int
    chosen_class: int
    used_hopfield: bool


@dataclass
class IntegratedPredictions:
    """Column-wise prediction records for a batch."""

    base_max_prob: np.ndarray
    hopfield_max_prob: np.ndarray
    base_class: np.ndarray
    hopfield_class: np.ndarray
    chosen_class: np.ndarray
    used_hopfield: np.ndarray

    def __len__(self) -> int:
        return len(self.chosen_class)

    def record(self, i: int) -> PredictionRecord:
        return PredictionRecord(float(self.base_max_prob[i]), float(self.hopfield_max_prob[i]),
                                int(self.base_class[i]), int(self.hopfield_class[i]),
                                int(self.chosen_class[i]), bool(self.used_hopfield[i]))


def choose_branch(base_probs: np.ndarray, hopfield_probs: np.ndarray) -> IntegratedPredictions:
    """Pick, per row, the prediction whose maximum class probability is larger."""
    pf = np.atleast_2d(np.asarray(base_probs, dtype=np.float64))
    ph = np.atleast_2d(np.asarray(hopfield_probs, dtype=np.float64))
    if pf.shape != ph.shape:
        raise DataError(f"branch outputs differ in shape: {pf.shape} vs {ph.shape}")
    if not (np.all(np.isfinite(pf)) and np.all(np.isfinite(ph))):
        raise NumericError("non-finite class probabilities")
    max_f, cls_f = pf.max(axis=1), pf.argmax(axis=1)
    max_h, cls_h = ph.max(axis=1), ph.argmax(axis=1)
    use_h = ~(max_f > max_h)
    return IntegratedPredictions(max_f, max_h, cls_f, cls_h, np.where(use_h, cls_h, cls_f), use_h)


class IdentityModule(Module):
    """Debug denoiser that returns its input unchanged."""

    kind = "identity"

    def forward(self, images):
        return images


def integrate_predict(x: np.ndarray, classifier: Module, module: Module) -> PredictionRecord:
    """Integrated prediction for a single [0, 1] image."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return integrate_batch(x, classifier, module).record(0)


def integrate_batch(images: np.ndarray, classifier: Module, module: Module | None) -> IntegratedPredictions:
    """Run both branches over ``images`` ((N, 784) in [0, 1]).

    With ``module=None`` only the base branch exists and it is always chosen.
    """
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    base = np.exp(predict_log_probs(classifier, x))
    if module is None:
        hop = base
        out = choose_branch(base, hop)
        out.used_hopfield[:] = False
        return out
    cleaned = x if isinstance(module, IdentityModule) else denoise_batch(x, module)
    return choose_branch(base, np.exp(predict_log_probs(classifier, cleaned)))


# --------------------------------------------------------------------------
# metrics


def corruption_error(error_g: float, error_f: float) -> float:
    if error_f == 0:
        raise UndefinedMetricError("corruption error undefined: baseline error is zero")
    return error_g / error_f


def relative_corruption_error(error_g: float, error_f: float, clean_g: float, clean_f: float) -> float:
    denom = error_f - clean_f
    if denom == 0:
        raise UndefinedMetricError("relative corruption error undefined: baseline shows no degradation")
    return (error_g - clean_g) / denom


def _corruptions(errors: Mapping[str, float]) -> list[str]:
    return [c for c in errors if c != IDENTITY]


def _check_pair(errors_g: Mapping[str, float], errors_f: Mapping[str, float]) -> list[str]:
    names = _corruptions(errors_f)
    if set(names) != set(_corruptions(errors_g)):
        raise DataError("model and baseline were evaluated on different corruptions")
    if not names:
        raise DataError("no corruptions besides identity")
    return sorted(names)


def aggregate_mce(errors_g: Mapping[str, float], errors_f: Mapping[str, float],
                  convention: str = RATIO_OF_MEANS) -> float:
    """Mean corruption error in percent (identity excluded)."""
    names = _check_pair(errors_g, errors_f)
    if convention == MEAN_OF_RATIOS:
        return 100.0 * math.fsum(corruption_error(errors_g[c], errors_f[c]) for c in names) / len(names)
    if convention == RATIO_OF_MEANS:
        mg = math.fsum(errors_g[c] for c in names) / len(names)
        mf = math.fsum(errors_f[c] for c in names) / len(names)
        return 100.0 * corruption_error(mg, mf)
    raise UsageError(f"unknown convention {convention!r}")


def aggregate_relative_mce(errors_g: Mapping[str, float], errors_f: Mapping[str, float],
                           convention: str = RATIO_OF_MEANS) -> float:
    """Relative mean corruption error in percent; needs an ``identity`` entry in both maps."""
    names = _check_pair(errors_g, errors_f)
    if IDENTITY not in errors_g or IDENTITY not in errors_f:
        raise DataError("relative mCE needs identity (clean) error rates")
    ig, i_f = errors_g[IDENTITY], errors_f[IDENTITY]
    if convention == MEAN_OF_RATIOS:
        total = math.fsum(relative_corruption_error(errors_g[c], errors_f[c], ig, i_f) for c in names)
        return 100.0 * total / len(names)
    if convention == RATIO_OF_MEANS:
        mg = math.fsum(errors_g[c] for c in names) / len(names)
        mf = math.fsum(errors_f[c] for c in names) / len(names)
        return 100.0 * relative_corruption_error(mg, mf, ig, i_f)
    raise UsageError(f"unknown convention {convention!r}")


def average_corruption_accuracy(accuracies: Mapping[str, float]) -> float:
    names = _corruptions(accuracies)
    if not names:
        raise DataError("no corruptions besides identity")
    return math.fsum(accuracies[c] for c in sorted(names)) / len(names)


def usage_rate(used_hopfield: Sequence[bool] | IntegratedPredictions) -> float:
    if isinstance(used_hopfield, IntegratedPredictions):
        used_hopfield = used_hopfield.used_hopfield
    used = np.asarray(used_hopfield, dtype=bool)
    if used.size == 0:
        raise DataError("usage rate of an empty record list")
    return 100.0 * float(used.sum()) / used.size


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Sample correlation and its two-tailed p-value.

    p = I_{df/(df+t^2)}(df/2, 1/2) with t = r sqrt(df / (1 - r^2)), df = n - 2.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("pearson needs two 1-d sequences of equal length")
    n = x.size
    if n < 3:
        raise DataError("pearson needs at least 3 pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedMetricError("pearson correlation undefined for a constant sequence")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t2 = r * r * df / (1.0 - r * r)
    return r, float(betainc(df / 2.0, 0.5, df / (df + t2)))


# --------------------------------------------------------------------------
# reports


@dataclass
class CorruptionRow:
    name: str
    n: int
    base_accuracy: float
    accuracy: float
    usage: float

    @property
    def error(self) -> float:
        return 100.0 - self.accuracy

    @property
    def base_error(self) -> float:
        return 100.0 - self.base_accuracy

    @property
    def increase(self) -> float:
        return self.accuracy - self.base_accuracy


def _safe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


@dataclass
class EvalReport:
    """Per-corruption accuracies plus every derived aggregate.

    Undefined metrics (zero denominators) are stored as None.
    """

    rows: list[CorruptionRow]
    module_kind: str = "none"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [r.name for r in self.rows]
        if len(set(names)) != len(names):
            raise DataError("duplicate corruption names in report")

    # per-corruption views
    def row(self, name: str) -> CorruptionRow:
        return next(r for r in self.rows if r.name == name)

    def accuracies(self) -> dict[str, float]:
        return {r.name: r.accuracy for r in self.rows}

    def base_accuracies(self) -> dict[str, float]:
        return {r.name: r.base_accuracy for r in self.rows}

    def errors(self) -> dict[str, float]:
        return {r.name: r.error for r in self.rows}

    def base_errors(self) -> dict[str, float]:
        return {r.name: r.base_error for r in self.rows}

    def ce(self, name: str) -> float | None:
        r = self.row(name)
        return _safe(corruption_error, r.error, r.base_error)

    def relative_ce(self, name: str) -> float | None:
        if IDENTITY not in self.accuracies():
            return None
        r, i = self.row(name), self.row(IDENTITY)
        return _safe(relative_corruption_error, r.error, r.base_error, i.error, i.base_error)

    # aggregates
    def mce(self, convention: str = RATIO_OF_MEANS) -> float | None:
        return _safe(aggregate_mce, self.errors(), self.base_errors(), convention)

    def relative_mce(self, convention: str = RATIO_OF_MEANS) -> float | None:
        if IDENTITY not in self.accuracies():
            return None
        return _safe(aggregate_relative_mce, self.errors(), self.base_errors(), convention)

    def average_corruption_accuracy(self) -> float:
        return average_corruption_accuracy(self.accuracies())

    def base_average_corruption_accuracy(self) -> float:
        return average_corruption_accuracy(self.base_accuracies())

    def pearson(self) -> tuple[float, float, int] | None:
        """Correlation of usage with accuracy increase over all rows, identity included."""
        usage = [r.usage for r in self.rows]
        inc = [r.increase for r in self.rows]
        try:
            r, p = pearson(usage, inc)
        except (UndefinedMetricError, DataError):
            return None
        return r, p, len(usage)


def report_from_accuracies(
    base_accuracies: Mapping[str, float],
    accuracies: Mapping[str, float],
    usage: Mapping[str, float] | None = None,
    counts: Mapping[str, int] | None = None,
    module_kind: str = "published",
    metadata: dict | None = None,
) -> EvalReport:
    """Build a report from per-corruption accuracies (percent)."""
    if set(base_accuracies) != set(accuracies):
        raise DataError("baseline and model accuracies cover different corruptions")
    rows = [CorruptionRow(name, int((counts or {}).get(name, 0)), float(base_accuracies[name]),
                          float(accuracies[name]), float((usage or {}).get(name, 0.0)))
            for name in base_accuracies]
    return EvalReport(rows, module_kind, dict(metadata or {}))


def _predict_sharded(images, classifier, module, workers: int) -> IntegratedPredictions:
    chunks = [images[s:s + CHUNK] for s in range(0, len(images), CHUNK)]
    if workers <= 1 or len(chunks) <= 1:
        parts = [integrate_batch(c, classifier, module) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: integrate_batch(c, classifier, module), chunks))
    return IntegratedPredictions(*(np.concatenate([getattr(p, f) for p in parts]) for f in (
        "base_max_prob", "hopfield_max_prob", "base_class", "hopfield_class",
        "chosen_class", "used_hopfield")))


def evaluate_corruption_set(
    classifier: Module,
    module: Module | None,
    corruptions: CorruptionSet,
    workers: int = 1,
    metadata: dict | None = None,
) -> EvalReport:
    """Evaluate base-only and integrated accuracy on every member of ``corruptions``."""
    before = classifier.fingerprint()
    rows = []
    for name, ds in corruptions:
        preds = _predict_sharded(ds.unit(), classifier, module, workers)
        labels = ds.labels.astype(np.int64)
        base_acc = 100.0 * float(np.mean(preds.base_class == labels))
        acc = 100.0 * float(np.mean(preds.chosen_class == labels))
        rows.append(CorruptionRow(name, len(ds), base_acc, acc, usage_rate(preds)))
    if classifier.fingerprint() != before:
        raise UsageError("classifier parameters changed during evaluation")
    kind = "none" if module is None else module.kind
    return EvalReport(rows, kind, dict(metadata or {}))
