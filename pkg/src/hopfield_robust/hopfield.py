"""Classical binary and continuous modern Hopfield networks over explicit patterns.

Classical network: weights T = sum_mu xi xi^T with a zeroed diagonal, update
sigma_i <- Sign[(T sigma)_i] with Sign(0) = +1, energy E = -sigma^T T sigma.

Modern network: stored patterns are the columns of X (N x K), energy

    E(s) = -lse(beta, X^T s) + s^T s / 2 + log(K) / beta + M^2 / 2,

with lse(beta, z) = log(sum exp(beta z)) / beta and M the largest pattern norm.
The update s <- X softmax(beta X^T s) never increases E.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DataError, ParameterError, UsageError
from .tensor.random import Rng


def sign(x: np.ndarray) -> np.ndarray:
    """Elementwise sign with Sign(0) = +1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def _check_binary(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 1 or not np.all((sigma == 1.0) | (sigma == -1.0)):
        raise DataError("binary states must be 1-d vectors with entries in {-1, +1}")
    return sigma


def _check_square(sigma: np.ndarray, weights: np.ndarray) -> None:
    if weights.ndim != 2 or weights.shape != (sigma.size, sigma.size):
        raise DataError(f"state of length {sigma.size} does not match weights {weights.shape}")


# --------------------------------------------------------------------------
# classical network


def hebb_store(patterns: Sequence[np.ndarray]) -> np.ndarray:
    """Hebbian weight matrix of +-1 patterns, diagonal zeroed."""
    patterns = [np.asarray(p, dtype=np.float64) for p in patterns]
    if not patterns:
        raise DataError("hebb_store needs at least one pattern")
    n = patterns[0].size
    if any(p.shape != (n,) for p in patterns):
        raise DataError("all patterns must be 1-d with the same length")
    for p in patterns:
        _check_binary(p)
    xi = np.stack(patterns, axis=1)
    weights = xi @ xi.T
    np.fill_diagonal(weights, 0.0)
    return weights


def classical_energy(sigma: np.ndarray, weights: np.ndarray) -> float:
    sigma = np.asarray(sigma, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_square(sigma, weights)
    return float(-(sigma @ weights @ sigma))


def classical_update(
    sigma: np.ndarray,
    weights: np.ndarray,
    mode: str = "synchronous",
    rng: Rng | None = None,
) -> np.ndarray:
    """One update step. Asynchronous mode changes a single uniformly drawn neuron."""
    sigma = _check_binary(sigma)
    weights = np.asarray(weights, dtype=np.float64)
    _check_square(sigma, weights)
    if mode == "synchronous":
        return sign(weights @ sigma)
    if mode == "asynchronous":
        if rng is None:
            raise UsageError("asynchronous updates need an Rng")
        out = sigma.copy()
        i = int(rng.integers(sigma.size))
        out[i] = 1.0 if weights[i] @ sigma >= 0 else -1.0
        return out
    raise UsageError(f"unknown update mode {mode!r}")


def classical_retrieve(
    sigma0: np.ndarray, weights: np.ndarray, rng: Rng, max_sweeps: int = 100
) -> tuple[np.ndarray, int]:
    """Random-order asynchronous sweeps until a sweep flips nothing."""
    sigma = _check_binary(sigma0).copy()
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    _check_square(sigma, weights)
    for sweep in range(1, max_sweeps + 1):
        order = rng.permutation(sigma.size).astype(np.int64)
        if _kernels.async_sweep(sigma, weights, order) == 0:
            return sigma, sweep
    return sigma, max_sweeps


# --------------------------------------------------------------------------
# modern network


class PatternBank:
    """Stored patterns as the columns of an N x K matrix."""

    def __init__(self, patterns: np.ndarray):
        x = np.array(patterns, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] < 1 or x.shape[0] < 1:
            raise DataError(f"pattern bank must be N x K with K >= 1, got shape {x.shape}")
        self._x = x
        self._x.setflags(write=False)

    @classmethod
    def from_rows(cls, rows: Iterable[np.ndarray]) -> "PatternBank":
        return cls(np.stack([np.asarray(r, dtype=np.float64) for r in rows], axis=1))

    @property
    def X(self) -> np.ndarray:
        return self._x

    @property
    def N(self) -> int:
        return self._x.shape[0]

    @property
    def K(self) -> int:
        return self._x.shape[1]

    @property
    def M(self) -> float:
        return float(np.linalg.norm(self._x, axis=0).max())


@dataclass(frozen=True)
class RetrievalConfig:
    beta: float = 1.0
    max_steps: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.max_steps < 1:
            raise ParameterError(f"max_steps must be >= 1, got {self.max_steps}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")


@dataclass
class RetrievalResult:
    state: np.ndarray
    steps: int
    energies: list[float] = field(default_factory=list)


def _logsumexp(z: np.ndarray) -> float:
    zmax = z.max()
    return float(zmax + np.log(np.exp(z - zmax).sum()))


def _check_state(sigma, bank: PatternBank) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (bank.N,):
        raise DataError(f"state shape {sigma.shape} does not match pattern dimension {bank.N}")
    return sigma


def modern_energy(sigma: np.ndarray, bank: PatternBank, beta: float) -> float:
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    sigma = _check_state(sigma, bank)
    lse = _logsumexp(beta * (bank.X.T @ sigma)) / beta
    m = bank.M
    return -lse + 0.5 * float(sigma @ sigma) + np.log(bank.K) / beta + 0.5 * m * m


def modern_update(sigma: np.ndarray, bank: PatternBank, beta: float) -> np.ndarray:
    """One step s <- X softmax(beta X^T s)."""
    z = beta * (bank.X.T @ sigma)
    w = np.exp(z - z.max())
    return bank.X @ (w / w.sum())


def modern_retrieve(sigma0: np.ndarray, bank: PatternBank, cfg: RetrievalConfig) -> RetrievalResult:
    """Iterate the softmax update until the step norm drops below ``cfg.tol``.

    ``energies`` holds E(s^0), E(s^1), ..., one entry per visited state.
    """
    s = _check_state(sigma0, bank).copy()
    energies = [modern_energy(s, bank, cfg.beta)]
    steps = 0
    for steps in range(1, cfg.max_steps + 1):
        new = modern_update(s, bank, cfg.beta)
        delta = float(np.linalg.norm(new - s))
        s = new
        energies.append(modern_energy(s, bank, cfg.beta))
        if delta < cfg.tol:
            break
    return RetrievalResult(s, steps, energies)


# --------------------------------------------------------------------------
# capacity experiments


@dataclass(frozen=True)
class CapacityRow:
    network: str
    N: int
    K: int
    beta: float
    corruption: str
    fraction: float
    trials: int
    recovery_rate: float


def corrupt_pattern(xi: np.ndarray, fraction: float, corruption: str, rng: Rng) -> np.ndarray:
    """Flip (``"flip"``) or zero (``"mask"``) a random ``fraction`` of the entries."""
    n = xi.size
    idx = rng.permutation(n)[: int(round(fraction * n))]
    out = xi.copy()
    if corruption == "flip":
        out[idx] = -out[idx]
    elif corruption == "mask":
        out[idx] = 0.0
    else:
        raise UsageError(f"unknown corruption {corruption!r}")
    return out


def _classical_trial(n, k, fraction, corruption, rng):
    patterns = rng.signs((k, n))
    weights = np.ascontiguousarray(hebb_store(list(patterns)))
    target = patterns[int(rng.integers(k))]
    query = corrupt_pattern(target, fraction, corruption, rng)
    # masked entries get a random sign: the classical state space is binary
    query = np.where(query == 0.0, rng.signs(n), query)
    final, _ = classical_retrieve(query, weights, rng)
    return bool(np.array_equal(final, target))


def _modern_trial(n, k, fraction, corruption, beta, rng):
    patterns = rng.signs((k, n))
    bank = PatternBank(patterns.T)
    target = patterns[int(rng.integers(k))]
    query = corrupt_pattern(target, fraction, corruption, rng)
    final = modern_retrieve(query, bank, RetrievalConfig(beta=beta)).state
    cos = final @ target / (np.linalg.norm(final) * np.linalg.norm(target) + 1e-300)
    return bool(cos > 0.99)


def capacity_sweep(
    n: int,
    k_values: Sequence[int],
    corruption_fraction: float,
    trials: int,
    rng: Rng,
    networks: Sequence[str] = ("classical", "modern"),
    beta: float = 8.0,
    corruption: str = "flip",
) -> list[CapacityRow]:
    """Recovery rate per K for random +-1 patterns.

    Each trial draws fresh patterns, corrupts one of them and retrieves.
    Classical recovery means the final state equals the stored pattern
    exactly; modern recovery means cosine similarity above 0.99.
    """
    if n < 1 or trials < 1 or not k_values or min(k_values) < 1:
        raise UsageError("capacity_sweep needs n >= 1, trials >= 1 and positive K values")
    if not 0.0 <= corruption_fraction <= 1.0:
        raise ParameterError(f"corruption_fraction must be in [0, 1], got {corruption_fraction}")
    rows = []
    for net in networks:
        for k in k_values:
            sub = rng.spawn(_stream_id(net, k))
            hits = 0
            for _ in range(trials):
                if net == "classical":
                    hits += _classical_trial(n, k, corruption_fraction, corruption, sub)
                elif net == "modern":
                    hits += _modern_trial(n, k, corruption_fraction, corruption, beta, sub)
                else:
                    raise UsageError(f"unknown network {net!r}")
            rows.append(CapacityRow(net, n, int(k), beta if net == "modern" else float("nan"),
                                    corruption, corruption_fraction, trials, hits / trials))
    return rows


def _stream_id(net: str, k: int) -> int:
    return (0 if net == "classical" else 1) * 1_000_000 + int(k)
