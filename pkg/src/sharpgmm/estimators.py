"""Label estimators: spectral initializer, hollowed Lloyd iterations, oracles.

Every estimator returns labels in ``{-1, +1}`` as an ``int8`` array, with the
convention ``sign(0) = +1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hollow_linalg import DimensionError, HollowGram, hollow_gram, matvec_hollow, top_eigpair
from .synth import CounterRNG, sample_labels


@dataclass(frozen=True)
class EstimateTrace:
    labels: np.ndarray
    iterations_run: int = 0
    converged_at: int | None = None
    eigen_gap_warning: bool = False


def sign_vec(x) -> np.ndarray:
    x = np.asarray(x)
    return np.where(x >= 0, 1, -1).astype(np.int8)


def default_iter_count(n: int) -> int:
    """``floor(3 log n)`` refinement steps."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return int(math.floor(3.0 * math.log(n)))


def spectral_init(HG: HollowGram, rng: CounterRNG, tol: float = 1e-10,
                  check_gap: bool = True) -> EstimateTrace:
    """Signs of the top eigenvector of the hollowed Gram matrix.

    ``check_gap=False`` skips the extra iterations that confirm the gap
    diagnostic; the labels are the same either way.
    """
    if HG.order < 2:
        raise DimensionError("spectral_init needs order >= 2")
    pair = top_eigpair(HG, tol=tol, rng=rng, check_gap=check_gap)
    return EstimateTrace(sign_vec(pair.vector), 0, None, pair.gap_warning)


def lloyd_steps(HG: HollowGram, start, k_max: int) -> EstimateTrace:
    """Iterate ``eta <- sign(H(Y^T Y) eta)`` at most ``k_max`` times.

    Stops at the first fixed point; ``converged_at`` is the index of the map
    evaluation that reproduced its input.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    current = sign_vec(start)
    for k in range(1, k_max + 1):
        nxt = sign_vec(matvec_hollow(HG, current))
        if np.array_equal(nxt, current):
            return EstimateTrace(current, k, k)
        current = nxt
    return EstimateTrace(current, k_max, None)


def refine(HG: HollowGram, init: EstimateTrace, k_max: int | None = None) -> EstimateTrace:
    """Lloyd refinement of an initial estimate, keeping its diagnostics."""
    k = default_iter_count(HG.order) if k_max is None else k_max
    out = lloyd_steps(HG, init.labels, k)
    return EstimateTrace(out.labels, out.iterations_run, out.converged_at, init.eigen_gap_warning)


def spectral_lloyd(Y, rng: CounterRNG, k_max: int | None = None) -> EstimateTrace:
    """Spectral initialization followed by ``floor(3 log n)`` hollowed Lloyd steps.

    The hollowed Gram matrix is formed once and shared by both stages.
    """
    HG = hollow_gram(Y)
    return refine(HG, spectral_init(HG, rng), k_max)


def spectral(Y, rng: CounterRNG) -> EstimateTrace:
    return spectral_init(hollow_gram(Y), rng)


def random_lloyd(Y, rng: CounterRNG, k_max: int | None = None) -> EstimateTrace:
    """Hollowed Lloyd iterations from a Rademacher start drawn from ``rng``."""
    HG = Y if isinstance(Y, HollowGram) else hollow_gram(Y)
    start = sample_labels(HG.order, rng)
    return refine(HG, EstimateTrace(start), k_max)


def oracle_supervised(Y, eta_true) -> np.ndarray:
    """Classify each point with the true labels of all the others.

    Entry ``i`` is the sign of ``Y_i^T (sum_{j != i} eta_j Y_j)``, evaluated
    as ``Y_i^T (Y eta) - eta_i ||Y_i||^2``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    eta = np.asarray(eta_true, dtype=np.float64)
    if Y.ndim != 2 or eta.shape != (Y.shape[1],):
        raise DimensionError(f"labels of shape {eta.shape} do not match Y of shape {Y.shape}")
    pooled = Y @ eta
    scores = Y.T @ pooled - eta * np.einsum("ij,ij->j", Y, Y)
    return sign_vec(scores)


class ZeroCenterError(ValueError):
    pass


def oracle_known_center(Y, theta) -> np.ndarray:
    """``sign(Y_i^T theta)`` for every observation."""
    Y = np.asarray(Y, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (Y.shape[0],):
        raise DimensionError(f"theta of shape {theta.shape} does not match Y of shape {Y.shape}")
    if not np.any(theta):
        raise ZeroCenterError("theta must be nonzero")
    return sign_vec(Y.T @ theta)


METHODS = ("spectral_lloyd", "spectral", "random_lloyd", "oracle_supervised", "oracle_known_center")
