"""Losses, recovery indicators and Monte-Carlo estimates of misclassification probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .synth import CounterRNG


@dataclass(frozen=True)
class RiskReport:
    """Sign-invariant loss of one estimate.

    ``hamming`` is ``min_nu sum_j |est_j - nu * truth_j|`` (each mismatch
    counts 2), ``normalized`` the misclassified fraction ``hamming / (2n)``
    and ``correlation`` is ``|truth . est| / n``.
    """

    hamming: int
    n: int

    @property
    def mismatches(self) -> int:
        return self.hamming // 2

    @property
    def normalized(self) -> float:
        return self.hamming / (2 * self.n)

    @property
    def risk_over_n(self) -> float:
        return self.hamming / self.n

    @property
    def exact(self) -> bool:
        return self.hamming == 0

    @property
    def correlation(self) -> float:
        return 1.0 - 2.0 * self.normalized

    def to_dict(self) -> dict:
        return {
            "hamming": self.hamming,
            "n": self.n,
            "normalized": self.normalized,
            "risk_over_n": self.risk_over_n,
            "exact": self.exact,
            "correlation": self.correlation,
        }


def hamming_risk(est, truth) -> RiskReport:
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape or est.ndim != 1:
        raise ValueError(f"length mismatch: {est.shape} vs {truth.shape}")
    n = truth.size
    disagree = int(np.count_nonzero(est != truth))
    return RiskReport(hamming=2 * min(disagree, n - disagree), n=n)


def estimate_G(t: float, theta, sigma: float, n: int, reps: int, rng: CounterRNG,
               chunk: int = 4096) -> tuple[float, float]:
    """Monte-Carlo estimate of ``P((theta + s xi)^T (theta + s/(n-1) sum_j xi_j) <= ||theta||^2 t)``.

    The average of the ``n - 1`` noise vectors is drawn directly as
    ``xi' / sqrt(n - 1)``. Returns the frequency and its binomial standard error.
    """
    if reps < 100:
        raise ValueError(f"estimate_G needs reps >= 100, got {reps}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    theta = np.asarray(theta, dtype=np.float64)
    p = theta.size
    level = float(theta @ theta) * t
    pooled_scale = sigma / math.sqrt(n - 1)
    hits = 0
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        left = theta + sigma * rng.normal((m, p))
        right = theta + pooled_scale * rng.normal((m, p))
        hits += int(np.count_nonzero(np.einsum("ij,ij->i", left, right) <= level))
        done += m
    est = hits / reps
    return est, math.sqrt(est * (1.0 - est) / reps)


@dataclass(frozen=True)
class Tally:
    count: int
    successes: int
    sum_mismatches: int
    sum_normalized: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.count

    @property
    def mean_normalized(self) -> float:
        return self.sum_normalized / self.count


def tally(reports: Sequence[RiskReport]) -> Tally:
    reports = list(reports)
    if not reports:
        raise ValueError("tally needs at least one report")
    return Tally(
        count=len(reports),
        successes=sum(r.exact for r in reports),
        sum_mismatches=sum(r.mismatches for r in reports),
        sum_normalized=math.fsum(r.normalized for r in reports),
    )
