"""Closed-form quantities of the two-component Gaussian mixture.

All logarithms are natural logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DomainError(ValueError):
    """An argument lies outside the domain of a closed-form quantity."""


@dataclass(frozen=True)
class ProblemConfig:
    """Generative parameters of ``Y_i = theta * eta_i + sigma * xi_i``.

    ``delta`` is the lower bound on ``||theta||``. ``sigma == 0`` is accepted
    so that noiseless datasets can be built, but every quantity that divides
    by the noise level rejects it.
    """

    n: int
    p: int
    sigma: float
    delta: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n!r}")
        if int(self.p) != self.p or self.p < 1:
            raise DomainError(f"p must be an integer >= 1, got {self.p!r}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise DomainError(f"sigma must be finite and >= 0, got {self.sigma!r}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise DomainError(f"delta must be finite and > 0, got {self.delta!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "delta", float(self.delta))


@dataclass(frozen=True)
class ABPoint:
    """Plot coordinates: ``delta^2 = (1 + sqrt(a)) log n`` and ``p = b n log n``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError(f"a and b must be positive, got a={self.a!r}, b={self.b!r}")


def _require_noisy(config: ProblemConfig) -> None:
    if config.sigma <= 0:
        raise DomainError("sigma must be > 0 for this quantity")


def snr(config: ProblemConfig) -> float:
    """Effective signal-to-noise ratio ``(D/s^2) / sqrt(D/s^2 + p/n)`` with D = delta^2."""
    _require_noisy(config)
    x = (config.delta / config.sigma) ** 2
    return x / math.sqrt(x + config.p / config.n)


def exact_threshold(n: int, p: int, sigma: float = 1.0) -> float:
    """Separation at which exact recovery switches from impossible to possible."""
    if n < 3:
        raise DomainError(f"exact_threshold needs n >= 3, got {n}")
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    log_n = math.log(n)
    return sigma * math.sqrt((1.0 + math.sqrt(1.0 + 2.0 * p / (n * log_n))) * log_n)


def delta_for_snr(r: float, n: int, p: int, sigma: float = 1.0) -> float:
    """Invert :func:`snr` in ``delta``: the separation giving ``snr == r``."""
    if r <= 0 or sigma <= 0 or n < 2 or p < 1:
        raise DomainError("delta_for_snr needs r > 0, sigma > 0, n >= 2, p >= 1")
    r2 = r * r
    return sigma * math.sqrt(r2 * (1.0 + math.sqrt(1.0 + 4.0 * p / (n * r2))) / 2.0)


def ab_to_config(point: ABPoint, n: int, sigma: float = 1.0) -> ProblemConfig:
    if n < 3:
        raise DomainError(f"ab_to_config needs n >= 3, got {n}")
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    log_n = math.log(n)
    delta = sigma * math.sqrt((1.0 + math.sqrt(point.a)) * log_n)
    p = max(1, int(round(point.b * n * log_n)))
    return ProblemConfig(n=n, p=p, sigma=sigma, delta=delta)


def threshold_a(b: float) -> float:
    """The exact-recovery boundary ``a = 1 + 2b`` in plot coordinates."""
    return 1.0 + 2.0 * b


def gaussian_tail(t: float) -> float:
    """Standard normal survival function ``P(z > t)``.

    Uses ``erfc`` from the C math library (series for small arguments,
    continued fraction in the tails), so there is no cancellation for large
    positive ``t``.
    """
    return 0.5 * math.erfc(t / math.sqrt(2.0))


def lower_bound_curve(config: ProblemConfig) -> float:
    """Rate shape ``P(z > r_n)`` of the minimax lower bound.

    Constants are dropped: this is a reference curve for plots, not a
    calibrated bound on the risk.
    """
    return gaussian_tail(snr(config))
