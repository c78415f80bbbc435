"""Seed-reproducible generation of mixture instances ``Y = theta eta^T + W``.

Random streams
--------------
:class:`CounterRNG` wraps the Philox-4x64 counter-based bit generator with the
64-bit seed as its key and a zero starting counter, so the raw ``uint64``
stream is a pure function of the seed. On top of it:

* uniforms are ``(raw >> 11) * 2**-53`` in ``[0, 1)``;
* labels take the top bit of one raw word each (``0 -> +1``, ``1 -> -1``);
* normals come from NumPy's ziggurat sampler (Marsaglia-Tsang, 256 layers)
  driven by the same Philox stream; it is integer-table based, so the
  deviates are identical on every platform for a given NumPy release.

Seeds for a (cell, rep) pair come from :func:`derive_seed`, a chain of
SplitMix64 finalizers, so every unit of work owns its stream regardless of
execution order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_model import DomainError, ProblemConfig
from .hollow_linalg import HollowGram

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, cell_index: int, rep_index: int) -> int:
    """Seed of the stream for repetition ``rep_index`` of grid cell ``cell_index``."""
    if cell_index < 0 or rep_index < 0:
        raise ValueError("indices must be nonnegative")
    x = splitmix64(master & MASK64)
    x = splitmix64(x ^ (cell_index & MASK64))
    # rotate so (i, j) and (j, i) do not feed the same words into the chain
    return splitmix64(x ^ (((rep_index << 32) | (rep_index >> 32)) & MASK64) ^ _GOLDEN)


class CounterRNG:
    """Philox-backed generator with documented integer and normal transforms."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._bits = np.random.Philox(key=self.seed, counter=0)
        self._gen = np.random.Generator(self._bits)

    def raw(self, size: int) -> np.ndarray:
        return self._bits.random_raw(size)

    def uniform(self, size: int) -> np.ndarray:
        return (self.raw(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def signs(self, size: int) -> np.ndarray:
        top = (self.raw(size) >> np.uint64(63)).astype(np.int8)
        return (1 - 2 * top).astype(np.int8)

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def chisquare(self, df) -> np.ndarray:
        return self._gen.chisquare(df)


def rng_new(seed: int) -> CounterRNG:
    return CounterRNG(seed)


@dataclass(frozen=True)
class CenterMode:
    """How the center is drawn: on the sphere ``||theta|| = delta`` or from N(0, alpha^2 I)."""

    tag: str = "fixed_norm"
    alpha: float | None = None

    def __post_init__(self):
        if self.tag not in ("fixed_norm", "gaussian_prior"):
            raise ValueError(f"unknown center mode {self.tag!r}")
        if self.tag == "gaussian_prior" and not (self.alpha is not None and self.alpha > 0):
            raise ValueError("gaussian_prior needs alpha > 0")


FIXED_NORM = CenterMode()


class DegenerateDrawError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """One model instance. ``Y`` is ``p x n``; column ``i`` is observation ``i``."""

    Y: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    config: ProblemConfig
    seed: int
    mode: CenterMode = field(default=FIXED_NORM)

    def __post_init__(self):
        p, n = self.config.p, self.config.n
        if self.Y.shape != (p, n):
            raise ValueError(f"Y has shape {self.Y.shape}, expected {(p, n)}")
        if self.theta.shape != (p,) or self.eta.shape != (n,):
            raise ValueError("theta/eta shapes do not match the config")
        if not np.all(np.abs(self.eta) == 1):
            raise ValueError("eta entries must be +1 or -1")
        for arr in (self.Y, self.theta, self.eta):
            arr.setflags(write=False)

    @property
    def noise(self) -> np.ndarray:
        return self.Y - np.outer(self.theta, self.eta)


def sample_labels(n: int, rng: CounterRNG) -> np.ndarray:
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    return rng.signs(n)


def sample_center(p: int, delta: float, mode: CenterMode, rng: CounterRNG) -> np.ndarray:
    if p < 1 or not delta > 0:
        raise DomainError("sample_center needs p >= 1 and delta > 0")
    if mode.tag == "gaussian_prior":
        return mode.alpha * rng.normal(p)
    for _ in range(8):
        g = rng.normal(p)
        norm = np.linalg.norm(g)
        if norm >= 1e-300:
            return g * (delta / norm)
    raise DegenerateDrawError("raw Gaussian direction had vanishing norm 8 times in a row")


def observe(theta: np.ndarray, eta: np.ndarray, sigma: float, rng: CounterRNG) -> np.ndarray:
    """Build ``Y = theta eta^T + sigma * Xi`` with ``Xi`` drawn observation by observation."""
    p, n = theta.size, eta.size
    rows = rng.normal((n, p))
    rows *= sigma
    rows += eta[:, None] * theta[None, :]
    return rows.T


def sample_dataset(config: ProblemConfig, mode: CenterMode = FIXED_NORM,
                   rng: CounterRNG | None = None) -> Dataset:
    """Draw labels, then the center, then the noise, all from ``rng``."""
    if rng is None:
        raise ValueError("sample_dataset needs an explicit generator")
    eta = sample_labels(config.n, rng)
    theta = sample_center(config.p, config.delta, mode, rng)
    Y = observe(theta, eta, config.sigma, rng)
    return Dataset(Y=Y, theta=theta, eta=eta, config=config, seed=rng.seed, mode=mode)


@dataclass(frozen=True, eq=False)
class GramSample:
    """Everything the estimators read from one instance, without ``Y`` itself.

    ``hollow`` is ``H(Y^T Y)`` and ``center_scores`` is ``Y^T theta``.
    """

    hollow: HollowGram
    center_scores: np.ndarray
    eta: np.ndarray
    theta_norm: float
    config: ProblemConfig
    seed: int


def _wishart_identity(n: int, dof: int, rng: CounterRNG) -> np.ndarray:
    """``R^T R`` for a ``dof x n`` standard Gaussian ``R``.

    For ``dof >= n`` the Bartlett factor is drawn instead: ``L`` lower
    triangular with ``L_ii^2 ~ chi2(dof - i)`` (``i`` from 0) and standard
    normal entries below the diagonal; ``L L^T`` has the same law.
    """
    if dof == 0:
        return np.zeros((n, n))
    if dof < n:
        R = rng.normal((dof, n))
        return R.T @ R
    L = np.zeros((n, n))
    L[np.diag_indices(n)] = np.sqrt(rng.chisquare(dof - np.arange(n)))
    rows, cols = np.tril_indices(n, -1)
    L[rows, cols] = rng.normal(rows.size)
    return L @ L.T


def sample_gram_statistics(config: ProblemConfig, mode: CenterMode = FIXED_NORM,
                           rng: CounterRNG | None = None) -> GramSample:
    """Draw ``H(Y^T Y)`` and ``Y^T theta`` with the same joint law as :func:`sample_dataset`.

    The noise law is rotation invariant, so only ``||theta||`` matters. Rotate
    ``theta`` onto the first axis; then, with ``z = W^T u / sigma`` for the unit
    direction ``u`` and ``R`` the remaining ``p - 1`` noise rows,
    ``Y^T Y = t^2 eta eta^T + t sigma (eta z^T + z eta^T) + sigma^2 (z z^T + R^T R)``
    where ``t = ||theta||``, and ``Y^T theta = t (t eta + sigma z)``. Cost is
    ``O(n^3)`` instead of ``O(n^2 p)``.
    """
    if rng is None:
        raise ValueError("sample_gram_statistics needs an explicit generator")
    n, p, sigma = config.n, config.p, config.sigma
    eta = sample_labels(n, rng)
    if mode.tag == "gaussian_prior":
        t = mode.alpha * float(np.sqrt(rng.chisquare(p)))
    else:
        t = config.delta
    z = rng.normal(n)
    G = _wishart_identity(n, p - 1, rng)
    G += np.outer(z, z)
    G *= sigma * sigma
    e = eta.astype(np.float64)
    cross = np.outer(e, z)
    G += (t * sigma) * (cross + cross.T)
    G += (t * t) * np.outer(e, e)
    scores = t * (t * e + sigma * z)
    scores.setflags(write=False)
    eta.setflags(write=False)
    return GramSample(HollowGram(G), scores, eta, t, config, rng.seed)
