"""Quick property checks run by ``sharpgmm selftest`` (a few seconds, fixed seeds)."""

from __future__ import annotations

import math
import tempfile
import traceback
from pathlib import Path

import numpy as np

from .core_model import ProblemConfig, exact_threshold, snr
from .estimators import oracle_supervised, sign_vec, spectral_init, spectral_lloyd
from .experiments import GridSpec, run_grid, success_transform
from .hollow_linalg import gram, hollow, hollow_gram, jacobi_eig, matvec_hollow, op_norm_oracle, top_eigpair
from .io import read_csv_rows, read_dataset, grid_rows, write_dataset, write_grid_csv
from .risk import hamming_risk
from .synth import FIXED_NORM, rng_new, sample_dataset


def _oracle_identity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, p = rng.integers(2, 30), rng.integers(1, 40)
        cfg = ProblemConfig(int(n), int(p), float(rng.uniform(0.1, 2)), float(rng.uniform(0.1, 3)))
        ds = sample_dataset(cfg, FIXED_NORM, rng_new(int(rng.integers(2**63))))
        want = sign_vec(matvec_hollow(hollow(gram(ds.Y)), ds.eta))
        if not np.array_equal(oracle_supervised(ds.Y, ds.eta), want):
            return False, f"mismatch at n={n}, p={p}"
    return True, "20 instances"


def _hollow_norm_bound():
    rng = np.random.default_rng(2)
    worst = -math.inf
    for _ in range(50):
        n = int(rng.integers(1, 12))
        A = rng.normal(size=(n, n))
        A = A + A.T
        worst = max(worst, op_norm_oracle(hollow(A)) - 2 * op_norm_oracle(A))
    return worst <= 1e-9, f"max excess {worst:.3g}"


def _spike_norm():
    worst = 0.0
    for n in (2, 3, 10, 33):
        eta = np.where(np.arange(n) % 3 == 0, 1.0, -1.0)
        worst = max(worst, abs(op_norm_oracle(hollow(np.outer(eta, eta))) - (n - 1)))
    return worst <= 1e-9, f"max error {worst:.3g}"


def _eigensolver_vs_jacobi():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 24))
        A = rng.normal(size=(n, n))
        values, vectors = jacobi_eig(A + A.T)
        pair = top_eigpair(A + A.T, tol=1e-12, rng=rng_new(int(rng.integers(2**63))))
        worst = max(worst, 1 - abs(pair.vector @ vectors[:, 0]),
                    abs(pair.value - values[0]) / max(1.0, abs(values[0])))
    return worst <= 1e-8, f"worst deviation {worst:.3g}"


def _noiseless_recovery():
    for seed in range(10):
        ds = sample_dataset(ProblemConfig(60, 20, 0.0, 1.0), FIXED_NORM, rng_new(seed))
        trace = spectral_init(hollow_gram(ds.Y), rng_new(seed + 1000))
        if not hamming_risk(trace.labels, ds.eta).exact:
            return False, f"seed {seed} not recovered"
    return True, "10 seeds"


def _above_threshold():
    n = 200
    p = round(n * math.log(n))
    cfg = ProblemConfig(n, p, 1.0, 1.5 * exact_threshold(n, p))
    hits = 0
    for seed in range(10):
        ds = sample_dataset(cfg, FIXED_NORM, rng_new(seed))
        hits += hamming_risk(spectral_lloyd(ds.Y, rng_new(seed + 1)).labels, ds.eta).exact
    return hits >= 9, f"{hits}/10 exact at r_n={snr(cfg):.2f}"


def _file_round_trips():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        ds = sample_dataset(ProblemConfig(7, 5, 0.7, 1.3), FIXED_NORM, rng_new(9))
        write_dataset(ds, tmp / "d.bin")
        back = read_dataset(tmp / "d.bin")
        same = (np.array_equal(back.Y, ds.Y) and np.array_equal(back.theta, ds.theta)
                and np.array_equal(back.eta, ds.eta) and back.config == ds.config)
        spec = GridSpec(n=20, sigma=1.0, a_grid=(2.0, 6.0), b_grid=(0.5,), reps=3)
        result = run_grid(spec)
        write_grid_csv(result, tmp / "g.csv")
        csv_ok = read_csv_rows(tmp / "g.csv") == grid_rows(result)
    return same and csv_ok, "dataset and grid CSV"


def _transform_endpoints():
    ok = success_transform(1.0) == 1.0 and abs(success_transform(0.0) - 1e-3) < 1e-18
    return ok, "x -> 10^(-3(1-x))"


CHECKS = (
    ("supervised oracle equals sign(H(Y^T Y) eta)", _oracle_identity),
    ("||H(A)|| <= 2 ||A||", _hollow_norm_bound),
    ("||H(eta eta^T)|| = n - 1", _spike_norm),
    ("power iteration agrees with Jacobi", _eigensolver_vs_jacobi),
    ("noiseless spectral recovery", _noiseless_recovery),
    ("exact recovery above threshold", _above_threshold),
    ("file round trips", _file_round_trips),
    ("display transform endpoints", _transform_endpoints),
)


def run_selftest() -> list[tuple[str, bool, str]]:
    results = []
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception:  # noqa: BLE001 - report, keep going
            ok, detail = False, traceback.format_exc(limit=3).strip().splitlines()[-1]
        results.append((name, bool(ok), detail))
    return results
