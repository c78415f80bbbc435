"""Monte-Carlo engine for phase diagrams, method comparisons and risk-vs-SNR curves.

Every repetition of every cell draws one instance from
``derive_seed(master_seed, cell_index, rep)`` and evaluates all requested
methods on it (paired comparison). Work is split by cell; tallies are
integers, so aggregation does not depend on scheduling, and the result is the
same for any worker count or interruption pattern.

Checkpoint format (JSON lines): a header
``{"kind": "header", "format": 1, "spec": {...}, "spec_hash": "..."}``
followed by one record per completed (cell, method)::

    {"spec_hash", "a_index", "b_index", "method", "successes", "reps_done", "sum_miscls"}

``sum_miscls`` is the total number of misclassified labels over the cell's
repetitions. The spec hash is the first 16 hex digits (64 bits) of the
SHA-256 of the canonical JSON serialization of the spec (sorted keys, no
whitespace, floats in shortest round-trip form).
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import multiprocessing
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from threadpoolctl import threadpool_limits

from .core_model import ABPoint, ProblemConfig, ab_to_config, delta_for_snr, gaussian_tail
from .estimators import METHODS, EstimateTrace, refine, sign_vec, spectral_init
from .hollow_linalg import NoConvergenceError, hollow_gram, matvec_hollow
from .risk import hamming_risk
from .synth import (FIXED_NORM, derive_seed, rng_new, sample_dataset,
                    sample_gram_statistics, sample_labels)

SAMPLERS = ("gram", "full")
SOLVER_STREAM = 1
START_STREAM = 2


class SpecMismatchError(ValueError):
    pass


class CorruptCheckpointError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def hash64(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _normalize_methods(methods: Iterable[str]) -> tuple[str, ...]:
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
    if not methods or len(set(methods)) != len(methods):
        raise ValueError("methods must be a nonempty list without repeats")
    return tuple(m for m in METHODS if m in methods)


def _check_increasing(name: str, values) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if not values:
        raise ValueError(f"{name} must be nonempty")
    if any(not math.isfinite(v) or v <= 0 for v in values):
        raise ValueError(f"{name} entries must be positive and finite")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return values


@dataclass(frozen=True)
class GridSpec:
    n: int
    sigma: float
    a_grid: tuple[float, ...]
    b_grid: tuple[float, ...]
    reps: int
    methods: tuple[str, ...] = ("spectral_lloyd", "spectral")
    master_seed: int = 0
    sampler: str = "gram"

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "a_grid", _check_increasing("a_grid", self.a_grid))
        object.__setattr__(self, "b_grid", _check_increasing("b_grid", self.b_grid))
        object.__setattr__(self, "methods", _normalize_methods(self.methods))

    def canonical(self) -> dict:
        return {
            "kind": "grid",
            "n": self.n,
            "sigma": self.sigma,
            "a_grid": list(self.a_grid),
            "b_grid": list(self.b_grid),
            "reps": self.reps,
            "methods": list(self.methods),
            "master_seed": self.master_seed,
            "sampler": self.sampler,
        }

    @classmethod
    def from_canonical(cls, d: dict) -> "GridSpec":
        if d.get("kind") != "grid":
            raise ValueError("not a grid spec")
        return cls(n=d["n"], sigma=d["sigma"], a_grid=tuple(d["a_grid"]), b_grid=tuple(d["b_grid"]),
                   reps=d["reps"], methods=tuple(d["methods"]), master_seed=d["master_seed"],
                   sampler=d["sampler"])

    @property
    def spec_hash(self) -> str:
        return hash64(canonical_json(self.canonical()))

    def cell_index(self, a_index: int, b_index: int) -> int:
        return a_index * len(self.b_grid) + b_index

    def cells(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(len(self.a_grid)) for j in range(len(self.b_grid))]

    def config(self, a_index: int, b_index: int) -> ProblemConfig:
        return ab_to_config(ABPoint(self.a_grid[a_index], self.b_grid[b_index]), self.n, self.sigma)

    def same_geometry(self, other: "GridSpec") -> bool:
        return (self.n, self.sigma, self.a_grid, self.b_grid) == (other.n, other.sigma, other.a_grid, other.b_grid)


@dataclass(frozen=True)
class MethodTally:
    successes: int
    reps_done: int
    sum_miscls: int
    sum_sq_miscls: int = 0

    def mean_miscls_frac(self, n: int) -> float:
        return self.sum_miscls / (self.reps_done * n)

    @property
    def success_rate(self) -> float:
        return self.successes / self.reps_done


# ---------------------------------------------------------------------------
# One repetition: a single instance, every requested method


def dataset_checksum(hollow_entries: np.ndarray, eta: np.ndarray, scores: np.ndarray) -> str:
    h = hashlib.sha256()
    for arr in (hollow_entries, eta, scores):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def evaluate_rep(config: ProblemConfig, seed: int, methods: tuple[str, ...],
                 sampler: str = "gram", debug: bool = False):
    """Misclassification counts of each method on the instance drawn from ``seed``.

    A method whose eigensolver fails to converge is scored as a failure with
    ``n // 2`` misclassified labels (chance level). With ``debug`` the
    checksum of the instance each method saw is returned alongside.
    """
    n = config.n
    data_rng = rng_new(seed)
    if sampler == "full":
        ds = sample_dataset(config, FIXED_NORM, data_rng)
        HG = hollow_gram(ds.Y)
        eta = ds.eta
        scores = ds.Y.T @ ds.theta
    else:
        gs = sample_gram_statistics(config, FIXED_NORM, data_rng)
        HG, eta, scores = gs.hollow, gs.eta, gs.center_scores

    init: EstimateTrace | None = None
    init_failed = False
    if "spectral" in methods or "spectral_lloyd" in methods:
        try:
            init = spectral_init(HG, rng_new(derive_seed(seed, SOLVER_STREAM, 0)), check_gap=False)
        except NoConvergenceError:
            init_failed = True

    labels: dict[str, np.ndarray | None] = {}
    for method in methods:
        if method == "spectral":
            labels[method] = None if init_failed else init.labels
        elif method == "spectral_lloyd":
            labels[method] = None if init_failed else refine(HG, init).labels
        elif method == "random_lloyd":
            start = sample_labels(n, rng_new(derive_seed(seed, START_STREAM, 0)))
            labels[method] = refine(HG, EstimateTrace(start)).labels
        elif method == "oracle_supervised":
            labels[method] = sign_vec(matvec_hollow(HG, eta))
        elif method == "oracle_known_center":
            labels[method] = sign_vec(scores)

    out = {}
    for method, est in labels.items():
        out[method] = n // 2 if est is None else hamming_risk(est, eta).mismatches
    if debug:
        digest = dataset_checksum(HG.entries, eta, scores)
        return out, {m: digest for m in methods}
    return out


def run_cell(spec: GridSpec, a_index: int, b_index: int) -> dict[str, MethodTally]:
    config = spec.config(a_index, b_index)
    cell = spec.cell_index(a_index, b_index)
    counts = {m: [0, 0] for m in spec.methods}
    for rep in range(spec.reps):
        seed = derive_seed(spec.master_seed, cell, rep)
        for method, miss in evaluate_rep(config, seed, spec.methods, spec.sampler).items():
            acc = counts[method]
            acc[0] += miss == 0
            acc[1] += miss
    return {m: MethodTally(c[0], spec.reps, c[1]) for m, c in counts.items()}


# ---------------------------------------------------------------------------
# Results


@dataclass
class GridResult:
    spec: GridSpec
    cells: dict[tuple[int, int], dict[str, MethodTally]] = field(default_factory=dict)

    def completed(self, a_index: int, b_index: int) -> bool:
        tallies = self.cells.get((a_index, b_index))
        return tallies is not None and set(tallies) == set(self.spec.methods) and all(
            t.reps_done == self.spec.reps for t in tallies.values())

    @property
    def is_complete(self) -> bool:
        return all(self.completed(i, j) for i, j in self.spec.cells())

    def success_matrix(self, method: str) -> np.ndarray:
        if method not in self.spec.methods:
            raise ValueError(f"method {method!r} was not run in this grid")
        out = np.full((len(self.spec.a_grid), len(self.spec.b_grid)), np.nan)
        for (i, j), tallies in self.cells.items():
            out[i, j] = tallies[method].success_rate
        return out

    def to_dict(self) -> dict:
        cells = []
        for i, j in sorted(self.cells):
            for m in self.spec.methods:
                t = self.cells[(i, j)][m]
                cells.append({"a_index": i, "b_index": j, "method": m, "successes": t.successes,
                              "reps_done": t.reps_done, "sum_miscls": t.sum_miscls})
        return {"spec": self.spec.canonical(), "spec_hash": self.spec.spec_hash, "cells": cells,
                "complete": self.is_complete}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


# ---------------------------------------------------------------------------
# Checkpoints


def _header_line(spec: GridSpec) -> str:
    return canonical_json({"kind": "header", "format": 1, "spec": spec.canonical(),
                           "spec_hash": spec.spec_hash}) + "\n"


def _cell_lines(spec: GridSpec, a_index: int, b_index: int, tallies: dict[str, MethodTally]) -> str:
    lines = []
    for m in spec.methods:
        t = tallies[m]
        lines.append(canonical_json({
            "spec_hash": spec.spec_hash, "a_index": a_index, "b_index": b_index, "method": m,
            "successes": t.successes, "reps_done": t.reps_done, "sum_miscls": t.sum_miscls,
        }))
    return "\n".join(lines) + "\n"


class _CheckpointWriter:
    def __init__(self, path: Path | None, spec: GridSpec, fresh: bool):
        self.path = path
        if path is None:
            self._fh = None
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w" if fresh else "a", encoding="utf-8")
        if fresh:
            self._write(_header_line(spec))

    def _write(self, text: str):
        self._fh.write(text)
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def cell(self, spec, a_index, b_index, tallies):
        if self._fh is not None:
            self._write(_cell_lines(spec, a_index, b_index, tallies))

    def close(self):
        if self._fh is not None:
            self._fh.close()


def read_checkpoint(path) -> GridResult:
    """Parse a checkpoint into a (possibly partial) :class:`GridResult`.

    A final line without a terminating newline is a torn write and is
    dropped; any other malformed content raises :class:`CorruptCheckpointError`.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptCheckpointError(f"{path}: not UTF-8 text") from exc
    lines = text.split("\n")
    if lines and lines[-1] != "":
        lines = lines[:-1]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise CorruptCheckpointError(f"{path}: empty checkpoint")
    try:
        header = json.loads(lines[0])
        spec = GridSpec.from_canonical(header["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("kind") != "header":
        raise CorruptCheckpointError(f"{path}: first line is not a header")
    if header.get("spec_hash") != spec.spec_hash:
        raise SpecMismatchError(f"{path}: header spec does not match its recorded hash")

    partial: dict[tuple[int, int], dict[str, MethodTally]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            key = (int(rec["a_index"]), int(rec["b_index"]))
            method = rec["method"]
            tally = MethodTally(int(rec["successes"]), int(rec["reps_done"]), int(rec["sum_miscls"]))
            record_hash = rec["spec_hash"]
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptCheckpointError(f"{path}:{lineno}: bad record: {exc}") from exc
        if record_hash != spec.spec_hash:
            raise SpecMismatchError(f"{path}:{lineno}: record belongs to spec {record_hash}")
        i, j = key
        if not (0 <= i < len(spec.a_grid) and 0 <= j < len(spec.b_grid)) or method not in spec.methods:
            raise CorruptCheckpointError(f"{path}:{lineno}: record outside the grid")
        if not 0 <= tally.successes <= tally.reps_done <= spec.reps or tally.sum_miscls < 0:
            raise CorruptCheckpointError(f"{path}:{lineno}: inconsistent tallies")
        previous = partial.setdefault(key, {}).get(method)
        if previous is not None and previous != tally:
            raise CorruptCheckpointError(f"{path}:{lineno}: conflicting duplicate record")
        partial[key][method] = tally

    result = GridResult(spec)
    for key, tallies in partial.items():
        if set(tallies) == set(spec.methods) and all(t.reps_done == spec.reps for t in tallies.values()):
            result.cells[key] = tallies
    return result


# ---------------------------------------------------------------------------
# Execution


def _limit_blas_threads():
    threadpool_limits(1)


def _executor(workers: int):
    return concurrent.futures.ProcessPoolExecutor(
        max_workers=workers, mp_context=multiprocessing.get_context("spawn"),
        initializer=_limit_blas_threads)


def _run_units(func: Callable, units: list, workers: int, on_done: Callable):
    """Evaluate ``func(*unit)`` for each unit; ``on_done(unit, value)`` runs in this process."""
    if workers <= 1:
        with threadpool_limits(1):
            for unit in units:
                on_done(unit, func(*unit))
        return
    with _executor(workers) as pool:
        futures = {pool.submit(func, *unit): unit for unit in units}
        for fut in concurrent.futures.as_completed(futures):
            on_done(futures[fut], fut.result())


def _continue_grid(result: GridResult, workers: int, writer: _CheckpointWriter,
                   cell_limit: int | None, progress: Callable | None) -> GridResult:
    spec = result.spec
    pending = [c for c in spec.cells() if not result.completed(*c)]
    if cell_limit is not None:
        pending = pending[:cell_limit]

    def done(unit, tallies):
        _, i, j = unit
        result.cells[(i, j)] = tallies
        writer.cell(spec, i, j, tallies)
        if progress is not None:
            progress(len(result.cells), len(spec.cells()))

    try:
        _run_units(run_cell, [(spec, i, j) for i, j in pending], workers, done)
    finally:
        writer.close()
    result.cells = dict(sorted(result.cells.items()))
    return result


def run_grid(spec: GridSpec, workers: int = 1, checkpoint_path=None,
             cell_limit: int | None = None, progress: Callable | None = None) -> GridResult:
    """Run every cell of ``spec``; a checkpoint, if given, is (re)created from scratch.

    ``cell_limit`` stops after that many cells, leaving a resumable checkpoint.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    path = Path(checkpoint_path) if checkpoint_path is not None else None
    writer = _CheckpointWriter(path, spec, fresh=True)
    return _continue_grid(GridResult(spec), workers, writer, cell_limit, progress)


def resume_grid(checkpoint_path, workers: int = 1, spec: GridSpec | None = None,
                cell_limit: int | None = None, progress: Callable | None = None) -> GridResult:
    """Finish the cells missing from a checkpoint, appending to it."""
    path = Path(checkpoint_path)
    result = read_checkpoint(path)
    if spec is not None and spec.spec_hash != result.spec.spec_hash:
        raise SpecMismatchError(
            f"checkpoint was written for spec {result.spec.spec_hash}, not {spec.spec_hash}")
    if result.is_complete:
        return result
    # rewrite from parsed state so torn or partial trailing records disappear
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(_header_line(result.spec))
        for (i, j), tallies in sorted(result.cells.items()):
            fh.write(_cell_lines(result.spec, i, j, tallies))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    writer = _CheckpointWriter(path, result.spec, fresh=False)
    return _continue_grid(result, workers, writer, cell_limit, progress)


def diff_grids(result: GridResult, method_a: str, method_b: str,
               other: GridResult | None = None) -> np.ndarray:
    """Per-cell ``success(method_a) - success(method_b)``; ``method_b`` may come from ``other``."""
    other = result if other is None else other
    if not result.spec.same_geometry(other.spec):
        raise SpecMismatchError("grids differ in n, sigma or grid points")
    if not (result.is_complete and other.is_complete):
        raise ValueError("both grids must be complete")
    return result.success_matrix(method_a) - other.success_matrix(method_b)


def success_transform(x: float) -> float:
    """Display scaling ``x -> 10^(-3 (1 - x))`` of a success probability."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"success rate must lie in [0, 1], got {x}")
    return 10.0 ** (-3.0 * (1.0 - x))


def near_threshold_cells(spec: GridSpec, rel_band: float) -> list[tuple[int, int]]:
    """Cells with ``|a - (1 + 2b)| <= rel_band * (1 + 2b)``."""
    out = []
    for i, a in enumerate(spec.a_grid):
        for j, b in enumerate(spec.b_grid):
            edge = 1.0 + 2.0 * b
            if abs(a - edge) <= rel_band * edge:
                out.append((i, j))
    return out


# ---------------------------------------------------------------------------
# Presets


def linear_grid(lo: float, hi: float, points: int) -> tuple[float, ...]:
    if points < 1:
        raise ValueError("grid needs at least one point")
    if points == 1:
        return (float(lo),)
    return tuple(float(x) for x in np.linspace(lo, hi, points))


PRESETS = {
    "desk": dict(n=200, points=15, reps=60),
    "paper": dict(n=500, points=50, reps=300),
}

PRESET_METHODS = ("spectral_lloyd", "spectral", "random_lloyd")


def preset_spec(name: str, master_seed: int = 0, methods=PRESET_METHODS,
                sampler: str = "gram") -> GridSpec:
    """The desk-scale grid, or the full-size reproduction grid (hours of compute)."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    if name == "paper":
        warnings.warn("the paper preset runs 750k instances with n=500; expect many hours",
                      RuntimeWarning, stacklevel=2)
    return GridSpec(n=p["n"], sigma=1.0, a_grid=linear_grid(1.1, 11.0, p["points"]),
                    b_grid=linear_grid(0.1, 5.0, p["points"]), reps=p["reps"],
                    methods=tuple(methods), master_seed=master_seed, sampler=sampler)


# ---------------------------------------------------------------------------
# Risk-vs-SNR curves


@dataclass(frozen=True)
class CurveSpec:
    n: int
    p: int
    sigma: float
    r_grid: tuple[float, ...]
    reps: int
    methods: tuple[str, ...] = ("spectral_lloyd", "spectral")
    master_seed: int = 0
    sampler: str = "gram"

    def __post_init__(self):
        if self.n < 3 or self.p < 1 or not self.sigma > 0 or self.reps < 1:
            raise ValueError("curve spec needs n >= 3, p >= 1, sigma > 0, reps >= 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        object.__setattr__(self, "r_grid", _check_increasing("r_grid", self.r_grid))
        object.__setattr__(self, "methods", _normalize_methods(self.methods))

    def canonical(self) -> dict:
        return {"kind": "curve", "n": self.n, "p": self.p, "sigma": self.sigma,
                "r_grid": list(self.r_grid), "reps": self.reps, "methods": list(self.methods),
                "master_seed": self.master_seed, "sampler": self.sampler}

    @property
    def spec_hash(self) -> str:
        return hash64(canonical_json(self.canonical()))

    def config(self, r_index: int) -> ProblemConfig:
        r = self.r_grid[r_index]
        return ProblemConfig(self.n, self.p, self.sigma, delta_for_snr(r, self.n, self.p, self.sigma))


@dataclass(frozen=True)
class CurvePoint:
    r: float
    delta: float
    method: str
    reps: int
    successes: int
    mean_miscls_frac: float
    std_error: float
    lower_bound_curve: float

    @property
    def ci(self) -> tuple[float, float]:
        half = 1.96 * self.std_error
        return max(0.0, self.mean_miscls_frac - half), min(1.0, self.mean_miscls_frac + half)


def run_curve_point(spec: CurveSpec, r_index: int) -> dict[str, MethodTally]:
    config = spec.config(r_index)
    counts = {m: [0, 0, 0] for m in spec.methods}
    for rep in range(spec.reps):
        seed = derive_seed(spec.master_seed, r_index, rep)
        for method, miss in evaluate_rep(config, seed, spec.methods, spec.sampler).items():
            acc = counts[method]
            acc[0] += miss == 0
            acc[1] += miss
            acc[2] += miss * miss
    return {m: MethodTally(c[0], spec.reps, c[1], c[2]) for m, c in counts.items()}


def run_curve(spec: CurveSpec, workers: int = 1) -> list[CurvePoint]:
    """Mean misclassified fraction per target SNR, with normal-approximation 95% intervals."""
    tallies: dict[int, dict[str, MethodTally]] = {}
    _run_units(run_curve_point, [(spec, k) for k in range(len(spec.r_grid))], workers,
               lambda unit, value: tallies.__setitem__(unit[1], value))
    points = []
    n = spec.n
    for k, r in enumerate(spec.r_grid):
        config = spec.config(k)
        for m in spec.methods:
            t = tallies[k][m]
            mean = t.sum_miscls / (t.reps_done * n)
            if t.reps_done > 1:
                var = (t.sum_sq_miscls / n**2 - t.reps_done * mean**2) / (t.reps_done - 1)
                se = math.sqrt(max(var, 0.0) / t.reps_done)
            else:
                se = 0.0
            points.append(CurvePoint(r, config.delta, m, t.reps_done, t.successes, mean, se,
                                     gaussian_tail(r)))
    return points
