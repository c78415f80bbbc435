"""File formats: dataset binaries, result CSVs, key=value configs and run manifests.

Dataset file layout (all integers and floats little-endian)::

    8 bytes   magic b"GMM2SEED"
    4 bytes   uint32 header length L
    L bytes   UTF-8 canonical JSON header {"delta","mode","n","p","seed","sigma"[,"alpha"]}
    8p bytes  theta as float64
    n bytes   eta as int8
    8pn bytes Y as float64, row-major p x n (row k holds coordinate k of every observation)
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .core_model import DomainError, ProblemConfig
from .experiments import (METHODS, CurvePoint, CurveSpec, GridResult, GridSpec, canonical_json,
                          linear_grid, success_transform)
from .synth import CenterMode, Dataset

MAGIC = b"GMM2SEED"
_F64 = np.dtype("<f8")


class DatasetFormatError(ValueError):
    code = "format"


class MagicMismatchError(DatasetFormatError):
    code = "bad_magic"


class TruncatedDatasetError(DatasetFormatError):
    code = "truncated"


class HeaderParseError(DatasetFormatError):
    code = "bad_header"


class DatasetValidationError(DatasetFormatError):
    code = "invalid"


def write_dataset(ds: Dataset, path) -> None:
    header = {"n": ds.config.n, "p": ds.config.p, "sigma": ds.config.sigma,
              "delta": ds.config.delta, "seed": ds.seed, "mode": ds.mode.tag}
    if ds.mode.alpha is not None:
        header["alpha"] = ds.mode.alpha
    head = canonical_json(header).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(np.asarray(ds.theta, dtype=_F64).tobytes())
        fh.write(np.asarray(ds.eta, dtype=np.int8).tobytes())
        fh.write(np.ascontiguousarray(ds.Y, dtype=_F64).tobytes(order="C"))


def read_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC):
        raise TruncatedDatasetError(f"{path}: file shorter than the magic number")
    if data[:8] != MAGIC:
        raise MagicMismatchError(f"{path}: not a dataset file (magic {data[:8]!r})")
    if len(data) < 12:
        raise TruncatedDatasetError(f"{path}: missing header length")
    (hlen,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + hlen:
        raise TruncatedDatasetError(f"{path}: header cut short")
    try:
        header = json.loads(data[12:12 + hlen].decode())
        n, p = header["n"], header["p"]
        sigma, delta, seed = header["sigma"], header["delta"], header["seed"]
        mode = header["mode"]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise HeaderParseError(f"{path}: cannot parse header: {exc}") from exc
    try:
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (n, p, seed)):
            raise ValueError("n, p and seed must be integers")
        config = ProblemConfig(n=n, p=p, sigma=float(sigma), delta=float(delta))
        center = CenterMode(mode, header.get("alpha"))
        if not 0 <= seed < 2**64:
            raise ValueError("seed out of range")
    except (DomainError, ValueError, TypeError) as exc:
        raise DatasetValidationError(f"{path}: invalid header values: {exc}") from exc

    offset = 12 + hlen
    need = offset + 8 * p + n + 8 * p * n
    if len(data) < need:
        raise TruncatedDatasetError(f"{path}: expected {need} bytes, found {len(data)}")
    if len(data) > need:
        raise DatasetValidationError(f"{path}: {len(data) - need} trailing bytes")
    theta = np.frombuffer(data, _F64, p, offset).astype(np.float64)
    offset += 8 * p
    eta = np.frombuffer(data, np.int8, n, offset).copy()
    offset += n
    Y = np.frombuffer(data, _F64, p * n, offset).astype(np.float64).reshape(p, n)
    try:
        return Dataset(Y=Y, theta=theta, eta=eta, config=config, seed=seed, mode=center)
    except ValueError as exc:
        raise DatasetValidationError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV

GRID_COLUMNS = ("a", "b", "delta", "p", "method", "reps", "successes", "success_rate",
                "mean_miscls_frac", "transformed_rate")
CURVE_COLUMNS = ("r", "delta", "p", "method", "reps", "successes", "mean_miscls_frac",
                 "mean_risk_over_n", "std_error", "ci_low", "ci_high", "lower_bound_curve")
DIFF_COLUMNS = ("a", "b", "method_a", "method_b", "success_a", "success_b", "difference")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def grid_rows(result: GridResult) -> list[dict]:
    if not result.is_complete:
        raise ValueError("grid result is incomplete")
    spec = result.spec
    rows = []
    for (i, j), tallies in result.cells.items():
        config = spec.config(i, j)
        for method, t in tallies.items():
            rate = t.success_rate
            rows.append({
                "a": spec.a_grid[i], "b": spec.b_grid[j], "delta": config.delta, "p": config.p,
                "method": method, "reps": t.reps_done, "successes": t.successes,
                "success_rate": rate, "mean_miscls_frac": t.mean_miscls_frac(spec.n),
                "transformed_rate": success_transform(rate),
            })
    rows.sort(key=lambda r: (r["a"], r["b"], r["method"]))
    return rows


def _write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def write_grid_csv(result: GridResult, path) -> None:
    _write_rows(path, GRID_COLUMNS, grid_rows(result))


_INT_COLUMNS = {"p", "reps", "successes"}
_STR_COLUMNS = {"method", "method_a", "method_b"}


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append({k: v if k in _STR_COLUMNS else int(v) if k in _INT_COLUMNS else float(v)
                        for k, v in row.items()})
        return out


def curve_rows(points: list[CurvePoint], spec: CurveSpec) -> list[dict]:
    rows = []
    for pt in points:
        lo, hi = pt.ci
        rows.append({"r": pt.r, "delta": pt.delta, "p": spec.p, "method": pt.method, "reps": pt.reps,
                     "successes": pt.successes, "mean_miscls_frac": pt.mean_miscls_frac,
                     "mean_risk_over_n": 2.0 * pt.mean_miscls_frac, "std_error": pt.std_error,
                     "ci_low": lo, "ci_high": hi, "lower_bound_curve": pt.lower_bound_curve})
    return rows


def write_curve_csv(points: list[CurvePoint], spec: CurveSpec, path) -> None:
    _write_rows(path, CURVE_COLUMNS, curve_rows(points, spec))


def diff_rows(result: GridResult, method_a: str, method_b: str, diff: np.ndarray,
              other: GridResult | None = None) -> list[dict]:
    spec = result.spec
    sa = result.success_matrix(method_a)
    sb = (result if other is None else other).success_matrix(method_b)
    rows = []
    for i, a in enumerate(spec.a_grid):
        for j, b in enumerate(spec.b_grid):
            rows.append({"a": a, "b": b, "method_a": method_a, "method_b": method_b,
                         "success_a": sa[i, j], "success_b": sb[i, j], "difference": diff[i, j]})
    return rows


def write_diff_csv(result: GridResult, method_a: str, method_b: str, diff: np.ndarray, path,
                   other: GridResult | None = None) -> None:
    _write_rows(path, DIFF_COLUMNS, diff_rows(result, method_a, method_b, diff, other))


# ---------------------------------------------------------------------------
# key = value configs


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


_GRID_KEYS = {"kind", "n", "sigma", "a_min", "a_max", "a_points", "b_min", "b_max", "b_points",
              "reps", "methods", "seed", "sampler"}
_CURVE_KEYS = {"kind", "n", "p", "sigma", "r", "reps", "methods", "seed", "sampler"}


def parse_config_text(text: str, source: str = "<config>") -> GridSpec | CurveSpec:
    """Parse ``key = value`` lines (``#`` starts a comment) into a grid or curve spec.

    Grid keys: n, sigma, a_min, a_max, a_points, b_min, b_max, b_points, reps,
    methods, seed, sampler. Curve files set ``kind = curve`` and use n, p,
    sigma, r (comma list), reps, methods, seed, sampler. Unknown keys are errors.
    """
    values: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        values[key] = (value, lineno)

    kind = values.get("kind", ("grid", None))[0]
    if kind not in ("grid", "curve"):
        raise ConfigError(f"kind must be 'grid' or 'curve', got {kind!r}", values["kind"][1], source)
    allowed = _GRID_KEYS if kind == "grid" else _CURVE_KEYS
    for key, (_, lineno) in values.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for a {kind} config", lineno, source)

    def get(key, conv, default=None, required=True):
        if key not in values:
            if required and default is None:
                raise ConfigError(f"missing required key {key!r}", None, source)
            return default
        text_value, lineno = values[key]
        try:
            return conv(text_value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, source) from exc

    def line_of(key):
        return values.get(key, (None, None))[1]

    def integer(s):
        return int(s, 10)

    def str_list(s):
        return tuple(x.strip() for x in s.split(",") if x.strip())

    def float_list(s):
        return tuple(float(x) for x in s.split(",") if x.strip())

    methods = get("methods", str_list, ("spectral_lloyd", "spectral"))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}", line_of("methods"), source)
    common = dict(sigma=get("sigma", float, 1.0), reps=get("reps", integer),
                  methods=methods, master_seed=get("seed", integer, 0, required=False) or 0,
                  sampler=get("sampler", str, "gram"))
    if common["reps"] < 1:
        raise ConfigError("reps must be >= 1", line_of("reps"), source)

    try:
        if kind == "curve":
            return CurveSpec(n=get("n", integer), p=get("p", integer), r_grid=get("r", float_list),
                             **common)
        a_min, a_max = get("a_min", float), get("a_max", float)
        b_min, b_max = get("b_min", float), get("b_max", float)
        a_points, b_points = get("a_points", integer), get("b_points", integer)
        if a_min > a_max:
            raise ConfigError("a_min must not exceed a_max", line_of("a_min"), source)
        if b_min > b_max:
            raise ConfigError("b_min must not exceed b_max", line_of("b_min"), source)
        for key, pts, lo, hi in (("a_points", a_points, a_min, a_max), ("b_points", b_points, b_min, b_max)):
            if pts < 1 or (pts > 1 and lo == hi):
                raise ConfigError(f"{key} must be >= 1 (and 1 when min == max)", line_of(key), source)
        return GridSpec(n=get("n", integer), a_grid=linear_grid(a_min, a_max, a_points),
                        b_grid=linear_grid(b_min, b_max, b_points), **common)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), None, source) from exc


def load_config(path) -> GridSpec | CurveSpec:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def preset_path(name: str):
    return resources.files("sharpgmm") / "presets" / f"{name}.cfg"


# ---------------------------------------------------------------------------
# Run manifests


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def outputs_hash(outputs: dict[str, str]) -> str:
    listing = "".join(f"{name}\0{blob}\n" for name, blob in sorted(outputs.items()))
    return hashlib.sha1(listing.encode()).hexdigest()


@dataclass
class RunManifest:
    tool_version: str
    spec: dict
    master_seed: int
    started: str
    finished: str
    outputs: dict[str, str] = field(default_factory=dict)
    content_hash: str = ""

    @classmethod
    def for_outputs(cls, spec, started: str, files: list[Path]) -> "RunManifest":
        outputs = {Path(f).name: git_blob_hash(Path(f).read_bytes()) for f in files}
        return cls(__version__, spec.canonical(), spec.master_seed, started, utc_now(),
                   outputs, outputs_hash(outputs))

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"

    def verify(self, directory) -> bool:
        directory = Path(directory)
        current = {name: git_blob_hash((directory / name).read_bytes()) for name in self.outputs}
        return current == self.outputs and outputs_hash(current) == self.content_hash


def read_manifest(path) -> RunManifest:
    return RunManifest(**json.loads(Path(path).read_text(encoding="utf-8")))


def utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
