"""Command-line entry point ``sharpgmm``.

Exit codes: 0 success, 1 usage error (bad flags or config file), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .core_model import ABPoint, DomainError, ProblemConfig, ab_to_config
from .estimators import METHODS, oracle_known_center, oracle_supervised, random_lloyd, spectral, spectral_lloyd
from .experiments import (SAMPLERS, SOLVER_STREAM, START_STREAM, CurveSpec, GridSpec,
                          diff_grids, preset_spec, read_checkpoint, resume_grid, run_curve, run_grid)
from .io import (ConfigError, RunManifest, load_config, read_dataset, utc_now, write_curve_csv,
                 write_dataset, write_diff_csv, write_grid_csv)
from .risk import hamming_risk
from .svg import render_diff_svg, render_grid_svg
from .synth import CenterMode, derive_seed, rng_new, sample_dataset

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _methods(text: str) -> tuple[str, ...]:
    out = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in out if m not in METHODS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sharpgmm", description="Label recovery in the two-component Gaussian mixture.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a dataset and write it to a binary file")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=int)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--delta", type=float, help="center norm; or give --a and --b")
    g.add_argument("--a", type=float)
    g.add_argument("--b", type=float)
    g.add_argument("--mode", choices=("fixed_norm", "gaussian_prior"), default="fixed_norm")
    g.add_argument("--alpha", type=float, help="per-coordinate scale of a gaussian_prior center")
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--out", required=True, help="output file")
    g.add_argument("--json", action="store_true", help="print the dataset header as JSON")

    e = sub.add_parser("estimate", help="run one method on a dataset file and report its loss")
    e.add_argument("--dataset", required=True)
    e.add_argument("--method", choices=METHODS, default="spectral_lloyd")
    e.add_argument("--seed", type=_seed, help="solver seed (default: the dataset seed)")
    e.add_argument("--iters", type=int, help="Lloyd steps (default floor(3 log n))")
    e.add_argument("--json", action="store_true")

    def grid_source(p):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", choices=("desk", "paper"))
        src.add_argument("--config", help="key = value grid config")
        p.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
        p.add_argument("--methods", type=_methods, help="comma-separated methods")
        p.add_argument("--sampler", choices=SAMPLERS)
        p.add_argument("--workers", type=_positive_int, default=1)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--resume", action="store_true", help="continue from OUT/checkpoint.jsonl")
        p.add_argument("--json", action="store_true", help="print a JSON summary")

    pg = sub.add_parser("phase-grid", help="Monte-Carlo phase diagram: CSV, SVG per method, manifest")
    grid_source(pg)
    pg.add_argument("--cell-limit", type=_positive_int, help="stop after this many new cells")
    pg.add_argument("--no-overlay", action="store_true", help="omit the threshold curve")

    c = sub.add_parser("compare", help="per-cell success difference of two methods")
    grid_source(c)
    c.add_argument("--method-a", choices=METHODS, default="spectral_lloyd")
    c.add_argument("--method-b", choices=METHODS, default="spectral")
    c.add_argument("--checkpoint", help="use a finished grid checkpoint instead of running one")
    c.add_argument("--other", help="checkpoint providing method-b (same geometry)")
    c.add_argument("--no-overlay", action="store_true")

    cv = sub.add_parser("curve", help="misclassified fraction against the signal-to-noise ratio")
    cv.add_argument("--config", help="key = value config with kind = curve")
    cv.add_argument("--n", type=int)
    cv.add_argument("--p", type=int)
    cv.add_argument("--sigma", type=float, default=1.0)
    cv.add_argument("--r", help="comma-separated SNR values")
    cv.add_argument("--reps", type=_positive_int, default=100)
    cv.add_argument("--methods", type=_methods)
    cv.add_argument("--sampler", choices=SAMPLERS)
    cv.add_argument("--seed", type=_seed)
    cv.add_argument("--workers", type=_positive_int, default=1)
    cv.add_argument("--out", default=".", help="output directory")
    cv.add_argument("--json", action="store_true")

    st = sub.add_parser("selftest", help="quick internal property checks")
    st.add_argument("--json", action="store_true")
    return parser


# ---------------------------------------------------------------------------


def _cmd_generate(args) -> int:
    if args.delta is not None:
        if args.p is None:
            raise UsageError("--delta needs --p")
        if args.a is not None or args.b is not None:
            raise UsageError("give either --delta or --a/--b, not both")
        config = ProblemConfig(args.n, args.p, args.sigma, args.delta)
    elif args.a is not None and args.b is not None:
        config = ab_to_config(ABPoint(args.a, args.b), args.n, args.sigma)
        if args.p is not None and args.p != config.p:
            raise UsageError(f"--p {args.p} conflicts with p={config.p} implied by --b")
    else:
        raise UsageError("give --delta (with --p) or both --a and --b")
    mode = CenterMode(args.mode, args.alpha)
    ds = sample_dataset(config, mode, rng_new(args.seed))
    write_dataset(ds, args.out)
    info = {"n": config.n, "p": config.p, "sigma": config.sigma, "delta": config.delta,
            "seed": args.seed, "mode": mode.tag, "path": str(args.out)}
    print(json.dumps(info, sort_keys=True) if args.json else
          f"wrote {args.out}: n={config.n} p={config.p} sigma={config.sigma:g} delta={config.delta:.6g}")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    ds = read_dataset(args.dataset)
    seed = ds.seed if args.seed is None else args.seed
    m = args.method
    iters = {}
    if m == "spectral_lloyd":
        trace = spectral_lloyd(ds.Y, rng_new(derive_seed(seed, SOLVER_STREAM, 0)), args.iters)
        labels, iters = trace.labels, {"iterations_run": trace.iterations_run,
                                       "converged_at": trace.converged_at,
                                       "eigen_gap_warning": trace.eigen_gap_warning}
    elif m == "spectral":
        trace = spectral(ds.Y, rng_new(derive_seed(seed, SOLVER_STREAM, 0)))
        labels, iters = trace.labels, {"eigen_gap_warning": trace.eigen_gap_warning}
    elif m == "random_lloyd":
        trace = random_lloyd(ds.Y, rng_new(derive_seed(seed, START_STREAM, 0)), args.iters)
        labels, iters = trace.labels, {"iterations_run": trace.iterations_run,
                                       "converged_at": trace.converged_at}
    elif m == "oracle_supervised":
        labels = oracle_supervised(ds.Y, ds.eta)
    else:
        labels = oracle_known_center(ds.Y, ds.theta)
    report = hamming_risk(labels, ds.eta)
    if args.json:
        print(json.dumps({"method": m, **report.to_dict(), **iters}, sort_keys=True))
    else:
        print(f"{m}: {report.mismatches}/{report.n} misclassified "
              f"(fraction {report.normalized:.6g}); exact recovery: {report.exact}")
    return EXIT_OK


def _grid_spec(args) -> GridSpec:
    if args.config:
        spec = load_config(args.config)
        if not isinstance(spec, GridSpec):
            raise UsageError(f"{args.config} describes a curve, not a grid")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spec = preset_spec(args.preset or "desk")
        if args.preset == "paper":
            print("note: the paper preset runs 750000 instances at n=500; expect many hours",
                  file=sys.stderr)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.methods is not None:
        changes["methods"] = args.methods
    if args.sampler is not None:
        changes["sampler"] = args.sampler
    if changes:
        d = {**spec.__dict__, **changes}
        spec = GridSpec(**d)
    return spec


def _progress(done: int, total: int) -> None:
    print(f"\r{done}/{total} cells", end="" if done < total else "\n", file=sys.stderr, flush=True)


def _run_or_resume(spec: GridSpec, args, cell_limit=None):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.jsonl"
    if args.resume and ckpt.exists():
        return resume_grid(ckpt, args.workers, spec=spec, cell_limit=cell_limit, progress=_progress)
    return run_grid(spec, args.workers, ckpt, cell_limit=cell_limit, progress=_progress)


def _cmd_phase_grid(args) -> int:
    spec = _grid_spec(args)
    started = utc_now()
    result = _run_or_resume(spec, args, args.cell_limit)
    out = Path(args.out)
    if not result.is_complete:
        done = len(result.cells)
        msg = {"complete": False, "cells_done": done, "cells_total": len(spec.cells()),
               "checkpoint": str(out / "checkpoint.jsonl")}
        print(json.dumps(msg, sort_keys=True) if args.json else
              f"stopped after {done}/{len(spec.cells())} cells; rerun with --resume to finish")
        return EXIT_OK
    files = [out / "grid.csv"]
    write_grid_csv(result, files[0])
    for m in spec.methods:
        files.append(out / f"heatmap_{m}.svg")
        render_grid_svg(result, m, files[-1], overlay_threshold=not args.no_overlay)
    manifest = RunManifest.for_outputs(spec, started, files)
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    if args.json:
        print(json.dumps({"complete": True, "spec_hash": spec.spec_hash,
                          "outputs": [str(f) for f in files],
                          "content_hash": manifest.content_hash}, sort_keys=True))
    else:
        print(f"wrote {', '.join(str(f) for f in files)}; content hash {manifest.content_hash}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    if args.checkpoint:
        result = read_checkpoint(args.checkpoint)
    else:
        spec = _grid_spec(args)
        wanted = tuple(dict.fromkeys(spec.methods + (args.method_a,) + (() if args.other else (args.method_b,))))
        if set(wanted) != set(spec.methods):
            spec = GridSpec(**{**spec.__dict__, "methods": wanted})
        result = _run_or_resume(spec, args)
    other = read_checkpoint(args.other) if args.other else None
    diff = diff_grids(result, args.method_a, args.method_b, other)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = out / "diff.csv", out / "diff.svg"
    write_diff_csv(result, args.method_a, args.method_b, diff, csv_path, other)
    render_diff_svg(diff, result.spec, args.method_a, args.method_b, svg_path,
                    overlay_threshold=not args.no_overlay)
    summary = {"method_a": args.method_a, "method_b": args.method_b, "mean_difference": float(diff.mean()),
               "outputs": [str(csv_path), str(svg_path)]}
    print(json.dumps(summary, sort_keys=True) if args.json else
          f"mean success({args.method_a}) - success({args.method_b}) = {diff.mean():+.4f}; "
          f"wrote {csv_path}, {svg_path}")
    return EXIT_OK


def _cmd_curve(args) -> int:
    if args.config:
        spec = load_config(args.config)
        if not isinstance(spec, CurveSpec):
            raise UsageError(f"{args.config} describes a grid, not a curve")
        changes = {k: v for k, v in (("master_seed", args.seed), ("methods", args.methods),
                                     ("sampler", args.sampler)) if v is not None}
        if changes:
            spec = CurveSpec(**{**spec.__dict__, **changes})
    else:
        if args.n is None or args.p is None or args.r is None:
            raise UsageError("curve needs --config or all of --n, --p and --r")
        try:
            r_grid = tuple(float(x) for x in args.r.split(",") if x.strip())
        except ValueError as exc:
            raise UsageError(f"bad --r list: {exc}") from exc
        spec = CurveSpec(args.n, args.p, args.sigma, r_grid, args.reps,
                         args.methods or ("spectral_lloyd", "spectral"),
                         args.seed or 0, args.sampler or "gram")
    started = utc_now()
    points = run_curve(spec, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "curve.csv"
    write_curve_csv(points, spec, path)
    manifest = RunManifest.for_outputs(spec, started, [path])
    (out / "curve_manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    if args.json:
        print(json.dumps({"output": str(path), "points": [p.__dict__ for p in points]}, sort_keys=True))
    else:
        for p in points:
            lo, hi = p.ci
            print(f"r={p.r:<6g} {p.method:<20} miscls={p.mean_miscls_frac:.4g} "
                  f"[{lo:.3g}, {hi:.3g}]  lower curve={p.lower_bound_curve:.3g}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    failed = [name for name, ok, _ in results if not ok]
    if args.json:
        print(json.dumps({"passed": not failed,
                          "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in results]}))
    else:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return EXIT_OK if not failed else EXIT_RUNTIME


COMMANDS = {"generate": _cmd_generate, "estimate": _cmd_estimate, "phase-grid": _cmd_phase_grid,
            "compare": _cmd_compare, "curve": _cmd_curve, "selftest": _cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"sharpgmm {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 2
        print(f"sharpgmm {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
