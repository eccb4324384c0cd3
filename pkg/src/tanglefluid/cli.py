"""Command-line entry point: ``tanglefluid {simulate,fluid,sweep,decay}``.

Each run reads a key-value config (see :mod:`tanglefluid.config`), applies
flag overrides, writes CSVs plus ``manifest.json`` into the output
directory and exits with

    0  success
    2  bad config, unusable output directory or module error
    3  an in-run check failed (summary on stderr and in the manifest)

Sweep replicas fan out to ``TANGLEFLUID_WORKERS`` processes (default 1).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import io
from .analysis import decay_check, lambda_sweep
from .config import MODES, ConfigError, RunConfig, parse_config, to_text
from .coupling import CouplingError, sample_in_F
from .fluid_dde import solve, verify_lemma1
from .rng import make_rng, replica_seed
from .tangle_core import ModelParams, run as run_process, trace_violations

log = logging.getLogger("tanglefluid")

WORKERS_ENV = "TANGLEFLUID_WORKERS"
SLOPE_BAND = (-0.75, -0.30)


class RunFailure(RuntimeError):
    pass


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring %s=%r", WORKERS_ENV, raw)
        return 1


def _check(checks: dict, name: str, passed: bool, **detail) -> None:
    checks[name] = {"passed": bool(passed), **detail}


def _simulate(cfg: RunConfig, out: Path, checks: dict) -> list[str]:
    init = cfg.dde_init()
    lam = cfg.lambdas[0]
    params = ModelParams(lam, cfg.h)
    seed = replica_seed(cfg.base_seed, lam, 0)
    rng = make_rng(seed)
    try:
        cpl = sample_in_F(init, lam, rng, max_tries=cfg.max_tries)
    except CouplingError as err:
        io.write_coupling(out / "coupling.csv", [(lam, None, err.tries, False, None)])
        _check(checks, "coupling", False, error=str(err))
        return ["coupling.csv"]
    io.write_coupling(out / "coupling.csv", [io.coupling_row(cpl)])
    n_end = math.ceil(lam * cfg.horizon - 1e-9)
    trace = run_process(params, cpl.discrete_init(), max(0, n_end - params.m), rng)
    io.write_trace(out / "trace.csv", trace)
    bad = trace_violations(trace, cpl.discrete_init())
    _check(checks, "trace_invariants", not bad, violations=bad)
    _check(checks, "coupling", True, tries=cpl.tries, seed=seed)
    return ["coupling.csv", "trace.csv"]


def _fluid(cfg: RunConfig, out: Path, checks: dict) -> list[str]:
    sol = solve(cfg.dde_init(), cfg.horizon, cfg.step)
    io.write_fluid(out / "fluid.csv", sol)
    if sol.T >= 3 * cfg.h * (1 - 1e-12):
        rep = verify_lemma1(sol, tol=1e-6, tol_quad=1e-4)
        _check(checks, "lemma1", rep.ok, residuals={str(k): v for k, v in rep.residuals.items()})
    return ["fluid.csv"]


def _sweep(cfg: RunConfig, out: Path, checks: dict) -> list[str]:
    workers = _workers()
    kwargs = dict(dt=cfg.step, max_tries=cfg.max_tries)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            report = lambda_sweep(
                cfg.dde_init(), cfg.lambdas, cfg.horizon, cfg.replicas, cfg.base_seed,
                mapper=lambda f, xs: pool.map(f, xs, chunksize=4), **kwargs,
            )
    else:
        report = lambda_sweep(
            cfg.dde_init(), cfg.lambdas, cfg.horizon, cfg.replicas, cfg.base_seed, **kwargs
        )
    io.write_sweep(out / "sweep.csv", report)
    io.write_summary(out / "summary.csv", report)
    skipped = sum(s.n_skipped for s in report.summary)
    _check(checks, "no_skipped_replicas", skipped == 0, skipped=skipped)
    if len(cfg.lambdas) >= 2:
        _check(checks, "medians_strictly_decreasing", report.strictly_decreasing)
        lo, hi = SLOPE_BAND
        ok = report.slope is not None and lo <= report.slope <= hi
        _check(checks, "loglog_slope_in_band", ok, slope=report.slope, band=list(SLOPE_BAND))
    return ["sweep.csv", "summary.csv"]


def _decay(cfg: RunConfig, out: Path, checks: dict) -> list[str]:
    init = cfg.dde_init()
    sol = solve(init, cfg.horizon, cfg.step)
    rep = decay_check(init, sol, cfg.horizon)
    io.write_decay(out / "decay.csv", rep)
    c = rep.consts
    _check(checks, "decay_bound", rep.bound_ok, worst_margin=rep.worst_margin, tol=rep.tol)
    _check(checks, "decay_rate", rep.rate_ok, fitted_rate=rep.fitted_rate, mu=c.mu)
    _check(checks, "delay_identity", rep.delay_identity_residual <= 1e-12,
           residual=rep.delay_identity_residual)
    return ["decay.csv"]


HANDLERS = {"simulate": _simulate, "fluid": _fluid, "sweep": _sweep, "decay": _decay}


def prepare_out(path: Path, force: bool) -> None:
    if path.exists():
        if not path.is_dir():
            raise RunFailure(f"output path {path} exists and is not a directory")
        if any(path.iterdir()) and not force:
            raise RunFailure(f"output directory {path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


def run(cfg: RunConfig, out: Path, force: bool = False) -> int:
    """Execute ``cfg`` and write artifacts to ``out``; returns the exit status."""
    prepare_out(out, force)
    if cfg.a_h < cfg.h / 100:
        log.warning("a_h=%g is below h/100; convergence constants degrade", cfg.a_h)
    start = time.perf_counter()
    checks: dict = {}
    outputs = HANDLERS[cfg.mode](cfg, out, checks)
    failed = sorted(k for k, v in checks.items() if not v["passed"])
    manifest = {
        "tool": "tanglefluid",
        "version": __version__,
        "mode": cfg.mode,
        "base_seed": cfg.base_seed,
        "config": cfg.to_dict(),
        "config_text": to_text(cfg),
        "workers": _workers() if cfg.mode == "sweep" else 1,
        "outputs": outputs,
        "checks": checks,
        "status": "failed" if failed else "ok",
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if failed:
        summary = {"status": "failed", "failed_checks": failed,
                   "details": {k: checks[k] for k in failed}}
        print(json.dumps(summary, sort_keys=True), file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tanglefluid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("config", nargs="?", type=Path, help="key = value config file")
        s.add_argument("--lambda", dest="lam", help="arrival rate(s), comma-separated")
        s.add_argument("--h")
        s.add_argument("--T")
        s.add_argument("--dt")
        s.add_argument("--replicas")
        s.add_argument("--seed", dest="base_seed")
        s.add_argument("--out", type=Path)
        s.add_argument("--force", action="store_true", help="overwrite a non-empty output dir")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as err:
            print(f"error: cannot read config: {err}", file=sys.stderr)
            return 2
    overrides = {
        "lambda": args.lam, "h": args.h, "T": args.T, "dt": args.dt,
        "replicas": args.replicas, "base_seed": args.base_seed,
    }
    if args.out is not None:
        overrides["out"] = str(args.out)
    try:
        cfg = parse_config(text, overrides=overrides, mode=args.mode)
    except ConfigError as err:
        for key, msg in err.errors:
            print(f"config error [{key}]: {msg}", file=sys.stderr)
        return 2
    out = Path(cfg.out) if cfg.out else Path("runs") / cfg.mode
    try:
        return run(cfg, out, force=args.force)
    except (RunFailure, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
