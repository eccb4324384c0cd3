"""CSV writers for traces, fluid solutions, coupling and sweep results.

Floats are written with ``repr`` (shortest round-trip form), so files are
full precision and byte-stable for identical inputs.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from .analysis import DecayReport, SweepReport
from .coupling import CouplingResult
from .fluid_dde import FluidSolution
from .tangle_core import Trace

TRACE_HEADER = ("n", "t", "X", "W", "L", "U")
FLUID_HEADER = ("t", "a", "b", "da")
COUPLING_HEADER = ("lambda", "xi_alpha", "tries", "accepted", "sup_dev_init")
SWEEP_HEADER = ("lambda", "replica", "seed", "tries", "sup_dev_A", "sup_dev_B")
SUMMARY_HEADER = ("lambda", "median_A", "q75_A", "n_ok", "n_skipped")
DECAY_HEADER = ("t", "abs_a_minus_h", "bound")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_trace(path: Path, trace: Trace) -> None:
    lam = trace.params.lam
    write_rows(path, TRACE_HEADER, ((n, n / lam, X, W, L, U) for n, X, W, L, U in trace.rows()))


def write_fluid(path: Path, sol: FluidSolution) -> None:
    rows = zip(sol.t.tolist(), sol.a_vals.tolist(), sol.b_vals.tolist(), sol.deriv_a.tolist())
    write_rows(path, FLUID_HEADER, rows)


def write_coupling(path: Path, results: Sequence[tuple[float, int, int, bool, float | None]]) -> None:
    write_rows(path, COUPLING_HEADER, results)


def coupling_row(res: CouplingResult) -> tuple:
    return (res.lam, res.xi_alpha, res.tries, True, res.sup_dev_init)


def write_sweep(path: Path, report: SweepReport) -> None:
    rows = ((r.lam, r.replica, r.seed, r.tries, r.sup_dev_A, r.sup_dev_B) for r in report.records)
    write_rows(path, SWEEP_HEADER, rows)


def write_summary(path: Path, report: SweepReport) -> None:
    rows = ((s.lam, s.median_A, s.q75_A, s.n_ok, s.n_skipped) for s in report.summary)
    write_rows(path, SUMMARY_HEADER, rows)


def write_decay(path: Path, rep: DecayReport) -> None:
    write_rows(path, DECAY_HEADER, zip(rep.t.tolist(), rep.abs_a_minus_h.tolist(), rep.bound.tolist()))


def read_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
