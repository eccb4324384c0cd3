"""Stochastic-versus-fluid comparisons and fluid relaxation checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .coupling import CouplingError, CouplingTargets, RescaledTrace, rescale, sample_in_F, targets
from .fluid_dde import DdeInit, FluidSolution, solve
from .rng import make_rng, replica_seed
from .tangle_core import ModelParams, run

_GRID_EPS = 1e-9


def evaluation_times(rt: RescaledTrace, sol: FluidSolution, window: tuple[float, float]) -> np.ndarray:
    """Union of arrival times and solver nodes inside ``window``."""
    lo, hi = window
    lam = rt.lam
    n_lo = math.ceil(lam * lo - _GRID_EPS)
    n_hi = math.floor(lam * hi + _GRID_EPS)
    arrivals = np.arange(n_lo, n_hi + 1) / lam
    slack = _GRID_EPS * max(1.0, hi)
    nodes = sol.t[(sol.t >= lo - slack) & (sol.t <= hi + slack)]
    ts = np.union1d(arrivals, np.clip(nodes, lo, hi))
    return ts


def sup_deviation(
    rt: RescaledTrace,
    sol: FluidSolution,
    window: tuple[float, float],
    component: str = "A",
) -> float:
    """Max |A - a| (or |B - b|) over the union grid of ``window``.

    The trace is held constant between arrivals; the fluid side uses its
    dense interpolant. Between grid points the gap can grow by at most
    twice the grid spacing, since A is constant there and |a'| <= 1.
    """
    lo, hi = window
    if hi < lo:
        raise ValueError("empty window")
    if lo < sol.h - _GRID_EPS or hi > sol.T + _GRID_EPS:
        raise ValueError(f"window {window} not covered by fluid solution")
    ts = evaluation_times(rt, sol, window)
    if component == "A":
        diff = rt.A_at(ts) - sol.a_at(ts)
    elif component == "B":
        diff = rt.B_at(ts) - sol.b_at(ts)
    else:
        raise ValueError(f"component must be 'A' or 'B', got {component!r}")
    return float(np.max(np.abs(diff)))


@dataclass(frozen=True)
class DeviationRecord:
    lam: float
    replica: int
    seed: int
    tries: int
    sup_dev_A: float | None
    sup_dev_B: float | None

    @property
    def ok(self) -> bool:
        return self.sup_dev_A is not None


@dataclass(frozen=True)
class SweepSummary:
    lam: float
    median_A: float
    q75_A: float
    n_ok: int
    n_skipped: int


@dataclass
class SweepReport:
    records: list[DeviationRecord]
    summary: list[SweepSummary]
    slope: float | None = None
    notes: list[str] = field(default_factory=list)

    def medians(self) -> list[tuple[float, float]]:
        return [(s.lam, s.median_A) for s in self.summary if s.n_ok > 0]

    @property
    def strictly_decreasing(self) -> bool:
        med = [m for _, m in self.medians()]
        return all(b < a for a, b in zip(med, med[1:]))


def fit_slope(points: Iterable[tuple[float, float]]) -> float:
    """OLS slope of log(median) against log(lambda)."""
    pts = list(points)
    lams = np.array([p[0] for p in pts], dtype=float)
    meds = np.array([p[1] for p in pts], dtype=float)
    if len(np.unique(lams)) < 2:
        raise ValueError("need at least two distinct lambda values")
    if np.any(meds <= 0) or np.any(lams <= 0):
        raise ValueError("medians and lambdas must be positive to fit a log-log slope")
    x, y = np.log(lams), np.log(meds)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def run_replica(
    init: DdeInit,
    lam: float,
    T: float,
    replica: int,
    seed: int,
    sol: FluidSolution,
    max_tries: int = 64,
    tg: CouplingTargets | None = None,
) -> DeviationRecord:
    """One coupled realisation: seed in F, simulate to ceil(lam T), compare."""
    params = ModelParams(lam, init.h)
    rng = make_rng(seed)
    try:
        cpl = sample_in_F(init, lam, rng, max_tries=max_tries, tg=tg)
    except CouplingError as err:
        return DeviationRecord(lam, replica, seed, getattr(err, "tries", max_tries), None, None)
    n_end = math.ceil(lam * T - _GRID_EPS)
    trace = run(params, cpl.discrete_init(), n_end - params.m, rng)
    rt = rescale(trace)
    h = init.h
    dev_a = sup_deviation(rt, sol, (h, T), "A")
    dev_b = sup_deviation(rt, sol, (2 * h, T), "B")
    return DeviationRecord(lam, replica, seed, cpl.tries, dev_a, dev_b)


def _replica_task(args: tuple) -> DeviationRecord:
    return run_replica(*args)


def summarize(records: Sequence[DeviationRecord], lambdas: Sequence[float]) -> list[SweepSummary]:
    out = []
    for lam in lambdas:
        devs = np.array([r.sup_dev_A for r in records if r.lam == lam and r.ok])
        n_skip = sum(1 for r in records if r.lam == lam and not r.ok)
        if len(devs):
            med, q75 = float(np.median(devs)), float(np.percentile(devs, 75))
        else:
            med = q75 = math.nan
        out.append(SweepSummary(lam, med, q75, len(devs), n_skip))
    return out


def lambda_sweep(
    init: DdeInit,
    lambdas: Sequence[float],
    T: float,
    replicas: int,
    base_seed: int,
    dt: float | None = None,
    max_tries: int = 64,
    mapper: Callable = map,
    sol: FluidSolution | None = None,
) -> SweepReport:
    """Deviation statistics across arrival rates against one fluid solution.

    ``mapper`` may be an executor's ``map``; results are re-ordered by
    (lambda, replica) so the report does not depend on completion order.
    """
    h = init.h
    if T < 2 * h:
        raise ValueError("T must be >= 2h")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    for lam in lambdas:
        ModelParams(lam, h)
    sol = solve(init, T, dt) if sol is None else sol
    tasks = []
    for lam in lambdas:
        tg = targets(init, lam)
        for r in range(replicas):
            tasks.append((init, lam, T, r, replica_seed(base_seed, lam, r), sol, max_tries, tg))
    records = list(mapper(_replica_task, tasks))
    order = {lam: i for i, lam in enumerate(lambdas)}
    records.sort(key=lambda rec: (order[rec.lam], rec.replica))

    report = SweepReport(records=records, summary=summarize(records, lambdas))
    meds = report.medians()
    if len(meds) >= 2:
        try:
            report.slope = fit_slope(meds)
        except ValueError as err:
            report.notes.append(str(err))
    return report


@dataclass(frozen=True)
class Theorem2Constants:
    C1: float
    kappa: float
    mu: float


def kappa(u: float, h: float) -> float:
    return max(0.75, math.exp(-h / (3.0 * (u + h))))


def theorem2_constants(init: DdeInit, sol: FluidSolution) -> Theorem2Constants:
    """Relaxation constants from the bootstrap-interval samples of a."""
    h = init.h
    if sol.T < 2 * h * (1 - 1e-12):
        raise ValueError("solution must cover [h, 2h]")
    C1 = float(np.max(np.abs(sol.a_vals[: sol.K + 1] - h)))
    k = kappa(C1 / 2.0, h)
    return Theorem2Constants(C1=C1, kappa=k, mu=-math.log(k) / (2.0 * h))


@dataclass
class DecayReport:
    consts: Theorem2Constants
    t: np.ndarray
    abs_a_minus_h: np.ndarray
    bound: np.ndarray
    worst_margin: float
    delay_identity_residual: float
    fitted_rate: float | None
    tol: float
    h: float

    @property
    def bound_ok(self) -> bool:
        return self.worst_margin <= self.tol

    @property
    def rate_ok(self) -> bool:
        if self.fitted_rate is None:
            return True
        return self.fitted_rate >= self.consts.mu - 0.01 / self.h

    @property
    def ok(self) -> bool:
        return self.bound_ok and self.rate_ok


def decay_check(init: DdeInit, sol: FluidSolution, T: float | None = None, tol: float = 1e-9) -> DecayReport:
    """Pointwise exponential envelope on [4h, T - h] and fitted decay rate on [4h, T]."""
    h = init.h
    T = sol.T if T is None else T
    if T < 5 * h * (1 - 1e-12) or sol.T < T * (1 - 1e-12):
        raise ValueError("need T >= 5h and a solution covering [4h, T]")
    consts = theorem2_constants(init, sol)
    t, a, b, K = sol.t, sol.a_vals, sol.b_vals, sol.K
    slack = 1e-9 * T
    sel = (t >= 4 * h - slack) & (t <= T - h + slack)
    idx = np.nonzero(sel)[0]
    resid = np.abs(a[idx] - h)
    bound = consts.C1 * consts.kappa ** -1.5 * np.exp(-consts.mu * t[idx])
    worst = float(np.max(resid - bound)) if len(idx) else -math.inf
    ident = float(np.max(np.abs(np.abs(b[idx + K] - 2 * h) - resid))) if len(idx) else 0.0

    fit_sel = (t >= 4 * h - slack) & (t <= T + slack)
    r_fit = np.abs(a[fit_sel] - h)
    keep = r_fit > 1e-12
    rate = None
    if np.count_nonzero(keep) >= 2:
        tt = t[fit_sel][keep]
        if np.ptp(tt) > 0:
            slope = np.polyfit(tt, np.log(r_fit[keep]), 1)[0]
            rate = float(-slope)
    return DecayReport(consts, t[idx], resid, bound, worst, ident, rate, tol, h)
