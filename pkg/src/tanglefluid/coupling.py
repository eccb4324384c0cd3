"""Bridge between a fluid initial condition and the discrete process.

A :class:`DdeInit` fixes the fluid trajectory; for a given arrival rate it
also yields seed data (xi, v) for the tangle process whose rescaled tip count
tracks the fluid b(t) on [h, 2h] to within 4 sqrt(h/lam) + 1/lam. Seeds are
produced by independent per-slot draws with the right means, retried until
they land inside that tolerance band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .fluid_dde import DdeInit, bootstrap_b
from .tangle_core import DiscreteInit, ModelParams, Trace


class CouplingError(RuntimeError):
    """Rejection sampling ran out of attempts."""


@dataclass(frozen=True)
class CouplingTargets:
    lam: float
    xi_alpha: int
    x: np.ndarray

    @property
    def m(self) -> int:
        return len(self.x)


def xi_alpha(init: DdeInit, lam: float) -> int:
    return max(math.floor(lam * init.a_h), 1)


def slot_means(init: DdeInit, lam: float) -> np.ndarray:
    """x_j = lam * integral of u over [(j-1)/lam, j/lam], j = 1..m.

    Computed in exact rational arithmetic on the step-unit axis, where
    piece i of u spans [i m/K, (i+1) m/K], then rounded once to float.
    """
    m = ModelParams(lam, init.h).m
    K = init.K
    vals = [Fraction(v) for v in init.u_grid]
    width = Fraction(m, K)
    prefix = [Fraction(0)]
    for v in vals:
        prefix.append(prefix[-1] + v * width)

    def F(s: int) -> Fraction:
        # integral of u (step units) over [0, s]
        i = min(int(Fraction(s) / width), K - 1)
        return prefix[i] + vals[i] * (s - i * width)

    Fs = [F(s) for s in range(m + 1)]
    x = np.array([float(Fs[j] - Fs[j - 1]) for j in range(1, m + 1)])
    return np.clip(x, 0.0, 2.0)


@lru_cache(maxsize=64)
def targets(init: DdeInit, lam: float) -> CouplingTargets:
    x = slot_means(init, lam)
    x.setflags(write=False)
    return CouplingTargets(lam=lam, xi_alpha=xi_alpha(init, lam), x=x)


def sample_v(tg: CouplingTargets, rng: np.random.Generator) -> np.ndarray:
    """Independent v_j on {floor x_j, ceil x_j} with E[v_j] = x_j.

    Uses one uniform per slot; P(v_j = ceil x_j) = frac(x_j).
    """
    x = tg.x
    lo = np.floor(x)
    frac = x - lo
    r = rng.random(len(x))
    return (lo + (r < frac)).astype(np.int64)


def init_deviation(v, init: DdeInit, lam: float, xi: int | None = None) -> np.ndarray:
    """B_v(t_n) - b(t_n) for n = m..2m, from the two closed forms."""
    m = ModelParams(lam, init.h).m
    v = np.asarray(v, dtype=np.int64)
    if len(v) != m:
        raise ValueError(f"v has length {len(v)}, expected m = {m}")
    xi = xi_alpha(init, lam) if xi is None else xi
    j = np.arange(m + 1)
    # sum_{i > j} v_i, i.e. tail sums of v
    tails = np.concatenate((np.cumsum(v[::-1])[::-1], [0]))
    L = xi + j + tails
    t = np.minimum((m + j) / lam, 2 * init.h)
    return L / lam - bootstrap_b(init, np.maximum(t, init.h))


def f_tolerance(h: float, lam: float) -> float:
    return 4.0 * math.sqrt(h / lam) + 1.0 / lam


def membership_F(v, init: DdeInit, lam: float) -> bool:
    dev = init_deviation(v, init, lam)
    return bool(np.max(np.abs(dev)) <= f_tolerance(init.h, lam))


@dataclass(frozen=True)
class CouplingResult:
    lam: float
    xi_alpha: int
    v: np.ndarray
    tries: int
    sup_dev_init: float

    def discrete_init(self) -> DiscreteInit:
        return DiscreteInit(self.xi_alpha, tuple(int(x) for x in self.v))


def sample_in_F(
    init: DdeInit,
    lam: float,
    rng: np.random.Generator,
    max_tries: int = 64,
    tg: CouplingTargets | None = None,
) -> CouplingResult:
    """Draw v from the product law until the band condition holds.

    Raises :class:`CouplingError` (with ``tries`` attribute) after
    ``max_tries`` rejections.
    """
    if max_tries < 1:
        raise ValueError("max_tries must be >= 1")
    tg = targets(init, lam) if tg is None else tg
    bound = f_tolerance(init.h, lam)
    for attempt in range(1, max_tries + 1):
        v = sample_v(tg, rng)
        dev = float(np.max(np.abs(init_deviation(v, init, lam, tg.xi_alpha))))
        if dev <= bound:
            return CouplingResult(lam, tg.xi_alpha, v, attempt, dev)
    err = CouplingError(f"no member of F found in {max_tries} tries (lambda={lam})")
    err.tries = max_tries
    raise err


@dataclass(frozen=True)
class RescaledTrace:
    """A(t_n) = X_n / lam and B(t_n) = L_n / lam at t_n = n / lam."""

    lam: float
    start_n: int
    A: np.ndarray
    B: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.start_n, self.start_n + len(self.A)) / self.lam

    def index(self, t) -> np.ndarray:
        # n(t) = floor(lam t); the small offset keeps t = n/lam on node n
        n = np.floor(np.asarray(t, dtype=float) * self.lam + 1e-9).astype(np.int64)
        i = n - self.start_n
        if np.any(i < 0) or np.any(i >= len(self.A)):
            raise ValueError("requested time outside the rescaled trace")
        return i

    def A_at(self, t):
        return self.A[self.index(t)]

    def B_at(self, t):
        return self.B[self.index(t)]


def rescale(trace: Trace, lam: float | None = None, window: tuple[float, float] | None = None) -> RescaledTrace:
    lam = trace.params.lam if lam is None else lam
    rt = RescaledTrace(lam, trace.start_n, trace.X / lam, trace.L / lam)
    if window is not None:
        lo, hi = window
        rt.index(np.array([lo, hi]))
    return rt
