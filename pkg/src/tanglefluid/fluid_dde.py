"""Method-of-steps solver for the fluid delay system

    a'(t) = 1 - 2 a(t) / b(t),    b(t) = a(t - h) + h   (t >= 2h)

seeded on [h, 2h] by a(h) and a piecewise-constant pending profile u on
[0, h]. On the bootstrap interval b is known in closed form; on each later
interval [jh, (j+1)h] it is read off the already computed a via cubic
Hermite interpolation, and a is advanced with fixed-step RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_REL_EPS = 1e-12


@dataclass(frozen=True)
class DdeInit:
    """Initial condition: a(h) and u on [0, h] as K equal-width constant pieces."""

    a_h: float
    u_grid: tuple[float, ...]
    h: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "u_grid", tuple(float(v) for v in self.u_grid))
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h!r}")
        if not (self.a_h > 0 and math.isfinite(self.a_h)):
            raise ValueError(f"a_h must be positive, got {self.a_h!r}")
        if len(self.u_grid) < 1:
            raise ValueError("u_grid needs at least one value")
        for i, v in enumerate(self.u_grid):
            if not 0.0 <= v <= 2.0:
                raise ValueError(f"u_grid[{i}] = {v!r} outside [0, 2]")

    @property
    def K(self) -> int:
        return len(self.u_grid)

    @property
    def breakpoints(self) -> np.ndarray:
        """Piece boundaries 0 = s_0 < ... < s_K = h."""
        return self.h * np.arange(self.K + 1) / self.K

    @property
    def u_total(self) -> float:
        return self.h * math.fsum(self.u_grid) / self.K

    def u_cumulative(self, s):
        """Exact integral of u over [0, s] for s in [0, h]."""
        cum = np.concatenate(([0.0], np.cumsum(self.u_grid) * (self.h / self.K)))
        cum[-1] = self.u_total
        return np.interp(s, self.breakpoints, cum)


def b_initial(init: DdeInit) -> float:
    return init.a_h + init.u_total


def _check_bootstrap_range(init: DdeInit, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    h = init.h
    slack = _REL_EPS * h
    if np.any(t < h - slack) or np.any(t > 2 * h + slack):
        raise ValueError(f"t must lie in [h, 2h] = [{h}, {2 * h}]")
    return np.clip(t, h, 2 * h)


def bootstrap_b(init: DdeInit, t):
    """b(t) on [h, 2h]: a(h) + (t - h) + integral of u over [t - h, h]."""
    tt = _check_bootstrap_range(init, t)
    h = init.h
    out = init.a_h + (tt - h) + (init.u_total - init.u_cumulative(tt - h))
    return float(out) if out.ndim == 0 else out


def _b_kinks(init: DdeInit) -> np.ndarray:
    return init.h + init.breakpoints


@dataclass(frozen=True)
class FluidSolution:
    """Samples of (a, b, a') at t_k = h + k h / K, k = 0..N."""

    h: float
    K: int
    a_vals: np.ndarray
    b_vals: np.ndarray
    deriv_a: np.ndarray
    t: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        k = np.arange(len(self.a_vals))
        object.__setattr__(self, "t", self.h + self.h * k / self.K)

    @property
    def dt(self) -> float:
        return self.h / self.K

    @property
    def t0(self) -> float:
        return self.h

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def a_at(self, t):
        """Cubic Hermite interpolant of a built from node values and slopes."""
        tt = np.asarray(t, dtype=float)
        slack = _REL_EPS * self.T
        if np.any(tt < self.h - slack) or np.any(tt > self.T + slack):
            raise ValueError(f"t outside solution range [{self.h}, {self.T}]")
        x = (tt - self.h) / self.dt
        i = np.clip(np.floor(x).astype(np.int64), 0, len(self.a_vals) - 2)
        s = np.clip(x - i, 0.0, 1.0)
        a0, a1 = self.a_vals[i], self.a_vals[i + 1]
        d0, d1 = self.deriv_a[i] * self.dt, self.deriv_a[i + 1] * self.dt
        s2, s3 = s * s, s * s * s
        out = (
            (2 * s3 - 3 * s2 + 1) * a0
            + (s3 - 2 * s2 + s) * d0
            + (-2 * s3 + 3 * s2) * a1
            + (s3 - s2) * d1
        )
        return float(out) if out.ndim == 0 else out

    def b_at(self, t):
        """b via the delay identity for t >= 2h, linear between nodes before."""
        tt = np.asarray(t, dtype=float)
        slack = _REL_EPS * self.T
        if np.any(tt < self.h - slack) or np.any(tt > self.T + slack):
            raise ValueError(f"t outside solution range [{self.h}, {self.T}]")
        late = tt >= 2 * self.h
        out = np.empty_like(tt)
        if np.any(late):
            out[late] = self.a_at(tt[late] - self.h) + self.h
        if np.any(~late):
            nb = self.K + 1
            out[~late] = np.interp(tt[~late], self.t[:nb], self.b_vals[:nb])
        return float(out) if out.ndim == 0 else out


def steps_per_delay(h: float, dt: float) -> int:
    """Number of grid steps per delay interval; ``dt`` must divide ``h``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    ratio = h / dt
    K = round(ratio)
    if K < 1 or abs(ratio - K) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"dt={dt!r} does not divide h={h!r}")
    return K


def solve(init: DdeInit, T: float, dt: float | None = None) -> FluidSolution:
    """Integrate the fluid system on [h, T] with fixed step ``dt`` (default h/1000).

    The grid is extended to the first node at or beyond ``T``.
    """
    h = init.h
    K = steps_per_delay(h, h / 1000 if dt is None else dt)
    if T < 2 * h * (1 - _REL_EPS):
        raise ValueError(f"T={T!r} must be >= 2h = {2 * h!r}")
    N = max(K, math.ceil((T - h) * K / h - 1e-9))
    dt = h / K
    half = 0.5 * dt

    # bootstrap interval: closed-form b at nodes and stage midpoints
    k_boot = np.arange(K + 1)
    b_boot = bootstrap_b(init, h + h * k_boot / K)
    b_boot_mid = bootstrap_b(init, h + h * (k_boot[:-1] + 0.5) / K)

    a = [0.0] * (N + 1)
    b = [0.0] * (N + 1)
    da = [0.0] * (N + 1)
    a[0] = init.a_h
    b[0] = float(b_boot[0])
    da[0] = 1.0 - 2.0 * a[0] / b[0]
    b_boot_l = b_boot.tolist()
    b_mid_l = b_boot_mid.tolist()

    for k in range(N):
        a0 = a[k]
        if k < K:
            b0, bm, b1 = b_boot_l[k], b_mid_l[k], b_boot_l[k + 1]
            if k + 1 == K:
                b1 = a[0] + h
        else:
            j = k - K
            p0, p1 = a[j], a[j + 1]
            bm = 0.5 * (p0 + p1) + dt * (da[j] - da[j + 1]) / 8.0 + h
            b0, b1 = p0 + h, p1 + h
        k1 = 1.0 - 2.0 * a0 / b0
        k2 = 1.0 - 2.0 * (a0 + half * k1) / bm
        k3 = 1.0 - 2.0 * (a0 + half * k2) / bm
        k4 = 1.0 - 2.0 * (a0 + dt * k3) / b1
        a1 = a0 + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        a[k + 1] = a1
        b[k + 1] = b1
        da[k + 1] = 1.0 - 2.0 * a1 / b1

    return FluidSolution(
        h=h,
        K=K,
        a_vals=np.asarray(a),
        b_vals=np.asarray(b),
        deriv_a=np.asarray(da),
    )


def _simpson_cells(f, grid: np.ndarray) -> np.ndarray:
    """Per-cell Simpson integrals of a callable over consecutive grid points."""
    left, right = grid[:-1], grid[1:]
    mid = 0.5 * (left + right)
    return (right - left) / 6.0 * (f(left) + 4.0 * f(mid) + f(right))


def integrating_factor(sol: FluidSolution, x: float, y: float) -> float:
    """exp(2 * integral of 1/b over [x, y]), Simpson on the solution grid."""
    if y < x:
        raise ValueError("need x <= y")
    if x == y:
        return 1.0
    inner = sol.t[(sol.t > x) & (sol.t < y)]
    grid = np.concatenate(([x], inner, [y]))
    b_nodes = sol.b_at(grid)
    b_mids = sol.b_at(0.5 * (grid[:-1] + grid[1:]))
    if np.any(b_nodes <= 0) or np.any(b_mids <= 0):
        raise ValueError(f"b is not positive on [{x}, {y}]")
    cells = np.diff(grid) / 6.0 * (1 / b_nodes[:-1] + 4 / b_mids + 1 / b_nodes[1:])
    return math.exp(2.0 * float(np.sum(cells)))


def bootstrap_a_oracle(init: DdeInit, t, n_fine: int = 4000):
    """a on [h, 2h] from the integrating-factor formula, by quadrature.

    Independent of :func:`solve`: uses the closed-form b directly, splits
    the grid at the kinks of b, and integrates with per-cell Simpson
    (midpoint values of the inner integral come from half-cell Simpson).
    """
    tq = _check_bootstrap_range(init, t)
    h = init.h
    scalar = tq.ndim == 0
    tq = np.atleast_1d(tq)
    grid = np.concatenate((h + h * np.arange(n_fine + 1) / n_fine, _b_kinks(init), tq))
    grid = np.unique(np.clip(grid, h, 2 * h))
    keep = np.concatenate(([True], np.diff(grid) > 1e-14 * h))
    grid = grid[keep]

    def g(s):
        return 2.0 / bootstrap_b(init, s)

    left, right = grid[:-1], grid[1:]
    mid = 0.5 * (left + right)
    quarter = 0.5 * (left + mid)
    width = right - left
    g_l, g_m, g_r, g_q = g(left), g(mid), g(right), g(quarter)
    J = np.concatenate(([0.0], np.cumsum(width / 6.0 * (g_l + 4.0 * g_m + g_r))))
    J_mid = J[:-1] + width / 12.0 * (g_l + 4.0 * g_q + g_m)
    P, P_mid = np.exp(J), np.exp(J_mid)
    IP = np.concatenate(([0.0], np.cumsum(width / 6.0 * (P[:-1] + 4.0 * P_mid + P[1:]))))
    idx = np.searchsorted(grid, tq)
    idx = np.clip(idx, 0, len(grid) - 1)
    # snap to the nearest retained node
    lower = np.clip(idx - 1, 0, len(grid) - 1)
    idx = np.where(np.abs(grid[lower] - tq) < np.abs(grid[idx] - tq), lower, idx)
    out = (init.a_h + IP[idx]) / P[idx]
    return float(out[0]) if scalar else out


@dataclass
class Lemma1Report:
    """Worst residual per property over nodes t >= 2h.

    1: -min(a); 2: max |b - h - a(t-h)|; 3: h - min(b);
    4: max |b - a - integral of 2a/b over [t-h, t]|;
    5: violation of 0 <= b - a <= 2h.
    """

    residuals: dict[int, float]
    tol: float
    tol_quad: float

    @property
    def failures(self) -> list[int]:
        limits = {1: self.tol, 2: self.tol, 3: self.tol, 4: self.tol_quad, 5: self.tol}
        return [p for p, r in sorted(self.residuals.items()) if not r <= limits[p]]

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_lemma1(sol: FluidSolution, tol: float = 1e-6, tol_quad: float = 1e-4) -> Lemma1Report:
    K, h = sol.K, sol.h
    if len(sol.a_vals) < 2 * K + 1:
        raise ValueError("solution must extend to at least 3h to check t >= 2h")
    a, b, t = sol.a_vals, sol.b_vals, sol.t
    late = slice(K, None)
    a_late, b_late = a[late], b[late]

    ratio = _simpson_cells(lambda s: 2.0 * sol.a_at(s) / sol.b_at(s), t)
    cum = np.concatenate(([0.0], np.cumsum(ratio)))
    window = cum[K:] - cum[: len(cum) - K]
    gap = b_late - a_late

    residuals = {
        1: float(max(0.0, -a_late.min())),
        2: float(np.max(np.abs(b_late - h - a[: len(a) - K]))),
        3: float(max(0.0, h - b_late.min())),
        4: float(np.max(np.abs(gap - window))),
        5: float(max(0.0, -gap.min(), (gap - 2 * h).max())),
    }
    return Lemma1Report(residuals=residuals, tol=tol, tol_quad=tol_quad)
