"""Exact simulation of the tangle tip-count process under random tip growth.

Only counts are tracked: the number of free tips X_n, pending tips W_n and
total tips L_n = W_n + X_n, together with the last m selection counts U.
Transactions arrive at t_n = n / lam and spend h = m / lam in proof of work.
Traces start at n = m; earlier indices carry no information.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Arrival rate ``lam`` and proof-of-work duration ``h``.

    ``lam * h`` must come out as an exact integer (e.g. ``lam=100, h=0.305``
    gives 30.5 and is rejected rather than rounded).
    """

    lam: float
    h: float

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive and finite, got {self.h!r}")
        prod = self.lam * self.h
        if prod != math.floor(prod):
            raise ValueError(f"lambda*h not integer (got {prod!r})")
        if prod < 1:
            raise ValueError(f"lambda*h must be >= 1 (got {prod!r})")

    @property
    def m(self) -> int:
        return int(self.lam * self.h)


@dataclass(frozen=True)
class DiscreteInit:
    """Seed data (xi_m, u_1..u_m) for the discrete process."""

    xi_m: int
    u: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "u", tuple(int(v) for v in self.u))
        if int(self.xi_m) != self.xi_m or self.xi_m < 1:
            raise ValueError(f"xi_m must be an integer >= 1, got {self.xi_m!r}")
        object.__setattr__(self, "xi_m", int(self.xi_m))
        if len(self.u) == 0:
            raise ValueError("u must have length m >= 1")
        bad = [v for v in self.u if v not in (0, 1, 2)]
        if bad:
            raise ValueError(f"u values must lie in {{0,1,2}}, got {bad[0]!r}")

    @property
    def m(self) -> int:
        return len(self.u)


@dataclass(frozen=True)
class TangleState:
    n: int
    X: int
    W: int
    L: int
    ring: tuple[int, ...]

    def check(self) -> None:
        assert self.L == self.W + self.X, "L != W + X"
        assert self.W == sum(self.ring), "W does not match pending ring"


@dataclass
class Trace:
    """Columns of a simulated run, one entry per step starting at ``start_n``."""

    params: ModelParams
    start_n: int
    X: np.ndarray
    W: np.ndarray
    L: np.ndarray
    U: np.ndarray
    n: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.n = np.arange(self.start_n, self.start_n + len(self.X), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def end_n(self) -> int:
        return self.start_n + len(self.X) - 1

    def rows(self) -> Iterator[tuple[int, int, int, int, int]]:
        for i in range(len(self.X)):
            yield (
                int(self.n[i]),
                int(self.X[i]),
                int(self.W[i]),
                int(self.L[i]),
                int(self.U[i]),
            )

    def at(self, n: int) -> tuple[int, int, int, int]:
        """(X_n, W_n, L_n, U_n) for an absolute step index."""
        i = n - self.start_n
        if i < 0 or i >= len(self.X):
            raise IndexError(f"step {n} outside trace [{self.start_n}, {self.end_n}]")
        return int(self.X[i]), int(self.W[i]), int(self.L[i]), int(self.U[i])


def u_distribution(X: int, W: int, exact: bool = False) -> tuple:
    """Conditional law (p0, p1, p2) of the number of free tips picked next.

    Two tips are drawn independently and uniformly among L = X + W; picking
    the same free tip twice counts once. With ``exact=True`` the triple is
    returned as :class:`fractions.Fraction` values.
    """
    if X < 0 or W < 0:
        raise ValueError("counts must be non-negative")
    L = X + W
    if L < 1:
        raise ValueError("degenerate state: no tips (L = 0)")
    L2 = L * L
    if exact:
        return Fraction(W * W, L2), Fraction(2 * W * X + X, L2), Fraction(X * (X - 1), L2)
    return W * W / L2, (2 * W * X + X) / L2, X * (X - 1) / L2


def expected_u(X: int, W: int, exact: bool = False):
    if X < 0 or W < 0:
        raise ValueError("counts must be non-negative")
    L = X + W
    if L < 1:
        raise ValueError("degenerate state: no tips (L = 0)")
    if exact:
        return Fraction(2 * X, L) - Fraction(X, L * L)
    return 2 * X / L - X / (L * L)


def _draw_u(X: int, W: int, r: float) -> int:
    # r in (0, 1]; inverse CDF with ties going to the lower category.
    # Thresholds are ratios of exact integers, so a category of
    # probability zero can never be returned.
    L = X + W
    L2 = L * L
    if r <= W * W / L2:
        return 0
    if r <= (L2 - X * (X - 1)) / L2:
        return 1
    return 2


def init_state(params: ModelParams, init: DiscreteInit) -> TangleState:
    if init.m != params.m:
        raise ValueError(f"u has length {init.m}, expected m = {params.m}")
    W = sum(init.u)
    return TangleState(n=params.m, X=init.xi_m, W=W, L=init.xi_m + W, ring=init.u)


def step(state: TangleState, rng: np.random.Generator) -> tuple[TangleState, int]:
    """Advance one arrival; returns the new state and the sampled U_{n+1}."""
    if state.X < 1 or state.L < 1:
        raise ValueError(f"invalid state at n={state.n}: X={state.X}, L={state.L}")
    state.check()
    U = _draw_u(state.X, state.W, 1.0 - rng.random())
    ring = state.ring[1:] + (U,)
    X = state.X + 1 - U
    W = state.W - state.ring[0] + U
    new = TangleState(n=state.n + 1, X=X, W=W, L=W + X, ring=ring)
    new.check()
    return new, U


def run(
    params: ModelParams,
    init: DiscreteInit,
    n_steps: int,
    rng: np.random.Generator,
) -> Trace:
    """Simulate ``n_steps`` arrivals after n = m.

    Consumes exactly one uniform per step from ``rng``, in the same order as
    repeated calls to :func:`step`, so both paths give identical traces.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    state = init_state(params, init)
    size = n_steps + 1
    Xs = np.empty(size, dtype=np.int64)
    Ws = np.empty(size, dtype=np.int64)
    Us = np.empty(size, dtype=np.int64)
    Xs[0], Ws[0], Us[0] = state.X, state.W, init.u[-1]

    draws = (1.0 - rng.random(n_steps)).tolist() if n_steps else []
    ring = deque(init.u)
    X, W = state.X, state.W
    for i, r in enumerate(draws, start=1):
        L2 = (X + W) * (X + W)
        if r <= W * W / L2:
            U = 0
        elif r <= (L2 - X * (X - 1)) / L2:
            U = 1
        else:
            U = 2
        W += U - ring.popleft()
        ring.append(U)
        X += 1 - U
        Xs[i] = X
        Ws[i] = W
        Us[i] = U
    return Trace(params=params, start_n=params.m, X=Xs, W=Ws, L=Xs + Ws, U=Us)


def l_from_init(j: int, init: DiscreteInit) -> int:
    """L_{m+j} for 0 <= j <= m; fixed by the seed data alone."""
    m = init.m
    if not 0 <= j <= m:
        raise IndexError(f"j must lie in [0, {m}], got {j}")
    return init.xi_m + j + sum(init.u[j:])


def forced_run(params: ModelParams, init: DiscreteInit, us: Sequence[int]) -> Trace:
    """Replay the recursion with prescribed selection counts (no sampling).

    Used to check identities that hold for any realisation; ``us`` must keep
    X >= 1 along the way.
    """
    state = init_state(params, init)
    Xs, Ws, Us = [state.X], [state.W], [init.u[-1]]
    ring = deque(init.u)
    X, W = state.X, state.W
    for U in us:
        if U not in (0, 1, 2):
            raise ValueError(f"U must be in {{0,1,2}}, got {U!r}")
        if U > X:
            raise ValueError(f"cannot select {U} free tips with X={X}")
        W += U - ring.popleft()
        ring.append(U)
        X += 1 - U
        Xs.append(X)
        Ws.append(W)
        Us.append(U)
    Xa, Wa = np.asarray(Xs, dtype=np.int64), np.asarray(Ws, dtype=np.int64)
    return Trace(params, params.m, Xa, Wa, Xa + Wa, np.asarray(Us, dtype=np.int64))


def trace_violations(trace: Trace, init: DiscreteInit) -> list[str]:
    """Count-identity violations on a trace; empty when all hold.

    Checks L = W + X, the one-step X recursion, X >= 1, W against the
    pending window, L_{m+j} against the seed data for j <= m, and
    L_n = X_{n-m} + m with L_n >= m + 1 for n >= 2m.
    """
    m = trace.params.m
    X, W, L, U = trace.X, trace.W, trace.L, trace.U
    out = []
    if np.any(L != W + X):
        out.append("L != W + X")
    if np.any(X[1:] != X[:-1] + 1 - U[1:]):
        out.append("X_{n+1} != X_n + 1 - U_{n+1}")
    if np.any(X < 1):
        out.append("X_n < 1")
    full_u = np.concatenate((np.asarray(init.u, dtype=np.int64), U[1:]))
    window = np.convolve(full_u, np.ones(m, dtype=np.int64), mode="valid")
    if np.any(window[: len(W)] != W):
        out.append("W_n != sum of last m selections")
    j = min(m, len(L) - 1)
    expected = [l_from_init(i, init) for i in range(j + 1)]
    if np.any(L[: j + 1] != np.asarray(expected)):
        out.append("L_{m+j} != xi + j + tail sum of u")
    if len(L) > m:
        if np.any(L[m:] != X[: len(X) - m] + m):
            out.append("L_n != X_{n-m} + m")
        if np.any(L[m:] < m + 1):
            out.append("L_n < m + 1 for n >= 2m")
    return out
