from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_inits
from tanglefluid.fluid_dde import (
    DdeInit,
    FluidSolution,
    b_initial,
    bootstrap_a_oracle,
    bootstrap_b,
    integrating_factor,
    solve,
    steps_per_delay,
    verify_lemma1,
)


def rk4_reference(f, y0, t0, t1, n):
    """Plain RK4 for a scalar ODE y' = f(t, y)."""
    dt = (t1 - t0) / n
    y, t = y0, t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        t += dt
    return y


def test_init_validation():
    with pytest.raises(ValueError):
        DdeInit(0.0, (1.0,), 1.0)
    with pytest.raises(ValueError):
        DdeInit(1.0, (2.5,), 1.0)
    with pytest.raises(ValueError):
        DdeInit(1.0, (), 1.0)
    with pytest.raises(ValueError):
        DdeInit(1.0, (1.0,), -1.0)


@pytest.mark.parametrize(
    "init,expected",
    [
        (DdeInit(1.5, (1.0,), 1.5), 3.0),
        (DdeInit(0.5, (0.0,), 1.0), 0.5),
        (DdeInit(1.0, (2.0, 0.0), 1.0), 2.0),
    ],
)
def test_b_initial(init, expected):
    assert b_initial(init) == pytest.approx(expected, abs=1e-15)


def test_bootstrap_b_examples():
    h = 0.7
    fixed = DdeInit(h, (1.0,), h)
    for t in np.linspace(h, 2 * h, 11):
        assert bootstrap_b(fixed, t) == pytest.approx(2 * h, abs=1e-14)
    for init in random_inits(5, seed=1):
        assert bootstrap_b(init, 2 * init.h) == pytest.approx(init.a_h + init.h, abs=1e-14)
        assert bootstrap_b(init, init.h) == pytest.approx(b_initial(init), abs=1e-14)
    assert bootstrap_b(DdeInit(1.0, (0.0,), 1.0), 1.5) == pytest.approx(1.5, abs=1e-15)


def test_bootstrap_b_piecewise_integral():
    # u = (2, 0) on halves of [0,1]: integral over [t-1, 1] is 2*max(0, 0.5-(t-1))
    init = DdeInit(1.0, (2.0, 0.0), 1.0)
    for t in np.linspace(1, 2, 17):
        tail = 2 * max(0.0, 0.5 - (t - 1))
        assert bootstrap_b(init, t) == pytest.approx(1.0 + (t - 1) + tail, abs=1e-14)


def test_bootstrap_b_range():
    init = DdeInit(1.0, (1.0,), 1.0)
    with pytest.raises(ValueError):
        bootstrap_b(init, 0.5)
    with pytest.raises(ValueError):
        bootstrap_b(init, 2.1)


def test_steps_per_delay():
    assert steps_per_delay(1.0, 0.001) == 1000
    assert steps_per_delay(2.0, 0.01) == 200
    with pytest.raises(ValueError):
        steps_per_delay(1.0, 0.3)


def test_solve_rejects_bad_arguments():
    init = DdeInit(1.0, (1.0,), 1.0)
    with pytest.raises(ValueError):
        solve(init, 10.0, 0.3)
    with pytest.raises(ValueError):
        solve(init, 1.5, 0.01)


@pytest.mark.parametrize("h", [0.5, 1.0, 3.0])
def test_fixed_point_preserved(h):
    sol = solve(DdeInit(h, (1.0,), h), 20 * h, h / 100)
    assert np.max(np.abs(sol.a_vals - h)) <= 1e-8
    assert np.max(np.abs(sol.b_vals - 2 * h)) <= 1e-8


def test_grid_layout():
    sol = solve(DdeInit(1.0, (0.3,), 2.0), 9.0, 0.05)
    assert sol.K == 40 and sol.dt == pytest.approx(0.05)
    assert sol.t[0] == 2.0 and sol.t[sol.K] == 4.0
    assert sol.T >= 9.0


def test_delay_identity_exact_at_nodes():
    for init in random_inits(5, seed=2):
        sol = solve(init, 8 * init.h, init.h / 100)
        K = sol.K
        assert np.array_equal(sol.b_vals[K:], sol.a_vals[: len(sol.a_vals) - K] + init.h)


def test_lower_bounds_and_slope_bound():
    for init in random_inits(10, seed=3):
        sol = solve(init, 10 * init.h, init.h / 100)
        assert sol.a_vals.min() >= 0
        assert sol.b_vals.min() >= min(init.h, init.a_h) - 1e-12
        assert np.max(np.abs(sol.deriv_a[1:])) <= 1.0


def test_dense_output_matches_nodes():
    init = random_inits(1, seed=4)[0]
    sol = solve(init, 6 * init.h, init.h / 50)
    assert np.allclose(sol.a_at(sol.t), sol.a_vals, atol=1e-13, rtol=0)
    assert np.allclose(sol.b_at(sol.t), sol.b_vals, atol=1e-13, rtol=0)


def test_derivative_continuous_at_joins():
    for init in random_inits(5, seed=5):
        sol = solve(init, 8 * init.h, init.h / 200)
        dt, K = sol.dt, sol.K
        for j in range(3, 7):
            k = (j - 1) * K
            left = (sol.a_vals[k] - sol.a_vals[k - 1]) / dt
            right = (sol.a_vals[k + 1] - sol.a_vals[k]) / dt
            # one-sided differences differ only by O(dt) curvature terms
            assert abs(left - right) <= 4 * dt / init.h


def test_oracle_analytic_case():
    # a_h = 1, u = 0, h = 1 gives b(t) = t and a(t) = t/3 + 2/(3 t^2)
    init = DdeInit(1.0, (0.0,), 1.0)
    exact = 2 / 3 + 1 / 6
    rk = rk4_reference(lambda t, a: 1 - 2 * a / t, 1.0, 1.0, 2.0, 4000)
    assert rk == pytest.approx(exact, abs=1e-12)
    assert bootstrap_a_oracle(init, 2.0) == pytest.approx(rk, abs=1e-8)
    sol = solve(init, 3.0, 0.001)
    assert sol.a_vals[sol.K] == pytest.approx(rk, abs=1e-8)


def test_oracle_examples():
    h = 1.3
    fixed = DdeInit(h, (1.0,), h)
    ts = np.linspace(h, 2 * h, 7)
    assert np.allclose(bootstrap_a_oracle(fixed, ts), h, atol=1e-12, rtol=0)
    for init in random_inits(4, seed=6):
        assert bootstrap_a_oracle(init, init.h) == init.a_h
        assert np.all(bootstrap_a_oracle(init, np.linspace(init.h, 2 * init.h, 9)) > 0)


def test_oracle_agrees_with_independent_rk4():
    init = DdeInit(0.8, (1.7, 0.2, 1.1, 0.0), 1.0)
    rk = rk4_reference(lambda t, a: 1 - 2 * a / bootstrap_b(init, t), init.a_h, 1.0, 2.0, 8000)
    assert bootstrap_a_oracle(init, 2.0) == pytest.approx(rk, abs=1e-9)


def test_integrating_factor():
    h = 0.8
    sol = solve(DdeInit(h, (1.0,), h), 6 * h, h / 100)
    assert integrating_factor(sol, 1.1, 1.1) == 1.0
    assert integrating_factor(sol, h, 2 * h) == pytest.approx(math.e, rel=1e-12)
    with pytest.raises(ValueError):
        integrating_factor(sol, 2.0, 1.0)


def test_integrating_factor_multiplicative():
    rng = np.random.default_rng(7)
    init = random_inits(1, seed=8)[0]
    h = init.h
    sol = solve(init, 6 * h, h / 200)
    for _ in range(5):
        x, z = sorted(rng.uniform(h, 6 * h, 2))
        y = rng.uniform(x, z)
        whole = integrating_factor(sol, x, z)
        assert integrating_factor(sol, x, y) * integrating_factor(sol, y, z) == pytest.approx(
            whole, rel=1e-10
        )


def test_integrating_factor_solves_bootstrap():
    # a(t) P(h,t) - a_h = integral of P(h,s) over [h,t]
    init = DdeInit(2.0, (0.5, 1.5), 1.0)
    sol = solve(init, 3.0, 0.001)
    t = 1.6
    P = integrating_factor(sol, 1.0, t)
    grid = np.linspace(1.0, t, 601)
    vals = np.array([integrating_factor(sol, 1.0, s) for s in grid])
    integral = np.sum((vals[:-1] + 4 * np.array(
        [integrating_factor(sol, 1.0, s) for s in 0.5 * (grid[:-1] + grid[1:])]
    ) + vals[1:]) * np.diff(grid) / 6)
    assert sol.a_at(t) * P - init.a_h == pytest.approx(integral, abs=1e-9)


def test_decay_toward_stationary_point():
    sol = solve(DdeInit(3.0, (0.0,), 1.0), 30.0, 0.001)
    K = sol.K
    env = [np.max(np.abs(sol.a_vals[j * K:(j + 1) * K] - 1.0)) for j in range(1, 28)]
    assert all(b <= a for a, b in zip(env, env[1:]))
    assert abs(sol.a_vals[-1] - 1.0) < 1e-3
    assert abs(sol.b_vals[-1] - 2.0) < 1e-3


def test_order_of_accuracy():
    init = DdeInit(0.6, (1.9, 0.4, 1.2, 0.0, 2.0), 1.0)
    ref = solve(init, 6.0, 1 / 800)
    errs = []
    for K in (100, 200):
        sol = solve(init, 6.0, 1 / K)
        errs.append(np.max(np.abs(sol.a_vals - ref.a_vals[:: 800 // K])))
    assert errs[0] / errs[1] >= 4


def test_verify_lemma1_fixed_point():
    rep = verify_lemma1(solve(DdeInit(1.0, (1.0,), 1.0), 10.0, 0.01))
    assert rep.ok
    assert max(rep.residuals.values()) < 1e-10


def test_verify_lemma1_random():
    for init in random_inits(4, seed=9):
        rep = verify_lemma1(solve(init, 10 * init.h, init.h / 200), tol=1e-6, tol_quad=1e-4)
        assert rep.ok, rep.residuals


def test_verify_lemma1_flags_corruption():
    sol = solve(DdeInit(1.3, (0.2, 1.8), 1.0), 8.0, 0.005)
    bad = replace(sol, b_vals=sol.b_vals + 0.1)
    rep = verify_lemma1(bad)
    assert 2 in rep.failures
    assert not rep.ok


def test_solution_is_read_only_value():
    sol = solve(DdeInit(1.0, (1.0,), 1.0), 3.0, 0.1)
    assert isinstance(sol, FluidSolution)
    with pytest.raises(AttributeError):
        sol.h = 2.0
