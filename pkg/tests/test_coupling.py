from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_inits
from tanglefluid import coupling
from tanglefluid.coupling import (
    CouplingError,
    CouplingTargets,
    init_deviation,
    membership_F,
    rescale,
    sample_in_F,
    sample_v,
    targets,
    xi_alpha,
)
from tanglefluid.fluid_dde import DdeInit, bootstrap_b
from tanglefluid.rng import make_rng
from tanglefluid.tangle_core import DiscreteInit, ModelParams, forced_run, run


def test_targets_examples():
    assert np.array_equal(targets(DdeInit(1.0, (1.0,), 1.0), 10).x, np.ones(10))
    assert np.array_equal(targets(DdeInit(1.0, (2.0,), 1.0), 10).x, np.full(10, 2.0))
    assert np.array_equal(targets(DdeInit(1.0, (2.0, 0.0), 1.0), 4).x, [2.0, 2.0, 0.0, 0.0])


def test_targets_split_pieces():
    # three pieces over m = 4 slots: slot 2 straddles pieces 0 and 1
    init = DdeInit(1.0, (0.3, 1.2, 2.0), 1.0)
    x = targets(init, 4).x
    expected = [0.3, 0.3 / 3 + 1.2 * 2 / 3, 1.2 * 2 / 3 + 2.0 / 3, 2.0]
    assert x == pytest.approx(expected, abs=1e-15)


def test_targets_reject_non_integer_m():
    with pytest.raises(ValueError):
        targets(DdeInit(1.0, (1.0,), 1.0), 10.5)


def test_targets_telescoping():
    for init in random_inits(6, seed=21):
        lam = 200 / init.h
        tg = targets(init, lam)
        assert np.all((tg.x >= 0) & (tg.x <= 2))
        assert tg.x.sum() / lam == pytest.approx(init.u_total, abs=1e-12)


def test_xi_alpha():
    assert xi_alpha(DdeInit(1.0, (1.0,), 1.0), 100) == 100
    assert xi_alpha(DdeInit(0.004, (1.0,), 1.0), 100) == 1
    assert xi_alpha(DdeInit(0.257, (1.0,), 1.0), 100) == 25


def test_sample_v_degenerate_slots():
    tg = CouplingTargets(lam=3, xi_alpha=1, x=np.array([0.0, 2.0, 1.0]))
    rng = make_rng(1)
    for _ in range(50):
        assert sample_v(tg, rng).tolist() == [0, 2, 1]


@pytest.mark.parametrize("mean", [0.75, 1.4, 0.05])
def test_sample_v_mean(mean):
    n = 10**5
    tg = CouplingTargets(lam=n, xi_alpha=1, x=np.full(n, mean))
    v = sample_v(tg, make_rng(2))
    frac = mean - math.floor(mean)
    sigma = math.sqrt(frac * (1 - frac) / n)
    assert abs(v.mean() - mean) <= 3 * sigma
    assert set(np.unique(v)) <= {math.floor(mean), math.ceil(mean)}


def test_sample_v_per_slot_means():
    x = np.array([0.2, 0.5, 1.0, 1.7, 1.95])
    tg = CouplingTargets(lam=5, xi_alpha=1, x=x)
    rng = make_rng(3)
    n = 20000
    acc = np.zeros(5)
    for _ in range(n):
        acc += sample_v(tg, rng)
    frac = x - np.floor(x)
    sigma = np.sqrt(frac * (1 - frac) / n)
    assert np.all(np.abs(acc / n - x) <= 3 * sigma + 1e-15)


def test_deviation_matches_closed_form_difference():
    rng = make_rng(4)
    for init in random_inits(6, seed=22):
        lam = 50 / init.h
        m = ModelParams(lam, init.h).m
        tg = targets(init, lam)
        v = sample_v(tg, rng)
        dev = init_deviation(v, init, lam)
        # direct: L from the seed-data formula against b from its closed form
        for j in range(m + 1):
            L = tg.xi_alpha + j + int(v[j:].sum())
            b = bootstrap_b(init, min((m + j) / lam, 2 * init.h))
            assert dev[j] == pytest.approx(L / lam - b, abs=1e-12)
            # telescoped form: slot errors plus the floor error
            alt = (v[j:] - tg.x[j:]).sum() / lam + tg.xi_alpha / lam - init.a_h
            assert dev[j] == pytest.approx(alt, abs=1e-12)


def test_floor_error_bound():
    for init in random_inits(6, seed=23):
        lam = 100 / init.h
        if lam * init.a_h >= 1:
            assert abs(xi_alpha(init, lam) / lam - init.a_h) <= 1 / lam


def test_deviation_matches_simulated_trace():
    init = DdeInit(1.3, (0.4, 1.6), 1.0)
    lam = 40
    cpl = sample_in_F(init, lam, make_rng(5))
    tr = run(ModelParams(lam, 1.0), cpl.discrete_init(), 40, make_rng(6))
    L = tr.L[:41]
    b = bootstrap_b(init, np.arange(40, 81) / lam)
    assert np.allclose(L / lam - b, init_deviation(cpl.v, init, lam), atol=1e-12)


def test_membership_examples():
    init = DdeInit(1.0, (1.0,), 1.0)
    assert membership_F(np.ones(100, dtype=int), init, 100)
    sat = DdeInit(1.0, (2.0,), 1.0)
    assert not membership_F(np.zeros(16, dtype=int), sat, 16)
    assert not membership_F(np.zeros(400, dtype=int), sat, 400)


def test_membership_boundary_inclusive(monkeypatch):
    init = DdeInit(1.0, (0.5,), 1.0)
    v = sample_v(targets(init, 64), make_rng(7))
    worst = float(np.max(np.abs(init_deviation(v, init, 64))))
    monkeypatch.setattr(coupling, "f_tolerance", lambda h, lam: worst)
    assert membership_F(v, init, 64)
    monkeypatch.setattr(coupling, "f_tolerance", lambda h, lam: np.nextafter(worst, 0))
    assert not membership_F(v, init, 64)


def test_sample_in_F_zero_profile():
    init = DdeInit(2.0, (0.0,), 1.0)
    res = sample_in_F(init, 50, make_rng(8))
    assert res.tries == 1 and not res.v.any()
    assert membership_F(res.v, init, 50)


def test_sample_in_F_reports_exhaustion(monkeypatch):
    monkeypatch.setattr(coupling, "f_tolerance", lambda h, lam: -1.0)
    with pytest.raises(CouplingError) as exc:
        sample_in_F(DdeInit(1.0, (0.5,), 1.0), 4, make_rng(9), max_tries=1)
    assert exc.value.tries == 1
    with pytest.raises(ValueError):
        sample_in_F(DdeInit(1.0, (0.5,), 1.0), 4, make_rng(9), max_tries=0)


def test_sample_in_F_acceptance_rate_fractional_profile():
    # non-degenerate draws: every slot has mean 0.5
    init = DdeInit(1.0, (0.5,), 1.0)
    rng = make_rng(10)
    tries = [sample_in_F(init, 400, rng).tries for _ in range(200)]
    assert 200 / sum(tries) >= 0.7


def test_rescale():
    params = ModelParams(20, 1.0)
    init = DiscreteInit(20, (1,) * 20)
    tr = forced_run(params, init, [1] * 60)
    rt = rescale(tr)
    assert np.all(rt.A == 1.0)
    assert rt.A_at(2.5) == 1.0
    with pytest.raises(ValueError):
        rt.A_at(0.5)
    with pytest.raises(ValueError):
        rescale(tr, window=(1.0, 10.0))


def test_rescale_jumps_and_delay_identity():
    init = DdeInit(0.9, (1.2, 0.3), 1.0)
    lam = 250
    cpl = sample_in_F(init, lam, make_rng(11))
    tr = run(ModelParams(lam, 1.0), cpl.discrete_init(), 5 * lam, make_rng(12))
    rt = rescale(tr)
    assert np.max(np.abs(np.diff(rt.A))) <= 1 / lam + 1e-15
    t = np.arange(2 * lam, 6 * lam + 1) / lam
    assert np.allclose(rt.B_at(t) - rt.A_at(t - 1.0), 1.0, atol=1e-12, rtol=0)
    # evaluation between arrivals uses floor(lam t)
    assert rt.A_at(3.0 + 0.5 / lam) == rt.A_at(3.0)
