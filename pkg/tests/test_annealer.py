import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relayplace.annealer import (NoFeasibleError, PenaltyParams, SASchedule, SearchSpace,
                                 _acceptance_ratio, accept, anneal, default_proposals,
                                 exhaustive_best, find_t0, gibbs_concentration_check, gibbs_law,
                                 objective, penalty, propose)
from relayplace.scenario import Configuration

SQUARE = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0], [50.0, 50.0]])


def toy_space(powers=(-100.0, -95.0), biases=(0.0,), n_rn=1, sites=SQUARE):
    return SearchSpace(n_rn, sites, np.asarray(powers), np.asarray(biases), 50.0)


class TableEvaluator:
    """Random but fixed (Pi, D) per configuration of a small space."""

    def __init__(self, space, seed=0, scale=1.0, feasible=None):
        rng = np.random.default_rng(seed)
        self.table = {}
        for x in space.enumerate():
            ok = True if feasible is None else feasible(x)
            self.table[x] = (scale * float(rng.uniform(1, 2)), float(rng.uniform(0, 1)), ok)
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.table[x]


# -- penalty ---------------------------------------------------------------------------------


def test_boundary_is_feasible():
    assert penalty(5.0, 0.3, PenaltyParams(0.3), 7) == 0.0


def test_penalty_unit_example():
    # alpha = 1 via the constant-weight mode
    assert penalty(10.0, 2.0, PenaltyParams(1.0, 1.0, "static"), 3) == pytest.approx(10.0)


def test_penalty_formula_exterior():
    p = PenaltyParams(0.5, 2.0)
    assert penalty(3.0, 0.75, p, 4) == pytest.approx(2 * math.log(5) * 3.0 * 0.25 / 0.5)


@given(pi=st.floats(1e-12, 1e3), ratio=st.floats(1.001, 50), scale=st.floats(1e-3, 1e3))
def test_penalty_unit_invariance(pi, ratio, scale):
    a = penalty(pi, ratio * 1.0, PenaltyParams(1.0), 5)
    b = penalty(pi, ratio * scale, PenaltyParams(scale), 5)
    assert b == pytest.approx(a, rel=1e-9)


@given(m=st.integers(1, 500))
def test_penalty_strictly_increasing_in_step(m):
    p = PenaltyParams(1.0)
    assert penalty(2.0, 1.5, p, m + 1) > penalty(2.0, 1.5, p, m)


def test_alpha_dominates_log():
    # the weight used at step m is c ln(m + 1), above ln m for every c >= 1
    p = PenaltyParams(1.0)
    assert all(p.alpha(m) > math.log(m) for m in range(2, 200))


@given(pi=st.floats(0, 1e3), d=st.floats(0, 1.0), m=st.integers(1, 100))
def test_feasible_never_penalized(pi, d, m):
    assert objective(pi, d, True, PenaltyParams(1.0), m) == pi


def test_invalid_params():
    with pytest.raises(ValueError):
        PenaltyParams(0.0)
    with pytest.raises(ValueError):
        PenaltyParams(1.0, 0.5)
    with pytest.raises(ValueError):
        PenaltyParams(1.0, 1.0, "soft")


def test_unstable_and_interior_energies():
    assert math.isinf(objective(1.0, 0.1, False, PenaltyParams(1.0), 1))
    assert math.isinf(objective(1.0, 2.0, True, PenaltyParams(1.0, mode="interior"), 1))


# -- proposal kernel -----------------------------------------------------------------------------


def test_no_relays_only_power_and_bias_moves(desk):
    space = SearchSpace.from_scenario(desk, 0)
    assert space.n_moves == 6
    x = Configuration((), -100.0, -100.0, 5.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert propose(space, x, rng).rn_sites == ()


def transitions(space, x, y):
    return sum(space.apply(x, m) == y for m in range(space.n_moves))


def test_kernel_symmetry_audit(desk):
    space = SearchSpace.from_scenario(desk, 2)
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        x = space.random(rng)
        y = propose(space, x, rng)
        assert transitions(space, y, x) == transitions(space, x, y)


def test_moves_keep_sites_distinct(desk):
    space = SearchSpace.from_scenario(desk, 3)
    rng = np.random.default_rng(2)
    x = space.random(rng)
    for _ in range(5000):
        x = propose(space, x, rng)
        assert len(set(x.rn_sites)) == 3
        assert x.bias in space.biases and x.p_rn in space.powers


def test_default_proposals_anchor():
    assert default_proposals(2) == 400
    assert default_proposals(1) < 400 < default_proposals(3)


# -- Metropolis rule -------------------------------------------------------------------------------


def test_downhill_and_flat_always_accepted():
    rng = np.random.default_rng(0)
    assert all(accept(1.0, 1.0, 0.1, rng) for _ in range(100))
    assert all(accept(0.5, 1.0, 1e-9, rng) for _ in range(100))


def test_uphill_by_one_temperature():
    rng = np.random.default_rng(3)
    rate = np.mean([accept(2.0, 1.0, 1.0, rng) for _ in range(100_000)])
    assert abs(rate - math.exp(-1)) < 0.01 * math.exp(-1)


@given(d=st.lists(st.floats(-5, 5), min_size=1, max_size=40), t=st.floats(1e-3, 10), k=st.floats(1, 10))
def test_acceptance_monotone_in_temperature(d, t, k):
    d = np.asarray(d)
    assert _acceptance_ratio(d, t * k) >= _acceptance_ratio(d, t) - 1e-12


# -- initial temperature -------------------------------------------------------------------------------


def test_t0_scale_equivariance():
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    params = PenaltyParams(math.inf)
    t1 = find_t0(space, TableEvaluator(space, 4), params, seed=9)
    t2 = find_t0(space, TableEvaluator(space, 4, scale=2.0), params, seed=9)
    assert t2 / t1 == pytest.approx(2.0, rel=1e-6)


def test_t0_hits_acceptance_band():
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    ev = TableEvaluator(space, 4)
    params = PenaltyParams(math.inf)
    t0 = find_t0(space, ev, params, seed=9)
    rng = np.random.default_rng(9)
    deltas = []
    while len(deltas) < 200:
        x = space.random(rng)
        y = propose(space, x, rng)
        if y != x:
            deltas.append(ev(y)[0] - ev(x)[0])
    assert 0.7 <= _acceptance_ratio(np.asarray(deltas), t0) <= 0.9


def test_flat_landscape_returns_floor():
    space = toy_space()
    with pytest.warns(RuntimeWarning, match="flat"):
        t0 = find_t0(space, lambda x: (1.0, 0.0, True), PenaltyParams(1.0))
    assert t0 == 1e-6


# -- annealing --------------------------------------------------------------------------------------------

FAST = SASchedule(h=0.85, steps=20, proposals=50, restarts=2)


def test_unconstrained_matches_argmin():
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    ev = TableEvaluator(space, 7)
    res = anneal(space, PenaltyParams(math.inf), FAST, ev, seed=1)
    assert res.energy == min(v[0] for v in ev.table.values())


def test_frozen_schedule_never_worse_than_start():
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    ev = TableEvaluator(space, 8)
    frozen = SASchedule(t0=1e-300, h=1e-9, steps=3, proposals=20, restarts=1)
    res = anneal(space, PenaltyParams(math.inf), frozen, ev, seed=5)
    start = space.random(np.random.default_rng(np.random.SeedSequence(5).spawn(1)[0]))
    assert res.energy <= ev(start)[0]


def test_tiny_space_matches_exhaustive():
    space = toy_space()                 # 4 sites x 2 x 2 powers x 1 bias = 16 configurations
    assert space.size == 16
    for seed in range(5):
        ev = TableEvaluator(space, seed)
        _, pi_star = exhaustive_best(space, ev, 0.5)
        res = anneal(space, PenaltyParams(0.5), FAST, ev, seed=seed)
        assert res.energy == pi_star


def test_trace_reproducible():
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    a = anneal(space, PenaltyParams(0.6), FAST, TableEvaluator(space, 2), seed=3)
    b = anneal(space, PenaltyParams(0.6), FAST, TableEvaluator(space, 2), seed=3)
    assert a.trace.to_csv() == b.trace.to_csv()


def test_best_so_far_non_increasing():
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    res = anneal(space, PenaltyParams(0.4), FAST, TableEvaluator(space, 6), seed=0)
    for r in range(FAST.restarts):
        best = res.trace.best_energies(r)
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), d_max=st.floats(0.2, 0.9))
def test_interior_chain_stays_feasible(seed, d_max):
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    try:
        res = anneal(space, PenaltyParams(d_max, mode="interior"), FAST, TableEvaluator(space, seed),
                     seed=seed)
    except NoFeasibleError:
        return
    assert all(row["feasible"] for row in res.trace.rows)


def test_no_feasible_is_explicit():
    space = toy_space()
    with pytest.raises(NoFeasibleError):
        anneal(space, PenaltyParams(1e-9), FAST, TableEvaluator(space, 0), seed=0)


def test_unstable_configurations_are_skipped():
    space = toy_space(powers=(-100.0, -95.0, -90.0), biases=(0.0, 1.0))
    ev = TableEvaluator(space, 3, feasible=lambda x: x.p_enb != -90.0)
    res = anneal(space, PenaltyParams(math.inf), FAST, ev, seed=2)
    assert res.best.p_enb != -90.0


# -- Gibbs concentration ----------------------------------------------------------------------------------


def test_gibbs_all_feasible_concentrates_on_argmin():
    u = np.random.default_rng(0).uniform(1, 2, 16)
    rep = gibbs_concentration_check(u, np.zeros(16), d_max=1.0, t0=1.0)
    assert list(rep.minimizers) == [int(np.argmin(u))]
    assert rep.final_mass >= 0.99
    assert np.all(np.diff(rep.mass) >= -1e-12)


def test_gibbs_single_feasible_minimizer():
    rng = np.random.default_rng(4)
    u = rng.uniform(1, 2, 16)
    d = rng.uniform(1.2, 3, 16)
    d[[3, 9]] = [0.5, 0.8]
    u[3], u[9] = 1.6, 1.7
    rep = gibbs_concentration_check(u, d, d_max=1.0, t0=1.0)
    assert list(rep.minimizers) == [3]
    assert rep.final_mass >= 0.99


def test_gibbs_empty_feasible_set():
    rep = gibbs_concentration_check(np.ones(4), np.full(4, 2.0), d_max=1.0)
    assert rep.feasible_empty and math.isnan(rep.final_mass)


@given(mu=st.floats(0, 20), t=st.floats(0.05, 5))
def test_gibbs_iso_constraint_ratio(mu, t):
    u = np.array([1.0, 1.4, 1.2, 2.0])
    phi = np.array([0.3, 0.3, 0.0, 0.7])
    p = gibbs_law(u, phi, mu, t)
    assert p[0] / p[1] == pytest.approx(math.exp(-(u[0] - u[1]) / t), rel=1e-9)
