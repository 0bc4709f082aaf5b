import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, stats

from relayplace.channel import ChannelModel, PathLoss
from relayplace.loads import (BackhaulState, access_load, backhaul_combinations, backhaul_load,
                              backhaul_rates, fixed_point, link_budget, max_access_loads,
                              solve_backhaul)
from relayplace.scenario import Configuration, Station


def no_shadow(sc):
    ch = sc.channel
    flat = ChannelModel(PathLoss(ch.ue_enb.intercept_db, ch.ue_enb.exponent, 0.0),
                        PathLoss(ch.ue_rn.intercept_db, ch.ue_rn.exponent, 0.0),
                        PathLoss(ch.rn_enb.intercept_db, ch.rn_enb.exponent, 0.0), ch.seed)
    return dataclasses.replace(sc, channel=flat)


def test_zero_traffic(desk):
    sc = dataclasses.replace(desk, traffic_mean=0.0)
    ls = fixed_point(sc, Configuration((5,), -100.0, -100.0, 3.0))
    assert ls.iterations == 1 and ls.converged
    assert np.all(ls.access == 0.0)


def test_mirror_symmetry(desk):
    sc = no_shadow(desk)
    ls = fixed_point(sc, Configuration((), -95.0, -95.0, 0.0), tol=1e-9)
    assert ls.access[0] == pytest.approx(ls.access[1], abs=1e-6)


def test_idle_area_gives_zero_load(desk):
    # an RN far outside every served area: moving the bias to 0 with a weak pilot
    sc = dataclasses.replace(desk, rn_pilot_dbm=-60.0)
    ls = fixed_point(sc, Configuration((20,), -100.0, -100.0, 0.0))
    rn = len(desk.stations)
    assert ls.budget.traffic_mass[rn] == 0
    assert ls.access[rn] == 0.0


def _single_cell():
    st_ = Station(0, "eNB", (0.0, 0.0), 0, 46.0)
    from relayplace.scenario import Scenario
    from relayplace.capacity import default_capacity_table
    return Scenario(stations=(st_,), cell_id=0, extent=(-200.0, 200.0, -200.0, 200.0),
                    pixel_size=20.0, traffic_mean=5.0, flow_size=1e6, backhaul_quota=0.1,
                    noise_dbm=-116.4, t_max_dbm=23.0, capacity=default_capacity_table(floor=1e6),
                    mqs_window=10, bias_range=(0.0, 0.0, 1.0), power_range=(-115.0, -80.0, 5.0),
                    channel=ChannelModel(PathLoss(128.1, 3.76, 0.0), PathLoss(140.7, 3.67, 0.0),
                                         PathLoss(124.5, 3.76, 0.0)),
                    rng_seed=1, candidate_sites=((50.0, 50.0),))


def closed_form_load(sc, p_target_dbm):
    """Own-load root of rho = omega Phi / (1 - beta) E[1/C], E under the normalized MQS law."""
    snr = 10 ** ((p_target_dbm - sc.noise_dbm) / 10)
    ln = stats.lognorm(s=math.sqrt(math.log(2)), scale=snr / math.sqrt(2))
    w = sc.mqs_window
    cap = sc.capacity

    def e_inv_rate(rho):
        n = np.arange(1, w + 1)
        t = (1 - rho) * w * w / (w - rho * (w - n)) ** 2
        binom = np.array([math.comb(w - 1, k - 1) for k in n], dtype=float)

        def dens(z):
            u = ln.cdf(z)
            return ln.pdf(z) * np.sum(binom * u ** (w - n) * (1 - u) ** (n - 1) * t)

        edges = np.concatenate(([0.0], cap.thresholds, [np.inf]))
        parts = [integrate.quad(dens, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:])]
        mass = np.mean(t)
        return float(np.dot(parts, 1 / cap.interval_rates)) / mass

    phi_total = sc.network_area
    scale = sc.traffic_mean * phi_total / (1 - sc.backhaul_quota)
    return optimize.brentq(lambda r: scale * e_inv_rate(r) - r, 0.0, 0.999)


def test_closed_form_reduction():
    sc = _single_cell()
    x = Configuration((), -100.0, -100.0, 0.0)
    budget = link_budget(sc, x)
    assert not budget.tx.clamped.any()
    ls = fixed_point(sc, x, tol=1e-12)
    assert ls.access[0] == pytest.approx(closed_form_load(sc, -100.0), rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(data=st.data())
def test_access_load_monotone_in_interference(desk, data):
    x = Configuration((30,), -95.0, -100.0, 6.0)
    budget = _cached_budget(desk, x)
    n = budget.n_stations
    rho = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    j = data.draw(st.integers(0, n - 1))
    k = data.draw(st.integers(0, n - 1).filter(lambda v: v != j))
    bumped = rho.copy()
    bumped[j] = min(1.0, rho[j] + data.draw(st.floats(0, 1)))
    assert access_load(budget, bumped, k) >= access_load(budget, rho, k) - 1e-12


_BUDGETS = {}


def _cached_budget(sc, x):
    key = (id(sc), x)
    if key not in _BUDGETS:
        _BUDGETS[key] = link_budget(sc, x)
    return _BUDGETS[key]


@settings(max_examples=15, deadline=None)
@given(data=st.data())
def test_access_load_bounded_by_corner(seven_cell, data):
    x = Configuration((40,), -100.0, -100.0, 5.0)
    budget = _cached_budget(seven_cell, x)
    n = budget.n_stations
    corner = _corner(budget, x)
    rho = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    k = data.draw(st.integers(0, n - 1))
    assert access_load(budget, rho, k) <= corner[k] + 1e-12


_CORNERS = {}


def _corner(budget, x):
    if x not in _CORNERS:
        _CORNERS[x] = max_access_loads(budget)
    return _CORNERS[x]


@pytest.mark.parametrize("x", [Configuration((), -110.0, -110.0, 0.0),
                               Configuration((12,), -100.0, -90.0, 8.0),
                               Configuration((3, 70), -85.0, -105.0, 15.0)])
def test_iterates_non_decreasing(seven_cell, x):
    ls = fixed_point(seven_cell, x)
    hist = np.array(ls.history)
    assert np.all(np.diff(hist, axis=0) >= -1e-12)
    assert ls.converged and ls.stable


def test_unstable_configuration_flagged(desk):
    sc = dataclasses.replace(desk, traffic_mean=500.0)
    ls = fixed_point(sc, Configuration((), -100.0, -100.0, 0.0))
    assert not ls.stable and not ls.feasible
    assert np.any(ls.access >= 1.0)


def test_iteration_cap_reported(desk):
    ls = fixed_point(desk, Configuration((), -100.0, -100.0, 0.0), tol=0.0, max_iter=3)
    assert ls.iterations == 3 and not ls.converged and not ls.feasible


# -- backhaul ---------------------------------------------------------------------------------


def test_two_cells_one_rn_each_gives_four_combinations():
    combo = backhaul_combinations([[0.6, 0.4], [0.7, 0.3]])
    assert len(combo.prob) == 4 and combo.exact
    assert combo.prob.sum() == pytest.approx(1.0, abs=1e-12)


@given(st.lists(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=4), min_size=1, max_size=5))
def test_combination_probabilities_sum_to_one(raw):
    probs = [np.asarray(p) / np.sum(p) for p in raw]
    combo = backhaul_combinations(probs)
    assert abs(combo.prob.sum() - 1.0) < 1e-9


def test_single_cell_backhaul_rate_is_snr_capacity(desk):
    x = Configuration((30,), -100.0, -100.0, 5.0)
    bh = solve_backhaul(desk, x, link_budget(desk, x).assoc)
    g = desk.backhaul_gains_for(x)[0, 0]
    snr = 10 ** ((desk.rn_backhaul_dbm - 30) / 10) * g / desk.noise_w
    assert bh.rates[0] == pytest.approx(float(desk.capacity(snr)))


def test_equal_contributions_split_evenly():
    bh = BackhaulState(np.array([3, 4]), np.array([0, 0]), np.ones(2), np.array([0.4]),
                       np.array([0.2, 0.2]), 1, True, True, np.zeros(2, bool), True)
    np.testing.assert_allclose(bh.shares(), [0.5, 0.5])


def test_backhaul_load_arithmetic():
    # omega * Phi / (beta * R) = 5 * 1e5 / (0.1 * 1e7)
    assert backhaul_load(5.0, 0.1, [1e5], [1e7])[0] == pytest.approx(0.5)
    assert backhaul_load(10.0, 0.1, [1e5], [1e7])[0] == pytest.approx(1.0)


def test_no_relays_no_backhaul_load(desk):
    x = Configuration((), -100.0, -100.0, 0.0)
    bh = solve_backhaul(desk, x, link_budget(desk, x).assoc)
    assert np.all(bh.loads == 0.0) and bh.rates.size == 0


def test_backhaul_monte_carlo_matches_enumeration(seven_cell):
    x = Configuration((60, 100), -100.0, -100.0, 6.0)
    stations = seven_cell.stations_for(x)
    rn = [i for i, s in enumerate(stations) if s.is_rn]
    enb_col = {s.id: i for i, s in enumerate(seven_cell.enbs)}
    cell = np.array([enb_col[stations[i].donor_enb] for i in rn])
    gains = seven_cell.backhaul_gains_for(x)
    contrib = np.full(len(rn), 0.35)
    exact, ok = backhaul_rates(seven_cell, x, stations, contrib, cell, gains)
    mc, ok_mc = backhaul_rates(seven_cell, x, stations, contrib, cell, gains, cap=1)
    assert ok and not ok_mc
    np.testing.assert_allclose(mc, exact, rtol=0.01)
