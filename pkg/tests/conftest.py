import dataclasses

import numpy as np
import pytest

from relayplace.metrics import access_delay_at, evaluate, littles_law_delay
from relayplace.scenario import bundled_scenario_path, load_scenario

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk():
    return load_scenario(bundled_scenario_path("desk_2station"))


@pytest.fixture(scope="session")
def seven_cell():
    return load_scenario(bundled_scenario_path("default_7cell"))


def site_block(sc, center, half):
    """Candidate sites within ``half`` grid steps of ``center`` (a lattice block)."""
    sites = np.asarray(sc.candidate_sites)
    step = sc.candidate_step
    d = np.abs(sites - np.asarray(center)) / step
    keep = np.all(d <= half + 1e-9, axis=1)
    return tuple(map(tuple, sites[keep]))


def small_space_scenario(sc, center, half, powers, biases):
    """The same network with a tiny candidate block and short power/bias ranges."""
    return dataclasses.replace(sc, candidate_sites=site_block(sc, center, half),
                               power_range=powers, bias_range=biases)


def random_scenario(rng):
    """A desk-sized scene with random shadowing seed, station layout, load and traffic profile."""
    import copy
    from relayplace.scenario import tomllib

    from relayplace.scenario import scenario_from_dict

    doc = tomllib.loads(bundled_scenario_path("desk_2station").read_text())
    doc = copy.deepcopy(doc)
    doc["seed"] = int(rng.integers(1, 2**31))
    n_enb = int(rng.integers(2, 4))
    xs = np.sort(rng.uniform(-400, 400, n_enb))
    doc["stations"] = [{"kind": "eNB", "position": [float(x), float(rng.uniform(-150, 150))]}
                       for x in xs]
    doc["network"]["cell_of_interest"] = int(rng.integers(n_enb))
    doc["traffic"]["mean"] = float(rng.uniform(0.5, 6.0))
    if rng.random() < 0.5:
        doc["traffic"].update(profile="hotspot", hotspot_center=[float(rng.uniform(-300, 300)), 0.0],
                              hotspot_sigma=float(rng.uniform(40, 150)),
                              hotspot_mass=float(rng.uniform(0.1, 0.6)))
    return scenario_from_dict(doc)


def random_configuration(sc, rng, n_rn=None):
    from relayplace.scenario import Configuration

    n_rn = int(rng.integers(0, 3)) if n_rn is None else n_rn
    sites = rng.choice(len(sc.candidate_sites), size=n_rn, replace=False)
    return Configuration(tuple(int(s) for s in sites), float(rng.choice(sc.power_levels)),
                         float(rng.choice(sc.power_levels)), float(rng.choice(sc.bias_levels)))


def identity_residuals(sc, x):
    """Worst relative error of Little's law over stations and of the energy identity over pixels."""
    r = evaluate(sc, x)
    if not r.feasible:
        return None
    ls, budget = r.loads, r.loads.budget
    assoc = budget.assoc
    little = energy = 0.0
    for i, k in enumerate(r.station_ids):
        rho = ls.access[k]
        expected = littles_law_delay(rho, sc.traffic_mean, assoc.traffic_mass[k], sc.flow_size)
        little = max(little, abs(r.access_delay[i] / expected - 1))
        pix = assoc.pixels_of(k)
        d_at = access_delay_at(ls.inv_rate[pix], rho, sc.flow_size, budget.access_share)
        via_delay = budget.tx.power[pix] * d_at * (1 - rho) * budget.access_share / sc.flow_size
        energy = max(energy, float(np.max(np.abs(via_delay / r.epsilon[pix] - 1))))
    return little, energy
