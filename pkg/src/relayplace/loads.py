"""Access-load fixed point and backhaul rates/loads.

The access load of station ``k`` depends on the loads of the other stations
(through interference) and, through the MQS scheduled-SINR density, on its
own load. ``F_k`` returns the self-consistent own load for given interfering
loads; the network fixed point iterates ``rho(t) = F(rho(t-1))`` from zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .channel import TxPowerField, dbm_to_w, fcpc_power
from .scenario import AssociationMap, Configuration, Scenario, build_association
from .sinr import (LN2, InterferenceMoments, cumulative_coefficients,
                   denominator_params, inverse_rate_basis, moments_from_terms)

DEFAULT_TOL = 0.01
DEFAULT_MAX_ITER = 50
COMBINATION_CAP = 1_000_000
MC_COMBINATIONS = 100_000


@dataclass(frozen=True, eq=False)
class LinkBudget:
    """Everything the load solver needs about one configuration.

    ``y[j, k]`` and ``h[j, k]`` are the mean and mean-square power that a
    scheduled user of station ``j`` delivers at station ``k``, with the user's
    location drawn from ``phi / Phi_j`` over the area served by ``j``.
    """

    assoc: AssociationMap
    tx: TxPowerField
    y: np.ndarray
    h: np.ndarray
    weights: np.ndarray        # phi(s) * pixel area, m^2
    noise: float
    traffic_mean: float
    access_share: float        # 1 - beta (1 in small-cell mode)
    window: int
    capacity: object

    @property
    def n_stations(self) -> int:
        return len(self.assoc.stations)

    @property
    def traffic_mass(self) -> np.ndarray:
        return self.assoc.traffic_mass


def link_budget(sc: Scenario, x: Configuration, assoc: AssociationMap | None = None,
                small_cell: bool = False) -> LinkBudget:
    if assoc is None:
        assoc = build_association(sc, x)
    tx = fcpc_power(sc, x, assoc)
    weights = sc.phi * sc.pixel_area
    k = len(assoc.stations)
    mass = assoc.traffic_mass
    onehot = np.zeros((k, len(weights)))
    served = mass > 0
    rows = assoc.serving
    onehot[rows, np.arange(len(weights))] = weights
    onehot[served] /= mass[served, None]
    rx = tx.power[:, None] * assoc.gains       # power of the user at s seen by every station
    y = onehot @ rx
    h = onehot @ rx**2
    return LinkBudget(assoc, tx, y, h, weights, sc.noise_w, sc.traffic_mean,
                      1.0 if small_cell else 1.0 - sc.backhaul_quota,
                      sc.mqs_window, sc.capacity)


def interference_moments(budget: LinkBudget, rho, k: int) -> InterferenceMoments:
    """Moments of the interference at station ``k``; ``rho[k]`` itself is ignored."""
    rho = np.array(rho, dtype=float)
    rho[k] = 0.0
    return moments_from_terms(rho, budget.y[:, k], budget.h[:, k])


@dataclass(frozen=True, eq=False)
class _StationState:
    load: float
    pixels: np.ndarray
    inv_rate: np.ndarray       # E[1/C] per served pixel, s/bit


def _station_basis(budget: LinkBudget, rho, k: int):
    pixels = budget.assoc.pixels_of(k)
    den = denominator_params(interference_moments(budget, rho, k), budget.noise)
    sigma = math.sqrt(LN2 + den.sigma**2)
    received = budget.tx.received[pixels]
    # unclamped FCPC pixels share one received power; evaluate each value once
    levels, inverse = np.unique(received, return_inverse=True)
    mu = np.log(levels) - 0.5 * LN2 - den.mu
    b, top = inverse_rate_basis(mu, sigma, budget.capacity, budget.window)
    return pixels, b, inverse, top


def _station_state(budget: LinkBudget, rho, k: int) -> _StationState:
    if budget.traffic_mass[k] <= 0:
        return _StationState(0.0, np.empty(0, dtype=int), np.empty(0))
    pixels, b, inverse, top = _station_basis(budget, rho, k)
    weight = np.bincount(inverse, weights=budget.weights[pixels], minlength=len(b))
    scale = budget.traffic_mean / budget.access_share
    bsum = weight @ b
    total = weight.sum()

    def load_at(r):
        c = cumulative_coefficients(budget.window, r, normalized=True)
        return scale * (top * total + bsum @ c)

    if load_at(1.0) >= 1.0:
        own = 1.0
    elif load_at(0.0) <= 0.0:
        own = 0.0
    else:
        # load_at is decreasing in r (more contention, better scheduled SINR)
        own = brentq(lambda r: load_at(r) - r, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    c = cumulative_coefficients(budget.window, own, normalized=True)
    inv = top + b @ c
    return _StationState(own, pixels, inv[inverse])


def access_load(budget: LinkBudget, rho, k: int) -> float:
    """``F_k``: self-consistent access load of ``k`` given interfering loads ``rho``.

    Returns 1.0 when station ``k`` cannot be stable whatever its own load.
    """
    return _station_state(budget, rho, k).load


def max_access_loads(budget: LinkBudget) -> np.ndarray:
    """``F_k(1, ..., 1)``, the upper corner of the box F maps into."""
    ones = np.ones(budget.n_stations)
    return np.array([access_load(budget, ones, k) for k in range(budget.n_stations)])


# -- backhaul ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BackhaulCombo:
    """Joint RN-scheduling combinations over cells.

    ``choice[d, t]`` is 0 when cell ``t`` schedules no RN in combination ``d``,
    else the 1-based index of the scheduled RN. ``prob[d]`` is ``V(d)``.
    ``exact`` is False when the combinations were sampled.
    """

    choice: np.ndarray
    prob: np.ndarray
    exact: bool


def backhaul_combinations(probs, cap: int = COMBINATION_CAP, samples: int = MC_COMBINATIONS,
                          rng: np.random.Generator | None = None) -> BackhaulCombo:
    """Enumerate (or sample when more than ``cap``) scheduling combinations.

    ``probs[t]`` lists cell ``t``'s probabilities of scheduling nothing, RN 1, RN 2, ...
    """
    probs = [np.asarray(p, dtype=float) for p in probs]
    sizes = [len(p) for p in probs]
    count = math.prod(sizes)
    if count <= cap:
        grids = np.meshgrid(*[np.arange(n) for n in sizes], indexing="ij")
        choice = np.column_stack([g.ravel() for g in grids]) if probs else np.zeros((1, 0), int)
        prob = np.ones(len(choice))
        for t, p in enumerate(probs):
            prob = prob * p[choice[:, t]]
        return BackhaulCombo(choice, prob, True)
    rng = np.random.default_rng(0) if rng is None else rng
    choice = np.column_stack([rng.choice(len(p), size=samples, p=p / p.sum()) for p in probs])
    return BackhaulCombo(choice, np.full(samples, 1.0 / samples), False)


@dataclass(frozen=True, eq=False)
class BackhaulState:
    rn_index: np.ndarray       # station indices of RNs
    rn_cell: np.ndarray        # column of the donor eNB for each RN
    rates: np.ndarray          # R_BL per RN, bits/s
    loads: np.ndarray          # rho_BL per eNB column
    contributions: np.ndarray  # rho~_BL per RN
    iterations: int
    converged: bool
    stable: bool
    floor_limited: np.ndarray  # RNs whose backhaul rate sits at the capacity floor
    exact: bool

    def shares(self) -> np.ndarray:
        """``rho~_k / sum_t rho~_t`` within each donor cell (scheduling share of each RN)."""
        out = np.zeros_like(self.contributions)
        for cell in np.unique(self.rn_cell):
            m = self.rn_cell == cell
            tot = self.contributions[m].sum()
            out[m] = self.contributions[m] / tot if tot > 0 else 1.0 / m.sum()
        return out


def _schedule_probs(contrib, rn_cell, cells):
    """Per cell: ``[1 - rho_BL, rho~_1, rho~_2, ...]`` with rho_BL capped at 1."""
    out = []
    for cell in cells:
        c = contrib[rn_cell == cell]
        total = c.sum()
        if total >= 1.0:
            c = c / total
            total = 1.0
        out.append(np.concatenate(([1.0 - total], c)))
    return out


def backhaul_rates(sc: Scenario, x: Configuration, stations, contrib, rn_cell, gains,
                   cap: int = COMBINATION_CAP, samples: int = MC_COMBINATIONS):
    """``R_BL = 1 / E[1/C(SINR_BL)]`` per RN, expectation over other cells' RN schedules.

    Returns ``(rates, exact)``.
    """
    rn_idx = [i for i, st in enumerate(stations) if st.is_rn]
    power = dbm_to_w(np.array([stations[i].backhaul_tx_power for i in rn_idx]))
    cells = np.unique(rn_cell)
    probs = _schedule_probs(contrib, rn_cell, cells)
    noise = sc.noise_w
    inv_c = 1.0 / sc.capacity.interval_rates
    rates = np.empty(len(rn_idx))
    exact = True
    for r in range(len(rn_idx)):
        col = rn_cell[r]
        signal = power[r] * gains[r, col]
        others = [t for t, cell in enumerate(cells) if cell != col]
        if not others:
            interference = np.zeros(1)
            weight = np.ones(1)
        else:
            levels = []
            for t in others:
                members = np.flatnonzero(rn_cell == cells[t])
                levels.append(np.concatenate(([0.0], power[members] * gains[members, col])))
            rng = np.random.default_rng([sc.rng_seed, r])
            combo = backhaul_combinations([probs[t] for t in others], cap, samples, rng)
            exact = exact and combo.exact
            interference = sum(levels[i][combo.choice[:, i]] for i in range(len(others)))
            weight = combo.prob
        sinr = signal / (noise + interference)
        idx = np.searchsorted(sc.capacity.thresholds, sinr, side="right")
        rates[r] = 1.0 / float(weight @ inv_c[idx])
    return rates, exact


def backhaul_load(traffic_mean: float, beta: float, traffic_mass, rates) -> np.ndarray:
    """Per-RN contributions ``omega * Phi_k / (beta * R_k)``; sum them per donor for rho_BL."""
    return traffic_mean / beta * np.asarray(traffic_mass, dtype=float) / np.asarray(rates, dtype=float)


def solve_backhaul(sc: Scenario, x: Configuration, assoc: AssociationMap,
                   tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   cap: int = COMBINATION_CAP, samples: int = MC_COMBINATIONS) -> BackhaulState:
    """Inner fixed point between backhaul loads and backhaul rates, started from zero load."""
    stations = assoc.stations
    enb_col = {st.id: i for i, st in enumerate(sc.enbs)}
    rn_index = np.array([i for i, st in enumerate(stations) if st.is_rn], dtype=int)
    rn_cell = np.array([enb_col[stations[i].donor_enb] for i in rn_index], dtype=int)
    n_enb = len(sc.enbs)
    if len(rn_index) == 0:
        z = np.zeros(0)
        return BackhaulState(rn_index, rn_cell, z, np.zeros(n_enb), z, 0, True, True,
                             np.zeros(0, bool), True)
    gains = sc.backhaul_gains_for(x)
    mass = assoc.traffic_mass[rn_index]
    contrib = np.zeros(len(rn_index))
    converged = False
    exact = True
    for it in range(1, max_iter + 1):
        rates, exact = backhaul_rates(sc, x, stations, contrib, rn_cell, gains, cap, samples)
        new = backhaul_load(sc.traffic_mean, sc.backhaul_quota, mass, rates)
        delta = np.max(np.abs(new - contrib))
        contrib = new
        if delta < tol:
            converged = True
            break
    loads = np.bincount(rn_cell, weights=contrib, minlength=n_enb)
    floor = rates <= sc.capacity.floor * (1 + 1e-12)
    return BackhaulState(rn_index, rn_cell, rates, loads, contrib, it, converged,
                         bool(np.all(loads < 1.0)), floor, exact)


# -- access fixed point ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LoadState:
    access: np.ndarray             # rho_k per station
    history: list                  # iterates rho(0), rho(1), ...
    iterations: int
    converged: bool
    stable: bool
    inv_rate: np.ndarray           # E[1/C] per pixel w.r.t. its server, s/bit
    backhaul: BackhaulState | None = None
    small_cell: bool = False
    budget: LinkBudget | None = field(default=None, repr=False)

    @property
    def backhaul_loads(self) -> np.ndarray:
        return np.zeros(0) if self.backhaul is None else self.backhaul.loads

    @property
    def feasible(self) -> bool:
        ok = self.converged and self.stable
        if self.backhaul is not None:
            ok = ok and self.backhaul.converged and self.backhaul.stable
        return bool(ok)


def fixed_point(sc: Scenario, x: Configuration, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER, small_cell: bool = False,
                budget: LinkBudget | None = None, with_backhaul: bool = True) -> LoadState:
    """Iterate the access loads from zero until the largest change is below ``tol``.

    Stops early, flagged unstable, as soon as some station reaches load 1. In
    small-cell mode the whole frame serves the access link and there is no
    backhaul.
    """
    if budget is None:
        budget = link_budget(sc, x, small_cell=small_cell)
    n = budget.n_stations
    rho = np.zeros(n)
    history = [rho.copy()]
    converged = stable = False
    states: list[_StationState] = []
    for it in range(1, max_iter + 1):
        states = [_station_state(budget, rho, k) for k in range(n)]
        new = np.array([s.load for s in states])
        history.append(new)
        delta = np.max(np.abs(new - rho)) if n else 0.0
        rho = new
        if np.any(rho >= 1.0):
            break
        if delta < tol:
            converged = stable = True
            break
    inv_rate = np.full(len(budget.weights), np.nan)
    for s in states:
        inv_rate[s.pixels] = s.inv_rate
    backhaul = None
    if with_backhaul and not small_cell and stable:
        backhaul = solve_backhaul(sc, x, budget.assoc, tol, max_iter)
    return LoadState(rho, history, len(history) - 1, converged, stable, inv_rate,
                     backhaul, small_cell, budget)
