"""Flow delays and uplink energy per bit for one configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .loads import LoadState, fixed_point
from .scenario import Configuration, Scenario

WEIGHTINGS = ("paper", "traffic_share")


def access_delay_at(inv_rate, load: float, flow_size: float, access_share: float):
    """Mean access delay of a flow started at a location: ``xi E[1/C] / ((1 - rho)(1 - beta))``.

    ``inv_rate`` is the scheduled-SINR expectation of ``1/C``. Returns ``inf``
    when the station is saturated.
    """
    inv_rate = np.asarray(inv_rate, dtype=float)
    if load >= 1.0:
        return np.full_like(inv_rate, np.inf) if inv_rate.ndim else math.inf
    return flow_size * inv_rate / ((1.0 - load) * access_share)


def station_delay(delays_at, weights) -> float:
    """Traffic-weighted mean of the per-location delays over the served area."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise ValueError("station serves no traffic")
    return float(np.asarray(delays_at) @ weights / total)


def littles_law_delay(load: float, traffic_mean: float, traffic_mass: float, flow_size: float) -> float:
    """Mean sojourn from Little's law: ``xi rho / ((1 - rho) omega Phi)``."""
    if load >= 1.0:
        return math.inf
    return flow_size * load / ((1.0 - load) * traffic_mean * traffic_mass)


def backhaul_delay(load: float, rate: float, flow_size: float, beta: float) -> float:
    """``xi / ((1 - rho_BL) beta R_BL)``; pass ``rate=None`` for an eNB (zero delay)."""
    if rate is None:
        return 0.0
    if load >= 1.0:
        return math.inf
    return flow_size / ((1.0 - load) * beta * rate)


def cell_weights(area, traffic_mass, weighting: str = "paper") -> np.ndarray:
    """Per-station weights of the cell delay.

    ``paper`` uses ``Phi_k / A_k`` (all ones under uniform traffic);
    ``traffic_share`` uses ``Phi_k / sum Phi``, which sums to one.
    """
    area = np.asarray(area, dtype=float)
    mass = np.asarray(traffic_mass, dtype=float)
    if weighting == "paper":
        return np.divide(mass, area, out=np.zeros_like(mass), where=area > 0)
    if weighting == "traffic_share":
        return mass / mass.sum()
    raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")


def cell_delay(access_delays, backhaul_delays, area, traffic_mass, weighting: str = "paper") -> float:
    """Weighted sum of access-plus-backhaul delay over the stations of the cell."""
    w = cell_weights(area, traffic_mass, weighting)
    d = np.asarray(access_delays, dtype=float) + np.asarray(backhaul_delays, dtype=float)
    return float(np.sum(w * d))


def energy_per_bit(tx_power, inv_rate):
    """``epsilon(s) = T(s) E[1/C]`` in J/bit."""
    return np.asarray(tx_power, dtype=float) * np.asarray(inv_rate, dtype=float)


def mean_energy_per_bit(epsilon, weights, cell_area: float) -> float:
    """``Pi = (1/A_c) sum phi(s) epsilon(s) dA`` over the cell of interest."""
    return float(np.asarray(epsilon) @ np.asarray(weights)) / cell_area


@dataclass(frozen=True, eq=False)
class EvalReport:
    config: Configuration
    energy: float               # Pi, J/bit
    delay: float                # D_c, s
    feasible: bool
    weighting: str
    small_cell: bool
    station_ids: np.ndarray     # stations of the cell of interest with traffic
    access_delay: np.ndarray    # D_k, s
    backhaul_delay: np.ndarray  # D_BL,j,k, s (0 for the eNB)
    loads: LoadState
    epsilon: np.ndarray         # per-pixel J/bit, nan outside the cell of interest

    def station_rows(self) -> list[dict]:
        assoc = self.loads.budget.assoc
        bh = self.loads.backhaul
        rows = []
        for i, k in enumerate(self.station_ids):
            st = assoc.stations[k]
            rate = bh_load = math.nan
            if st.is_rn and bh is not None:
                r = int(np.flatnonzero(bh.rn_index == k)[0])
                rate, bh_load = bh.rates[r], bh.loads[bh.rn_cell[r]]
            rows.append({
                "station": int(k), "kind": st.kind, "x_m": st.position[0], "y_m": st.position[1],
                "area_m2": assoc.area[k], "traffic_mass_m2": assoc.traffic_mass[k],
                "load": self.loads.access[k], "access_delay_s": self.access_delay[i],
                "backhaul_rate_bps": rate, "backhaul_load": bh_load,
                "backhaul_delay_s": self.backhaul_delay[i],
            })
        return rows

    def summary(self) -> dict:
        return {"energy_j_per_bit": self.energy, "delay_s": self.delay,
                "feasible": self.feasible, "iterations": self.loads.iterations,
                "weighting": self.weighting, "small_cell": self.small_cell}


def evaluate(sc: Scenario, x: Configuration, weighting: str = "paper",
             small_cell: bool = False, **solver) -> EvalReport:
    """Loads, cell delay and energy per bit of configuration ``x``.

    Infeasible configurations (saturated or non-converged loads) report
    ``inf`` for both energy and delay.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    sc.validate_configuration(x)
    loads = fixed_point(sc, x, small_cell=small_cell, **solver)
    budget = loads.budget
    assoc = budget.assoc
    cell = assoc.cell_stations
    cell = cell[assoc.traffic_mass[cell] > 0]
    eps = np.full(len(budget.weights), np.nan)
    if not loads.feasible:
        n = len(cell)
        return EvalReport(x, math.inf, math.inf, False, weighting, small_cell, cell,
                          np.full(n, math.inf), np.full(n, math.inf), loads, eps)

    access = np.empty(len(cell))
    bh_delay = np.zeros(len(cell))
    bh = loads.backhaul
    for i, k in enumerate(cell):
        pix = assoc.pixels_of(k)
        d_at = access_delay_at(loads.inv_rate[pix], loads.access[k], sc.flow_size,
                               budget.access_share)
        access[i] = station_delay(d_at, budget.weights[pix])
        if assoc.stations[k].is_rn and bh is not None:
            r = int(np.flatnonzero(bh.rn_index == k)[0])
            bh_delay[i] = backhaul_delay(bh.loads[bh.rn_cell[r]], bh.rates[r],
                                         sc.flow_size, sc.backhaul_quota)
    delay = cell_delay(access, bh_delay, assoc.area[cell], assoc.traffic_mass[cell], weighting)

    mask = assoc.cell_mask
    eps[mask] = energy_per_bit(budget.tx.power[mask], loads.inv_rate[mask])
    energy = mean_energy_per_bit(eps[mask], budget.weights[mask], assoc.area[cell].sum()
                                 if len(cell) else math.inf)
    return EvalReport(x, energy, delay, True, weighting, small_cell, cell, access,
                      bh_delay, loads, eps)


class Evaluator:
    """Cached ``Configuration -> (Pi, D_c, feasible)`` for the optimizer.

    Raises nothing for invalid loads: those come back as ``(inf, inf, False)``.
    """

    def __init__(self, sc: Scenario, weighting: str = "paper", small_cell: bool = False):
        self.scenario = sc
        self.weighting = weighting
        self.small_cell = small_cell
        self._cache: dict[Configuration, tuple[float, float, bool]] = {}
        self.calls = 0

    def __call__(self, x: Configuration) -> tuple[float, float, bool]:
        self.calls += 1
        hit = self._cache.get(x)
        if hit is None:
            r = evaluate(self.scenario, x, self.weighting, self.small_cell)
            hit = self._cache[x] = (r.energy, r.delay, r.feasible)
        return hit

    @property
    def distinct(self) -> int:
        return len(self._cache)


def baseline(sc: Scenario, weighting: str = "paper") -> EvalReport:
    """eNB-only reference: best target power with every RN removed.

    Its energy and delay are the ``Pi_0`` and ``D_0`` used to normalize results.
    """
    bare = sc.without_relays()
    best = None
    for p in bare.power_levels:
        x = Configuration((), float(p), float(p), float(bare.bias_levels[0]))
        r = evaluate(bare, x, weighting)
        if r.feasible and (best is None or r.energy < best.energy):
            best = r
    if best is None:
        raise RuntimeError("no stable eNB-only configuration; lower the traffic")
    return best
