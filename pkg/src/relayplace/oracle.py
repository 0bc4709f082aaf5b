"""Seeded Monte-Carlo snapshots used to check the analytic model.

Nothing here goes through the lognormal fits or the closed-form scheduling
density: SINR samples come from explicit Rayleigh fading, Bernoulli interferer
activity and random interferer locations, and scheduling is done by ranking
simulated SINR histories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import AssociationMap, Configuration, Scenario, build_association


@dataclass(frozen=True, eq=False)
class McScene:
    """A scenario, a configuration and the loads the interferers run at."""

    scenario: Scenario
    config: Configuration
    loads: np.ndarray
    assoc: AssociationMap
    tx_power: np.ndarray       # W per pixel
    location_weight: np.ndarray  # per pixel; interferer locations drawn proportionally

    @classmethod
    def build(cls, sc: Scenario, x: Configuration, loads, location_weight=None) -> "McScene":
        """``location_weight`` defaults to the traffic profile ``phi``.

        Passing each pixel's own load contribution instead (``phi(s) E_s[1/C]``)
        draws a scheduled interferer where its station actually spends airtime.
        """
        assoc = build_association(sc, x)
        g = assoc.gains[np.arange(len(assoc.serving)), assoc.serving]
        target = np.array([10 ** ((x.p_rn if assoc.stations[k].is_rn else x.p_enb) / 10) * 1e-3
                           for k in assoc.serving])
        t_max = 10 ** (sc.t_max_dbm / 10) * 1e-3
        power = np.minimum(t_max, target / g)
        weight = sc.phi if location_weight is None else np.asarray(location_weight, dtype=float)
        return cls(sc, x, np.asarray(loads, dtype=float), assoc, power, weight)

    @property
    def noise(self) -> float:
        return 10 ** (self.scenario.noise_dbm / 10) * 1e-3


def _rate(sc: Scenario, sinr):
    """Step capacity lookup (bits/s), with the floor below the lowest threshold."""
    thr = 10.0 ** (np.asarray(sc.capacity.thresholds_db) / 10.0)
    rates = np.concatenate(([sc.capacity.floor], sc.capacity.rates))
    return rates[np.searchsorted(thr, sinr, side="right")]


def _draw_interference(scene: McScene, k: int, shape, rng) -> np.ndarray:
    assoc = scene.assoc
    total = np.zeros(shape)
    for j in range(len(assoc.stations)):
        if j == k or scene.loads[j] <= 0:
            continue
        pixels = np.flatnonzero(assoc.serving == j)
        if pixels.size == 0:
            continue
        w = scene.location_weight[pixels] / scene.location_weight[pixels].sum()
        active = rng.random(shape) < scene.loads[j]
        where = rng.choice(pixels, size=shape, p=w)
        fading = rng.exponential(1.0, size=shape)
        total += active * scene.tx_power[where] * assoc.gains[where, k] * fading
    return total


def sample_sinr(scene: McScene, pixel: int, k: int, samples: int, seed: int = 0) -> np.ndarray:
    """Instantaneous SINR at station ``k`` of a user at ``pixel``, one value per snapshot."""
    rng = np.random.default_rng(seed)
    signal = scene.tx_power[pixel] * scene.assoc.gains[pixel, k] * rng.exponential(1.0, samples)
    return signal / (scene.noise + _draw_interference(scene, k, samples, rng))


def _mqs_pick(values):
    """Current value of the scheduled user per snapshot, nan on a tie.

    ``values[i, user, 0]`` is the current block, ``values[i, user, 1:]`` the
    user's history. Rank 1 means the current value beats the whole history.
    """
    rank = 1 + np.sum(values[:, :, 1:] > values[:, :, :1], axis=2)
    best = rank.min(axis=1)
    unique = np.sum(rank == best[:, None], axis=1) == 1
    who = np.argmin(rank, axis=1)
    picked = values[np.arange(len(values)), who, 0]
    return np.where(unique, picked, np.nan)


def simulate_mqs(mu: float, sigma: float, window: int, load: float, samples: int,
                 seed: int = 0, users: int | None = None, chunk: int = 20_000) -> np.ndarray:
    """Scheduled-user SINR samples under MQS with lognormal per-block SINR.

    Each snapshot draws the number of active users ``U`` from the geometric law
    ``P(U = n) = load^(n-1) (1 - load)`` (or uses ``users``), gives every user
    ``W`` i.i.d. SINR values (current block plus ``W-1`` past), and schedules the
    user whose current value ranks best against its own history. Snapshots
    with a tie for the best rank are redrawn.
    """
    if window < 2:
        raise ValueError("MQS window must be >= 2")
    rng = np.random.default_rng(seed)
    out = np.empty(samples)
    filled = 0
    while filled < samples:
        n = chunk
        u = np.full(n, users) if users is not None else rng.geometric(1.0 - load, size=n)
        vals = np.full(n, np.nan)   # nan marks a tie; keeps snapshot order
        for count in np.unique(u):
            idx = np.flatnonzero(u == count)
            z = rng.standard_normal((idx.size, count, window))
            vals[idx] = _mqs_pick(z)
        vals = vals[~np.isnan(vals)]
        take = min(vals.size, samples - filled)
        out[filled:filled + take] = vals[:take]
        filled += take
    return np.exp(mu + sigma * out)


@dataclass(frozen=True)
class LoadEstimate:
    value: float
    stderr: float
    samples: int


def empirical_load(scene: McScene, k: int, samples: int, seed: int = 0, window: int | None = None,
                   access_share: float | None = None) -> LoadEstimate:
    """Monte-Carlo access load of station ``k``.

    Each snapshot places ``U`` competing users in ``k``'s area (locations drawn
    with the traffic profile, ``U`` geometric with ``k``'s own load), simulates
    ``W`` blocks of physical SINR per user, schedules by MQS and records
    ``omega * Phi_k / ((1 - beta) C)`` for the scheduled user's current block.
    """
    sc, assoc = scene.scenario, scene.assoc
    window = sc.mqs_window if window is None else window
    share = 1.0 - sc.backhaul_quota if access_share is None else access_share
    pixels = np.flatnonzero(assoc.serving == k)
    mass = sc.phi[pixels].sum() * sc.pixel_area
    if pixels.size == 0 or sc.traffic_mean == 0:
        return LoadEstimate(0.0, 0.0, samples)
    rng = np.random.default_rng(seed)
    w = sc.phi[pixels] / sc.phi[pixels].sum()
    rho = min(float(scene.loads[k]), 1.0 - 1e-12)
    inv = np.empty(samples)
    filled = 0
    while filled < samples:
        n = min(4 * (samples - filled) + 100, 50_000)
        u = rng.geometric(1.0 - rho, size=n)
        current = np.full(n, np.nan)
        for count in np.unique(u):
            idx = np.flatnonzero(u == count)
            m = idx.size
            where = rng.choice(pixels, size=(m, count), p=w)
            signal = (scene.tx_power[where] * assoc.gains[where, k])[..., None] \
                * rng.exponential(1.0, size=(m, count, window))
            interference = _draw_interference(scene, k, (m, count, window), rng)
            current[idx] = _mqs_pick(signal / (scene.noise + interference))
        current = current[~np.isnan(current)]
        take = min(current.size, samples - filled)
        inv[filled:filled + take] = 1.0 / _rate(sc, current[:take])
        filled += take
    scale = sc.traffic_mean * mass / share
    return LoadEstimate(float(scale * inv.mean()), float(scale * inv.std(ddof=1) / np.sqrt(samples)),
                        samples)
