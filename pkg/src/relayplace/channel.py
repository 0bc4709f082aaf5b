"""Large-scale channel: log-distance path loss, hashed lognormal shadowing, FCPC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

LINK_CLASSES = {"ue_enb": 1, "ue_rn": 2, "rn_enb": 3}


def dbm_to_w(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def w_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


@dataclass(frozen=True)
class PathLoss:
    """``PL(d) = intercept_db + 10 * exponent * log10(d / 1 km)`` plus shadowing."""

    intercept_db: float
    exponent: float
    shadow_std_db: float = 0.0

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError("path-loss exponent must be > 0")
        if not self.shadow_std_db >= 0:
            raise ValueError("shadowing stddev must be >= 0")

    def loss_db(self, distance_m):
        return self.intercept_db + 10.0 * self.exponent * np.log10(np.asarray(distance_m) / 1000.0)


@dataclass(frozen=True)
class ChannelModel:
    """Per-link-class path-loss parameters and the shadowing seed.

    Defaults are log-distance values in the spirit of the 3GPP relay case-1
    model; every number is configurable from the scenario file.
    """

    ue_enb: PathLoss = PathLoss(128.1, 3.76, 10.0)
    ue_rn: PathLoss = PathLoss(140.7, 3.67, 10.0)
    rn_enb: PathLoss = PathLoss(124.5, 3.76, 6.0)
    seed: int = 0
    min_distance: float = 1.0

    def link(self, name: str) -> PathLoss:
        return getattr(self, name)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x):
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _as_u64(a):
    return np.asarray(a, dtype=np.int64).astype(np.uint64)


def shadowing_normal(seed: int, link_class: str, src_key, dst_key) -> np.ndarray:
    """Standard-normal draw that is a pure function of (seed, class, src, dst)."""
    h = _splitmix64(_as_u64(seed) ^ np.uint64(LINK_CLASSES[link_class]))
    h = _splitmix64(h ^ _as_u64(src_key))
    h = _splitmix64(h ^ _as_u64(dst_key))
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) / float(1 << 53)
    return ndtri(u)


def link_class_for(kind: str) -> str:
    return "ue_enb" if kind == "eNB" else "ue_rn"


def _gain_db(model: ChannelModel, cls: str, distance, src_key, dst_key):
    pl = model.link(cls)
    d = np.maximum(distance, model.min_distance)
    shadow = pl.shadow_std_db * shadowing_normal(model.seed, cls, src_key, dst_key)
    return -(pl.loss_db(d) + shadow)


def gain(model: ChannelModel, src, dst, src_key: int = 0) -> float:
    """Linear UE-to-station gain (path loss and shadowing) for one location.

    ``src_key`` identifies the pixel the location belongs to, so repeated
    queries return the same shadowing realization.
    """
    d = float(np.hypot(src[0] - dst.position[0], src[1] - dst.position[1]))
    g_db = _gain_db(model, link_class_for(dst.kind), d, src_key, dst.shadow_key)
    return float(min(1.0, 10.0 ** (g_db / 10.0)))


def gain_matrix(model: ChannelModel, points: np.ndarray, point_keys: np.ndarray, stations) -> np.ndarray:
    """Gains of shape (n_points, n_stations) for UE-to-station links."""
    points = np.asarray(points, dtype=float)
    out = np.empty((len(points), len(stations)))
    for col, st in enumerate(stations):
        d = np.hypot(points[:, 0] - st.position[0], points[:, 1] - st.position[1])
        out[:, col] = _gain_db(model, link_class_for(st.kind), d, point_keys, st.shadow_key)
    return np.minimum(1.0, 10.0 ** (out / 10.0))


def backhaul_gain_matrix(model: ChannelModel, rn_positions, rn_keys, enbs) -> np.ndarray:
    """RN-to-eNB gains of shape (n_rn, n_enb); no fast fading on these links."""
    rn_positions = np.asarray(rn_positions, dtype=float).reshape(-1, 2)
    out = np.empty((len(rn_positions), len(enbs)))
    for col, st in enumerate(enbs):
        d = np.hypot(rn_positions[:, 0] - st.position[0], rn_positions[:, 1] - st.position[1])
        out[:, col] = _gain_db(model, "rn_enb", d, rn_keys, st.shadow_key)
    return np.minimum(1.0, 10.0 ** (out / 10.0))


@dataclass(frozen=True, eq=False)
class TxPowerField:
    """Per-pixel UE transmit power under full-compensation power control."""

    power: np.ndarray      # T(s), W
    clamped: np.ndarray    # T(s) == T_max
    received: np.ndarray   # T(s) * G_serving(s), W


def fcpc(gain_to_server, target_w, t_max_w: float) -> TxPowerField:
    """``T(s) = min(T_max, P_target / G(s))`` with the received power kept exact."""
    g = np.asarray(gain_to_server, dtype=float)
    target = np.broadcast_to(np.asarray(target_w, dtype=float), g.shape)
    required = target / g
    clamped = required >= t_max_w
    power = np.where(clamped, t_max_w, required)
    received = np.where(clamped, t_max_w * g, target)
    return TxPowerField(power, clamped, received)


def fcpc_power(sc, x, assoc) -> TxPowerField:
    """FCPC transmit power for every pixel given its serving station's kind."""
    stations = assoc.stations
    is_rn = np.array([st.kind == "RN" for st in stations])
    serving = assoc.serving
    targets = np.where(is_rn[serving], dbm_to_w(x.p_rn), dbm_to_w(x.p_enb))
    g_serv = assoc.gains[np.arange(len(serving)), serving]
    return fcpc(g_serv, targets, sc.t_max_w)
