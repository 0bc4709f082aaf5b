"""Network description, scenario files, user association and candidate RN sites."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .capacity import DEFAULT_RATE_FLOOR, CapacityTable, default_capacity_table
from .channel import (ChannelModel, PathLoss, backhaul_gain_matrix, dbm_to_w,
                      gain_matrix)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCENARIO_FORMAT = 1
SITE_KEY_BASE = 1_000_000  # shadowing keys of candidate RN sites


class ScenarioError(ValueError):
    """Invalid scenario file or configuration; the message names the field."""


@dataclass(frozen=True)
class Station:
    id: int
    kind: str                     # "eNB" or "RN"
    position: tuple[float, float]
    cell_id: int
    dl_pilot_power: float         # dBm
    donor_enb: int | None = None
    backhaul_tx_power: float | None = None  # dBm, RNs only
    key: int | None = None        # shadowing key, defaults to id

    @property
    def shadow_key(self) -> int:
        return self.id if self.key is None else self.key

    @property
    def is_rn(self) -> bool:
        return self.kind == "RN"


@dataclass(frozen=True)
class TrafficProfile:
    """Spatial traffic shape; normalized to a network average of 1 on the grid."""

    kind: str = "uniform"         # "uniform" or "hotspot"
    center: tuple[float, float] = (0.0, 0.0)
    sigma: float = 50.0
    mass: float = 0.0             # fraction of traffic carried by the hotspot

    def evaluate(self, points: np.ndarray, network_area: float) -> np.ndarray:
        phi = np.ones(len(points))
        if self.kind == "hotspot" and self.mass > 0:
            d2 = (points[:, 0] - self.center[0]) ** 2 + (points[:, 1] - self.center[1]) ** 2
            pdf = np.exp(-0.5 * d2 / self.sigma**2) / (2 * math.pi * self.sigma**2)
            phi = (1.0 - self.mass) + self.mass * network_area * pdf
        elif self.kind not in ("uniform", "hotspot"):
            raise ScenarioError(f"traffic.profile: unknown kind {self.kind!r}")
        return phi / phi.mean()


@dataclass(frozen=True)
class Configuration:
    """One optimizer point: RN sites in the cell of interest, target powers, bias."""

    rn_sites: tuple[int, ...]
    p_enb: float                  # dBm
    p_rn: float                   # dBm
    bias: float                   # dB

    def __post_init__(self):
        object.__setattr__(self, "rn_sites", tuple(sorted(int(i) for i in self.rn_sites)))

    @property
    def n_rn(self) -> int:
        return len(self.rn_sites)


@dataclass(frozen=True)
class Scenario:
    stations: tuple[Station, ...]
    cell_id: int
    extent: tuple[float, float, float, float]   # xmin, xmax, ymin, ymax (m)
    pixel_size: float
    traffic_mean: float                         # bits/s/m^2
    flow_size: float                            # bits
    backhaul_quota: float
    noise_dbm: float                            # per resource block
    t_max_dbm: float
    capacity: CapacityTable
    mqs_window: int
    bias_range: tuple[float, float, float]      # dB: min, max, step
    power_range: tuple[float, float, float]     # dBm: min, max, step
    channel: ChannelModel
    rng_seed: int
    traffic: TrafficProfile = TrafficProfile()
    candidate_step: float = 50.0
    candidate_sites: tuple[tuple[float, float], ...] = ()
    rn_pilot_dbm: float = 30.0
    rn_backhaul_dbm: float = 30.0

    def __post_init__(self):
        _validate(self)

    # -- geometry -----------------------------------------------------------
    @cached_property
    def grid_shape(self) -> tuple[int, int]:
        xmin, xmax, ymin, ymax = self.extent
        return (int(round((ymax - ymin) / self.pixel_size)),
                int(round((xmax - xmin) / self.pixel_size)))

    @cached_property
    def pixel_centers(self) -> np.ndarray:
        xmin, _, ymin, _ = self.extent
        ny, nx = self.grid_shape
        xs = xmin + (np.arange(nx) + 0.5) * self.pixel_size
        ys = ymin + (np.arange(ny) + 0.5) * self.pixel_size
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    @property
    def n_pixels(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    @property
    def pixel_area(self) -> float:
        return self.pixel_size**2

    @property
    def network_area(self) -> float:
        return self.n_pixels * self.pixel_area

    @cached_property
    def phi(self) -> np.ndarray:
        return self.traffic.evaluate(self.pixel_centers, self.network_area)

    def pixel_of(self, point) -> int:
        xmin, _, ymin, _ = self.extent
        ny, nx = self.grid_shape
        ix = min(nx - 1, max(0, int(math.floor((point[0] - xmin) / self.pixel_size))))
        iy = min(ny - 1, max(0, int(math.floor((point[1] - ymin) / self.pixel_size))))
        return iy * nx + ix

    # -- radio constants in linear units --------------------------------------
    @property
    def noise_w(self) -> float:
        return float(dbm_to_w(self.noise_dbm))

    @property
    def t_max_w(self) -> float:
        return float(dbm_to_w(self.t_max_dbm))

    @property
    def bias_levels(self) -> np.ndarray:
        return _levels(*self.bias_range)

    @property
    def power_levels(self) -> np.ndarray:
        return _levels(*self.power_range)

    # -- stations -------------------------------------------------------------
    @property
    def enbs(self) -> tuple[Station, ...]:
        return tuple(st for st in self.stations if st.kind == "eNB")

    @property
    def cell_enb(self) -> Station:
        return next(st for st in self.stations if st.id == self.cell_id)

    def stations_for(self, x: Configuration) -> tuple[Station, ...]:
        """Fixed stations followed by the RNs placed by ``x`` in the cell of interest."""
        base = len(self.stations)
        rns = tuple(
            Station(id=base + i, kind="RN", position=self.candidate_sites[site],
                    cell_id=self.cell_id, dl_pilot_power=self.rn_pilot_dbm,
                    donor_enb=self.cell_id, backhaul_tx_power=self.rn_backhaul_dbm,
                    key=SITE_KEY_BASE + site)
            for i, site in enumerate(x.rn_sites))
        return self.stations + rns

    def without_relays(self) -> "Scenario":
        """Same network with every RN removed (the eNB-only reference)."""
        return dataclasses.replace(self, stations=self.enbs)

    # -- gains (cached per scenario) ------------------------------------------
    @cached_property
    def fixed_gains(self) -> np.ndarray:
        keys = np.arange(self.n_pixels)
        return gain_matrix(self.channel, self.pixel_centers, keys, self.stations)

    @cached_property
    def site_gains(self) -> np.ndarray:
        keys = np.arange(self.n_pixels)
        probes = [Station(id=-1, kind="RN", position=p, cell_id=self.cell_id,
                          dl_pilot_power=self.rn_pilot_dbm, key=SITE_KEY_BASE + i)
                  for i, p in enumerate(self.candidate_sites)]
        if not probes:
            return np.empty((self.n_pixels, 0))
        return gain_matrix(self.channel, self.pixel_centers, keys, probes)

    @cached_property
    def site_backhaul_gains(self) -> np.ndarray:
        keys = SITE_KEY_BASE + np.arange(len(self.candidate_sites))
        return backhaul_gain_matrix(self.channel, self.candidate_sites, keys, self.enbs)

    @cached_property
    def fixed_backhaul_gains(self) -> np.ndarray:
        rns = [st for st in self.stations if st.is_rn]
        keys = np.array([st.shadow_key for st in rns], dtype=np.int64)
        return backhaul_gain_matrix(self.channel, [st.position for st in rns], keys, self.enbs)

    def gains_for(self, x: Configuration) -> np.ndarray:
        """Pixel-to-station gains (n_pixels, K) for the station set of ``x``."""
        return np.hstack([self.fixed_gains, self.site_gains[:, list(x.rn_sites)]])

    def backhaul_gains_for(self, x: Configuration) -> np.ndarray:
        """RN-to-eNB gains (n_rn_total, n_enb), fixed RNs first then those of ``x``."""
        return np.vstack([self.fixed_backhaul_gains, self.site_backhaul_gains[list(x.rn_sites)]])

    def validate_configuration(self, x: Configuration) -> None:
        if len(set(x.rn_sites)) != len(x.rn_sites):
            raise ScenarioError("configuration.rn_sites: two RNs on the same site")
        if any(not 0 <= i < len(self.candidate_sites) for i in x.rn_sites):
            raise ScenarioError("configuration.rn_sites: index outside candidate_sites")
        lo, hi, _ = self.power_range
        for name in ("p_enb", "p_rn"):
            if not lo - 1e-9 <= getattr(x, name) <= hi + 1e-9:
                raise ScenarioError(f"configuration.{name}: outside power_range")
        lo, hi, _ = self.bias_range
        if not lo - 1e-9 <= x.bias <= hi + 1e-9:
            raise ScenarioError("configuration.bias: outside bias_range")


def _levels(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _validate(sc: Scenario) -> None:
    if not 0.0 < sc.backhaul_quota < 1.0:
        raise ScenarioError(f"backhaul_quota: {sc.backhaul_quota} not in (0, 1)")
    if sc.mqs_window < 2:
        raise ScenarioError(f"mqs_window: {sc.mqs_window} < 2 makes MQS degenerate")
    if sc.pixel_size <= 0:
        raise ScenarioError("pixel_size: must be > 0")
    xmin, xmax, ymin, ymax = sc.extent
    if not (xmax > xmin and ymax > ymin):
        raise ScenarioError("extent: empty rectangle")
    for name in ("traffic_mean", "flow_size"):
        if getattr(sc, name) < 0 or (name == "flow_size" and sc.flow_size == 0):
            raise ScenarioError(f"{name}: must be positive")
    for name in ("bias_range", "power_range"):
        lo, hi, step = getattr(sc, name)
        if hi < lo or step <= 0:
            raise ScenarioError(f"{name}: expected [min, max, step] with min <= max, step > 0")
    ids = [st.id for st in sc.stations]
    if ids != list(range(len(ids))):
        raise ScenarioError("stations: ids must be 0..K-1 in order")
    enb_ids = {st.id for st in sc.stations if st.kind == "eNB"}
    if sc.cell_id not in enb_ids:
        raise ScenarioError(f"cell_of_interest: {sc.cell_id} is not an eNB")
    for st in sc.stations:
        if st.kind not in ("eNB", "RN"):
            raise ScenarioError(f"stations[{st.id}].kind: {st.kind!r}")
        if st.kind == "eNB" and st.donor_enb is not None:
            raise ScenarioError(f"stations[{st.id}].donor_enb: eNBs have no donor")
        if st.kind == "eNB" and st.cell_id != st.id:
            raise ScenarioError(f"stations[{st.id}].cell_id: an eNB defines its own cell")
        if st.kind == "RN":
            if st.donor_enb not in enb_ids or st.donor_enb != st.cell_id:
                raise ScenarioError(f"stations[{st.id}].donor_enb: must be the eNB of its cell")
            if st.backhaul_tx_power is None:
                raise ScenarioError(f"stations[{st.id}].backhaul_tx_power: required for RNs")
        if not (xmin <= st.position[0] <= xmax and ymin <= st.position[1] <= ymax):
            raise ScenarioError(f"stations[{st.id}].position: outside the pixel grid")


# -- association ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AssociationMap:
    stations: tuple[Station, ...]
    serving: np.ndarray        # per-pixel station index
    gains: np.ndarray          # (n_pixels, K) linear gains used for association
    area: np.ndarray           # A_k, m^2
    traffic_mass: np.ndarray   # Phi_k, m^2 (integral of phi over A_k)
    cell_id: int

    @property
    def cell_stations(self) -> np.ndarray:
        return np.array([i for i, st in enumerate(self.stations) if st.cell_id == self.cell_id])

    @property
    def cell_mask(self) -> np.ndarray:
        in_cell = np.array([st.cell_id == self.cell_id for st in self.stations])
        return in_cell[self.serving]

    def pixels_of(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.serving == k)


def associate(pilot_dbm, gains, bias_db) -> np.ndarray:
    """Index of the station maximizing pilot power times bias; ties go to the lowest index."""
    weight = dbm_to_w(np.asarray(pilot_dbm)) * 10.0 ** (np.asarray(bias_db) / 10.0)
    return np.argmax(gains * weight[None, :], axis=1)


def build_association(sc: Scenario, x: Configuration, gains: np.ndarray | None = None) -> AssociationMap:
    stations = sc.stations_for(x)
    if gains is None:
        gains = sc.gains_for(x)
    pilot = np.array([st.dl_pilot_power for st in stations])
    bias = np.array([x.bias if st.is_rn else 0.0 for st in stations])
    serving = associate(pilot, gains, bias)
    k = len(stations)
    count = np.bincount(serving, minlength=k)
    mass = np.bincount(serving, weights=sc.phi, minlength=k)
    return AssociationMap(stations, serving, gains, count * sc.pixel_area,
                          mass * sc.pixel_area, sc.cell_id)


# -- candidate RN sites -------------------------------------------------------


def grid_points(center, step: float, extent) -> np.ndarray:
    """Regular grid of spacing ``step`` anchored at ``center``, clipped to ``extent``."""
    xmin, xmax, ymin, ymax = extent
    i_lo, i_hi = math.ceil((xmin - center[0]) / step), math.floor((xmax - center[0]) / step)
    j_lo, j_hi = math.ceil((ymin - center[1]) / step), math.floor((ymax - center[1]) / step)
    ii, jj = np.meshgrid(np.arange(i_lo, i_hi + 1), np.arange(j_lo, j_hi + 1))
    return np.column_stack([center[0] + step * ii.ravel(), center[1] + step * jj.ravel()])


def candidate_region_mask(sc: Scenario) -> np.ndarray:
    """Pixels of the cell of interest under unbiased eNB-only association."""
    enb_cols = [i for i, st in enumerate(sc.stations) if st.kind == "eNB"]
    enbs = [sc.stations[i] for i in enb_cols]
    serving = associate([st.dl_pilot_power for st in enbs], sc.fixed_gains[:, enb_cols],
                        np.zeros(len(enbs)))
    return np.array([enbs[i].id for i in serving]) == sc.cell_id


def enumerate_candidates(sc: Scenario, step: float | None = None) -> np.ndarray:
    """Grid of candidate RN sites inside the cell of interest, eNB site excluded."""
    step = sc.candidate_step if step is None else step
    center = sc.cell_enb.position
    mask = candidate_region_mask(sc)
    pts = grid_points(center, step, sc.extent)
    keep = [p for p in pts
            if mask[sc.pixel_of(p)] and not np.allclose(p, center)]
    if not keep:
        raise ScenarioError(f"candidate_step: {step} m leaves no candidate site in the cell")
    return np.array(keep)


def with_candidates(sc: Scenario, step: float | None = None) -> Scenario:
    step = sc.candidate_step if step is None else step
    pts = enumerate_candidates(sc, step)
    sites = tuple((float(p[0]), float(p[1])) for p in pts)
    return dataclasses.replace(sc, candidate_step=step, candidate_sites=sites)


# -- scenario files ------------------------------------------------------------


def _hex7_stations(layout: dict) -> list[Station]:
    radius = float(layout.get("ring_radius", 500.0))
    n_outer = int(layout.get("outer_rns_per_cell", 0))
    rn_radius = float(layout.get("outer_rn_radius", 160.0))
    enb_pilot = float(layout.get("enb_pilot_dbm", 46.0))
    rn_pilot = float(layout.get("rn_pilot_dbm", 30.0))
    rn_bh = float(layout.get("rn_backhaul_dbm", 30.0))
    stations = [Station(0, "eNB", (0.0, 0.0), 0, enb_pilot)]
    for i in range(6):
        a = math.pi / 3 * i
        stations.append(Station(i + 1, "eNB", (radius * math.cos(a), radius * math.sin(a)),
                                i + 1, enb_pilot))
    for cell in range(1, 7):
        cx, cy = stations[cell].position
        for r in range(n_outer):
            a = 2 * math.pi * r / n_outer + math.pi / 6
            stations.append(Station(len(stations), "RN",
                                    (cx + rn_radius * math.cos(a), cy + rn_radius * math.sin(a)),
                                    cell, rn_pilot, donor_enb=cell, backhaul_tx_power=rn_bh))
    return stations


def _explicit_stations(rows: list[dict], layout: dict) -> list[Station]:
    out = []
    for i, row in enumerate(rows):
        kind = row.get("kind", "eNB")
        try:
            pos = tuple(float(v) for v in row["position"])
        except KeyError:
            raise ScenarioError(f"stations[{i}].position: missing") from None
        default_pilot = layout.get("enb_pilot_dbm", 46.0) if kind == "eNB" else layout.get("rn_pilot_dbm", 30.0)
        out.append(Station(
            id=i, kind=kind, position=pos,
            cell_id=int(row.get("cell", i if kind == "eNB" else row.get("donor", -1))),
            dl_pilot_power=float(row.get("pilot_dbm", default_pilot)),
            donor_enb=None if kind == "eNB" else int(row.get("donor", -1)),
            backhaul_tx_power=None if kind == "eNB" else float(row.get("backhaul_dbm", layout.get("rn_backhaul_dbm", 30.0))),
        ))
    return out


def _path_loss(d: dict, default: PathLoss, name: str) -> PathLoss:
    try:
        return PathLoss(float(d.get("intercept_db", default.intercept_db)),
                        float(d.get("exponent", default.exponent)),
                        float(d.get("shadow_std_db", default.shadow_std_db)))
    except ValueError as exc:
        raise ScenarioError(f"channel.{name}: {exc}") from None


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> Scenario:
    """Build and validate a scenario from a parsed scenario document."""
    if doc.get("format") != SCENARIO_FORMAT:
        raise ScenarioError(f"format: expected {SCENARIO_FORMAT}, got {doc.get('format')!r}")
    if "seed" not in doc:
        raise ScenarioError("seed: mandatory")
    net = doc.get("network", {})
    layout = doc.get("layout", {})
    traffic = doc.get("traffic", {})
    radio = doc.get("radio", {})
    ranges = doc.get("ranges", {})
    chan = doc.get("channel", {})

    if "stations" in doc:
        stations = _explicit_stations(doc["stations"], layout)
    elif layout.get("kind", "hex7") == "hex7":
        stations = _hex7_stations(layout)
    else:
        raise ScenarioError(f"layout.kind: unknown {layout.get('kind')!r}")

    seed = int(doc["seed"])
    defaults = ChannelModel()
    channel = ChannelModel(
        ue_enb=_path_loss(chan.get("ue_enb", {}), defaults.ue_enb, "ue_enb"),
        ue_rn=_path_loss(chan.get("ue_rn", {}), defaults.ue_rn, "ue_rn"),
        rn_enb=_path_loss(chan.get("rn_enb", {}), defaults.rn_enb, "rn_enb"),
        seed=seed,
    )

    bandwidth = float(radio.get("bandwidth_hz", 10e6))
    floor = float(radio.get("rate_floor", DEFAULT_RATE_FLOOR))
    if "capacity_csv" in radio:
        path = Path(radio["capacity_csv"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        capacity = CapacityTable.from_csv(path, float(radio.get("rbs_per_second", 50_000)), floor)
    elif "capacity" in radio:
        cap = radio["capacity"]
        capacity = CapacityTable(tuple(cap["sinr_db"]), tuple(float(r) for r in cap["rate_bps"]), floor)
    else:
        capacity = default_capacity_table(bandwidth, floor)

    profile = TrafficProfile(
        kind=traffic.get("profile", "uniform"),
        center=tuple(float(v) for v in traffic.get("hotspot_center", (0.0, 0.0))),
        sigma=float(traffic.get("hotspot_sigma", 50.0)),
        mass=float(traffic.get("hotspot_mass", 0.0)),
    )
    try:
        extent = tuple(float(v) for v in net["extent"])
    except KeyError:
        raise ScenarioError("network.extent: missing") from None
    if len(extent) != 4:
        raise ScenarioError("network.extent: expected [xmin, xmax, ymin, ymax]")

    sc = Scenario(
        stations=tuple(stations),
        cell_id=int(net.get("cell_of_interest", 0)),
        extent=extent,
        pixel_size=float(net.get("pixel_size", 20.0)),
        traffic_mean=float(traffic.get("mean", 5.0)),
        flow_size=float(traffic.get("flow_size", 1e6)),
        backhaul_quota=float(radio.get("backhaul_quota", 0.1)),
        noise_dbm=float(radio.get("noise_dbm", -116.4)),
        t_max_dbm=float(radio.get("t_max_dbm", 23.0)),
        capacity=capacity,
        mqs_window=int(radio.get("mqs_window", 10)),
        bias_range=tuple(float(v) for v in ranges.get("bias_db", (0.0, 15.0, 1.0))),
        power_range=tuple(float(v) for v in ranges.get("power_dbm", (-110.0, -80.0, 5.0))),
        channel=channel,
        rng_seed=seed,
        traffic=profile,
        candidate_step=float(net.get("candidate_step", 50.0)),
        rn_pilot_dbm=float(layout.get("rn_pilot_dbm", 30.0)),
        rn_backhaul_dbm=float(layout.get("rn_backhaul_dbm", 30.0)),
    )
    if "candidate_sites" in net:
        sites = tuple((float(p[0]), float(p[1])) for p in net["candidate_sites"])
        return dataclasses.replace(sc, candidate_sites=sites)
    return with_candidates(sc)


def load_scenario(path) -> Scenario:
    """Parse a ``format = 1`` TOML scenario file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from None
    return scenario_from_dict(doc, base_dir=path.parent)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``default_7cell``, ``desk_2station`` ...)."""
    return Path(str(resources.files("relayplace") / "data" / f"{name}.toml"))


def default_scenario() -> Scenario:
    return load_scenario(bundled_scenario_path("default_7cell"))
