"""Step-function link capacity C(SINR) built from an MCS table."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_BANDWIDTH_HZ = 10e6
DEFAULT_RATE_FLOOR = 1e3  # bits/s, keeps 1/C integrable below the lowest MCS


@dataclass(frozen=True)
class CapacityTable:
    """Map from SINR to the rate of a user alone on all access resource blocks.

    ``thresholds_db[i]`` is the lowest SINR at which ``rates[i]`` (bits/s) is
    achieved. Below the first threshold the rate is ``floor``.
    """

    thresholds_db: tuple[float, ...]
    rates: tuple[float, ...]
    floor: float = DEFAULT_RATE_FLOOR

    def __post_init__(self):
        thr = np.asarray(self.thresholds_db, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if thr.ndim != 1 or thr.size == 0 or thr.size != rates.size:
            raise ValueError("capacity_table: thresholds and rates must be equal-length, non-empty")
        if np.any(np.diff(thr) <= 0):
            raise ValueError("capacity_table: thresholds must be strictly increasing")
        if np.any(np.diff(rates) < 0):
            raise ValueError("capacity_table: rates must be non-decreasing in SINR")
        if not (0 < self.floor <= rates[0]):
            raise ValueError("capacity_table: floor must be positive and not above the first rate")

    @property
    def thresholds(self) -> np.ndarray:
        """Linear-scale SINR thresholds."""
        return 10.0 ** (np.asarray(self.thresholds_db) / 10.0)

    @property
    def interval_rates(self) -> np.ndarray:
        """Rates on the L+1 SINR intervals, starting with the floor interval."""
        return np.concatenate(([self.floor], np.asarray(self.rates, dtype=float)))

    @property
    def max_rate(self) -> float:
        return float(self.rates[-1])

    def __call__(self, sinr):
        sinr = np.asarray(sinr, dtype=float)
        idx = np.searchsorted(self.thresholds, sinr, side="right")
        return self.interval_rates[idx]

    @classmethod
    def from_csv(cls, path, rbs_per_second: float, floor: float = DEFAULT_RATE_FLOOR) -> "CapacityTable":
        """Read ``sinr_db,rate_bits_per_rb`` rows; rates are scaled by ``rbs_per_second``."""
        rows = []
        with open(Path(path), newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((float(row["sinr_db"]), float(row["rate_bits_per_rb"])))
        if not rows:
            raise ValueError(f"capacity table {path} is empty")
        rows.sort()
        thr, per_rb = zip(*rows)
        return cls(tuple(thr), tuple(r * rbs_per_second for r in per_rb), floor)


def default_capacity_table(bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ,
                           floor: float = DEFAULT_RATE_FLOOR) -> CapacityTable:
    """15-level table: cutoff at -6.5 dB, attenuated Shannon levels, 4.8 bits/s/Hz ceiling."""
    thr_db = -6.5 + 1.9 * np.arange(15)
    eff = np.minimum(4.8, 0.75 * np.log2(1.0 + 10.0 ** (thr_db / 10.0)))
    return CapacityTable(tuple(np.round(thr_db, 6)), tuple(eff * bandwidth_hz), floor)
