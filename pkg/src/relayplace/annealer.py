"""Constrained simulated annealing over relay configurations.

The chain minimizes ``F(x) = Pi(x) + V(x, m)`` where the exterior penalty
``V`` is zero on delay-feasible configurations and grows with the temperature
step ``m`` elsewhere, so that early on the search may cross infeasible regions.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .scenario import Configuration, Scenario

MODES = ("exterior", "static", "interior")
_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1))


class NoFeasibleError(RuntimeError):
    """The search never visited a configuration meeting the delay constraint."""


# -- penalty ------------------------------------------------------------------------


@dataclass(frozen=True)
class PenaltyParams:
    d_max: float
    c: float = 1.0
    mode: str = "exterior"

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValueError("d_max must be > 0")
        if self.c < 1:
            raise ValueError("alpha coefficient c must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"penalty mode must be one of {MODES}")

    def alpha(self, m: int) -> float:
        """Penalty weight at temperature step ``m``: ``c ln(m + 1)`` (constant ``c`` when static)."""
        if self.mode == "static":
            return self.c
        return self.c * math.log(m + 1)


def penalty(pi: float, d_c: float, params: PenaltyParams, m: int) -> float:
    """``alpha(m) * Pi * (D_c - D_max) / D_max`` when the delay bound is violated, else 0."""
    if d_c <= params.d_max:
        return 0.0
    return params.alpha(m) * pi * (d_c - params.d_max) / params.d_max


def objective(pi: float, d_c: float, feasible: bool, params: PenaltyParams, m: int) -> float:
    """Annealing energy; unstable configurations and, in interior mode, delay violations are +inf."""
    if not feasible or not math.isfinite(pi):
        return math.inf
    if params.mode == "interior":
        return pi if d_c <= params.d_max else math.inf
    return pi + penalty(pi, d_c, params, m)


# -- search space and proposal kernel ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class SearchSpace:
    """Discrete configuration box: RN sites on the candidate grid, power and bias levels."""

    n_rn: int
    sites: np.ndarray
    powers: np.ndarray
    biases: np.ndarray
    step: float

    def __post_init__(self):
        if self.n_rn > len(self.sites):
            raise ValueError(f"{self.n_rn} RNs do not fit on {len(self.sites)} candidate sites")
        lattice = {}
        for i, p in enumerate(self.sites):
            lattice[(int(round(p[0] / self.step)), int(round(p[1] / self.step)))] = i
        object.__setattr__(self, "_lattice", lattice)
        object.__setattr__(self, "_coords", {i: c for c, i in lattice.items()})

    @classmethod
    def from_scenario(cls, sc: Scenario, n_rn: int) -> "SearchSpace":
        return cls(n_rn, np.asarray(sc.candidate_sites, dtype=float).reshape(-1, 2),
                   np.asarray(sc.power_levels), np.asarray(sc.bias_levels), sc.candidate_step)

    @property
    def n_moves(self) -> int:
        """``8 n_RN`` relocations plus +-1 steps of P_eNB, P_RN and B."""
        return 8 * self.n_rn + 6

    @property
    def size(self) -> int:
        return math.comb(len(self.sites), self.n_rn) * len(self.powers) ** 2 * len(self.biases)

    def neighbor(self, site: int, direction: int) -> int | None:
        cx, cy = self._coords[site]
        dx, dy = _DIRECTIONS[direction]
        return self._lattice.get((cx + dx, cy + dy))

    def enumerate(self):
        for sites in itertools.combinations(range(len(self.sites)), self.n_rn):
            for pe, pr, b in itertools.product(self.powers, self.powers, self.biases):
                yield Configuration(sites, float(pe), float(pr), float(b))

    def random(self, rng: np.random.Generator) -> Configuration:
        sites = rng.choice(len(self.sites), size=self.n_rn, replace=False)
        return Configuration(tuple(int(s) for s in sites), float(rng.choice(self.powers)),
                             float(rng.choice(self.powers)), float(rng.choice(self.biases)))

    def _step_level(self, levels, value, delta):
        i = int(np.argmin(np.abs(levels - value))) + delta
        return float(levels[i]) if 0 <= i < len(levels) else None

    def apply(self, x: Configuration, move: int) -> Configuration:
        """Result of move number ``move``; moves that leave the box are null moves."""
        reloc = 8 * self.n_rn
        if move < reloc:
            slot, direction = divmod(move, 8)
            target = self.neighbor(x.rn_sites[slot], direction)
            if target is None or target in x.rn_sites:
                return x
            sites = list(x.rn_sites)
            sites[slot] = target
            return Configuration(tuple(sites), x.p_enb, x.p_rn, x.bias)
        field_name, delta = [("p_enb", 1), ("p_enb", -1), ("p_rn", 1), ("p_rn", -1),
                             ("bias", 1), ("bias", -1)][move - reloc]
        levels = self.biases if field_name == "bias" else self.powers
        value = self._step_level(levels, getattr(x, field_name), delta)
        if value is None:
            return x
        values = {"p_enb": x.p_enb, "p_rn": x.p_rn, "bias": x.bias, field_name: value}
        return Configuration(x.rn_sites, **values)


def propose(space: SearchSpace, x: Configuration, rng: np.random.Generator) -> Configuration:
    """Draw one of the ``n_moves`` moves uniformly.

    A move that would leave the box or stack two RNs leaves ``x`` unchanged, so
    every transition probability is exactly ``1/n_moves`` in both directions.
    """
    return space.apply(x, int(rng.integers(space.n_moves)))


def accept(f_new: float, f_cur: float, temperature: float, rng: np.random.Generator) -> bool:
    """Metropolis rule ``min(1, exp(-(f_new - f_cur) / T))``; T <= 0 means greedy."""
    if f_new <= f_cur:
        return True
    if math.isinf(f_new):
        return False
    if math.isinf(f_cur):
        return True
    if temperature <= 0:
        return False
    return bool(rng.random() < math.exp(-(f_new - f_cur) / temperature))


# -- schedule and trace ----------------------------------------------------------------------


def default_proposals(n_rn: int, anchor: int = 400) -> int:
    """Proposals per temperature, proportional to the move-set size (anchor set for 2 RNs)."""
    return max(1, round(anchor * (8 * n_rn + 6) / 22))


@dataclass(frozen=True)
class SASchedule:
    t0: float | None = None     # None: choose by find_t0
    h: float = 0.85
    steps: int = 45
    proposals: int | None = None
    restarts: int = 4
    start_tries: int = 200

    def __post_init__(self):
        if not 0 < self.h < 1:
            raise ValueError("temperature decay h must lie in (0, 1)")
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")

    def temperature(self, t0: float, m: int) -> float:
        return t0 * self.h ** (m - 1)


TRACE_COLUMNS = ("restart", "step", "temperature", "F", "energy", "delay", "penalty",
                 "acceptance", "feasible", "best_energy", "best_config")


@dataclass
class AnnealTrace:
    rows: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def best_energies(self, restart: int | None = None) -> list[float]:
        return [r["best_energy"] for r in self.rows if restart is None or r["restart"] == restart]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in TRACE_COLUMNS])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, Configuration):
        return format_config(v)
    if v is None:
        return ""
    return v


def format_config(x: Configuration) -> str:
    sites = "+".join(str(s) for s in x.rn_sites) or "-"
    return f"sites={sites};p_enb={x.p_enb:g};p_rn={x.p_rn:g};bias={x.bias:g}"


@dataclass(frozen=True, eq=False)
class AnnealResult:
    best: Configuration
    energy: float
    delay: float
    t0: float
    trace: AnnealTrace
    restart_best: list         # (config, energy) per restart, None if nothing feasible
    evaluations: int


# -- initial temperature ------------------------------------------------------------------


def _acceptance_ratio(deltas: np.ndarray, t: float) -> float:
    with np.errstate(over="ignore"):
        return float(np.mean(np.where(deltas <= 0, 1.0, np.exp(-np.maximum(deltas, 0) / t))))


def find_t0(space: SearchSpace, evaluator, params: PenaltyParams, seed: int = 0,
            moves: int = 200, target: float = 0.8, band: tuple[float, float] = (0.7, 0.9),
            max_iter: int = 200) -> float:
    """Dichotomic search of T0 so that the initial acceptance ratio sits in ``band``.

    The ratio is the exact Metropolis acceptance averaged over a fixed sample of
    ``moves`` random non-null moves (energy changes at step 1), so the result is a
    deterministic function of ``seed``. Bisection runs on log T0 over
    ``[1e-6, 1e6]`` times the median ``|dF|``.
    """
    rng = np.random.default_rng(seed)
    deltas = []
    for _ in range(moves * 50):
        if len(deltas) == moves:
            break
        x = space.random(rng)
        y = propose(space, x, rng)
        if y == x:      # null moves are not transitions; they would inflate the ratio
            continue
        fx = objective(*evaluator(x), params, 1)
        fy = objective(*evaluator(y), params, 1)
        if math.isfinite(fx) and math.isfinite(fy):
            deltas.append(fy - fx)
    deltas = np.asarray(deltas)
    scale = float(np.median(np.abs(deltas))) if deltas.size else 0.0
    if scale == 0.0:
        nonzero = np.abs(deltas[deltas != 0]) if deltas.size else deltas
        if nonzero.size == 0:
            warnings.warn("flat energy landscape: every sampled move has dF = 0", RuntimeWarning)
            return 1e-6
        scale = float(np.median(nonzero))
    lo, hi = math.log(1e-6 * scale), math.log(1e6 * scale)
    if _acceptance_ratio(deltas, math.exp(hi)) < band[0]:
        warnings.warn("acceptance band unreachable; returning the upper bound", RuntimeWarning)
        return math.exp(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        ratio = _acceptance_ratio(deltas, math.exp(mid))
        if band[0] <= ratio <= band[1] and abs(ratio - target) < 1e-3:
            break
        if ratio < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return math.exp(mid)


# -- annealing ------------------------------------------------------------------------------


def _start(space, evaluator, params, rng, tries):
    first = None
    for _ in range(tries):
        x = space.random(rng)
        if first is None:
            first = x
        pi, d, ok = evaluator(x)
        if ok and d <= params.d_max:
            return x
    if params.mode == "interior":
        raise NoFeasibleError("interior search found no feasible starting configuration")
    return first


def _run_chain(space, evaluator, params, schedule, t0, proposals, rng, restart, trace):
    x = _start(space, evaluator, params, rng, schedule.start_tries)
    best, best_pi, best_d = None, math.inf, math.inf

    def consider(cfg, pi, d, ok):
        nonlocal best, best_pi, best_d
        if ok and d <= params.d_max and pi < best_pi:
            best, best_pi, best_d = cfg, pi, d

    pi, d, ok = evaluator(x)
    consider(x, pi, d, ok)
    for m in range(1, schedule.steps + 1):
        temp = schedule.temperature(t0, m)
        f_cur = objective(pi, d, ok, params, m)
        accepted = 0
        for _ in range(proposals):
            y = propose(space, x, rng)
            pi_y, d_y, ok_y = evaluator(y)
            f_y = objective(pi_y, d_y, ok_y, params, m)
            consider(y, pi_y, d_y, ok_y)
            if accept(f_y, f_cur, temp, rng):
                x, pi, d, ok, f_cur = y, pi_y, d_y, ok_y, f_y
                accepted += 1
        trace.append(restart=restart, step=m, temperature=temp, F=f_cur, energy=pi, delay=d,
                     penalty=penalty(pi, d, params, m) if ok and params.mode != "interior" else 0.0,
                     acceptance=accepted / proposals, feasible=bool(ok and d <= params.d_max),
                     best_energy=best_pi, best_config=best)
    return best, best_pi, best_d


def anneal(space: SearchSpace, params: PenaltyParams, schedule: SASchedule, evaluator,
           seed: int = 0) -> AnnealResult:
    """Best delay-feasible configuration over independent restarts.

    ``evaluator(x)`` returns ``(Pi, D_c, stable)``. Raises
    :class:`NoFeasibleError` when no restart visits a feasible configuration.
    """
    proposals = schedule.proposals or default_proposals(space.n_rn)
    t0 = schedule.t0
    if t0 is None:
        t0 = find_t0(space, evaluator, params, seed)
    children = np.random.SeedSequence(seed).spawn(schedule.restarts)
    trace = AnnealTrace()
    per_restart = []
    calls_before = getattr(evaluator, "calls", 0)
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        try:
            best, pi, d = _run_chain(space, evaluator, params, schedule, t0, proposals, rng, r, trace)
        except NoFeasibleError:
            best, pi, d = None, math.inf, math.inf
        per_restart.append((best, pi, d))
    found = [p for p in per_restart if p[0] is not None]
    if not found:
        raise NoFeasibleError(f"no configuration with D_c <= {params.d_max:g} s was visited")
    best, pi, d = min(found, key=lambda p: p[1])
    evaluations = getattr(evaluator, "calls", 0) - calls_before
    return AnnealResult(best, pi, d, t0, trace,
                        [(p[0], p[1]) if p[0] is not None else None for p in per_restart],
                        evaluations)


def exhaustive_best(space: SearchSpace, evaluator, d_max: float):
    """Feasible minimizer of ``Pi`` by enumeration; ``None`` when nothing is feasible."""
    best, best_pi = None, math.inf
    for x in space.enumerate():
        pi, d, ok = evaluator(x)
        if ok and d <= d_max and pi < best_pi:
            best, best_pi = x, pi
    return best, best_pi


# -- Gibbs concentration ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GibbsReport:
    temperatures: np.ndarray
    mu_over_t: np.ndarray
    mass: np.ndarray            # probability on the feasible minimizers per stage
    minimizers: np.ndarray      # indices of the feasible minimizers
    feasible_empty: bool

    @property
    def final_mass(self) -> float:
        return float(self.mass[-1]) if self.mass.size else math.nan


def gibbs_law(energy, violation, mu: float, temperature: float) -> np.ndarray:
    """Normalized ``exp(-(U + mu Phi) / T)`` over an enumerated space."""
    a = -(np.asarray(energy, dtype=float) + mu * np.asarray(violation, dtype=float)) / temperature
    p = np.exp(a - a.max())
    return p / p.sum()


def gibbs_concentration_check(energy, delay, d_max: float, c: float = 1.0, t0: float | None = None,
                              h: float = 0.85, stages: int = 45, rtol: float = 1e-12) -> GibbsReport:
    """Exact Gibbs law ``P_m(x) ~ exp(-(U(x) + mu_m Phi(x)) / T_m)`` over a small space.

    ``U`` is the energy per bit, ``Phi(x) = U (D - D_max)^+ / D_max`` the
    violation, ``mu_m = c ln(m + 1)`` and ``T_m = t0 h^(m-1)``. Reports the mass
    on the feasible minimizers of ``U`` at every stage.
    """
    u = np.asarray(energy, dtype=float)
    d = np.asarray(delay, dtype=float)
    if u.size > 10_000:
        raise ValueError("gibbs check is meant for spaces of at most 1e4 configurations")
    feasible = d <= d_max
    violation = u * np.maximum(d - d_max, 0.0) / d_max
    if t0 is None:
        t0 = float(np.ptp(u)) or 1.0
    temps = t0 * h ** np.arange(stages)
    mus = c * np.log(np.arange(1, stages + 1) + 1.0)
    if not feasible.any():
        return GibbsReport(temps, mus / temps, np.zeros(0), np.zeros(0, int), True)
    u_star = u[feasible].min()
    minimizers = np.flatnonzero(feasible & (u <= u_star * (1 + rtol) + 1e-300))
    mass = np.array([gibbs_law(u, violation, mu, t)[minimizers].sum() for t, mu in zip(temps, mus)])
    return GibbsReport(temps, mus / temps, mass, minimizers, False)
