"""Command line front end: ``relayplace eval | optimize | sweep``.

Exit status is 0 on success, 2 when the configuration is infeasible or no
feasible configuration was found, and 1 on bad input.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .annealer import (NoFeasibleError, PenaltyParams, SASchedule, SearchSpace, anneal,
                       format_config)
from .metrics import Evaluator, baseline, evaluate
from .scenario import Configuration, ScenarioError, bundled_scenario_path, load_scenario

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2
PENALTY_MODES = {"exterior": "exterior", "interior": "interior", "static": "static"}


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = bundled_scenario_path(arg)
    if bundled.exists():
        return bundled
    raise ScenarioError(f"scenario {arg!r}: no such file or bundled scenario")


def provenance(args, path: Path) -> list[str]:
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    lines = [f"relayplace {__version__}", f"scenario={path} sha256={digest}"]
    lines += [f"{k}={v}" for k, v in flags.items()]
    return ["# " + line for line in lines]


def write_csv(path: Path | None, header: list[str], columns, rows) -> str:
    buf = io.StringIO()
    buf.write("\n".join(header) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c, "")) for c in columns])
    text = buf.getvalue()
    if path is not None:
        atomic_write(path, text)
    return text


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def parse_sites(text: str | None) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(s) for s in text.replace("+", ",").split(",") if s.strip())


# -- eval ---------------------------------------------------------------------------------

STATION_COLUMNS = ("row", "station", "kind", "x_m", "y_m", "area_m2", "traffic_mass_m2", "load",
                   "access_delay_s", "backhaul_rate_bps", "backhaul_load", "backhaul_delay_s",
                   "energy_j_per_bit", "delay_s", "feasible")


def cmd_eval(args) -> int:
    path = resolve_scenario(args.scenario)
    sc = load_scenario(path)
    header = provenance(args, path)
    if args.sites is None and args.p_enb is None:
        report = baseline(sc, args.weighting)
        header.append("# configuration: eNB-only baseline (Pi_0, D_0)")
    else:
        p_enb = sc.power_levels[-1] if args.p_enb is None else args.p_enb
        p_rn = p_enb if args.p_rn is None else args.p_rn
        x = Configuration(parse_sites(args.sites), float(p_enb), float(p_rn), float(args.bias))
        report = evaluate(sc, x, args.weighting, args.small_cell)
    header.append(f"# config: {format_config(report.config)}")
    rows = [dict(row="station", **r) for r in report.station_rows()]
    s = report.summary()
    rows.append({"row": "summary", "energy_j_per_bit": s["energy_j_per_bit"],
                 "delay_s": s["delay_s"], "feasible": "feasible" if s["feasible"] else "infeasible"})
    out = Path(args.out) / "eval.csv" if args.out else None
    text = write_csv(out, header, STATION_COLUMNS, rows)
    if out is None:
        sys.stdout.write(text)
    if not report.feasible:
        print("infeasible: loads saturated or fixed point did not converge", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


# -- optimize ------------------------------------------------------------------------------


def _schedule(args) -> SASchedule:
    return SASchedule(t0=args.t0, h=args.h, steps=args.steps, proposals=args.proposals,
                      restarts=args.restarts)


def optimize_point(sc, n_rn, args, d0, pi0):
    """One constrained optimization; returns (summary dict, result or None)."""
    d_max = args.dmax if args.dmax is not None else args.dmax_rel * d0
    params = PenaltyParams(d_max, args.alpha_c, PENALTY_MODES[args.penalty])
    evaluator = Evaluator(sc, args.weighting, args.small_cell)
    space = SearchSpace.from_scenario(sc, n_rn)
    summary = {"n_rn": n_rn, "d_max_s": d_max, "d0_s": d0, "pi0_j_per_bit": pi0,
               "dmax_over_d0": d_max / d0}
    try:
        res = anneal(space, params, _schedule(args), evaluator, seed=args.seed)
    except NoFeasibleError:
        summary.update(feasible=False, energy_j_per_bit=math.inf, pi_over_pi0=math.inf,
                       delay_s=math.inf, best_config="", evaluations=evaluator.calls)
        return summary, None
    summary.update(feasible=True, energy_j_per_bit=res.energy, pi_over_pi0=res.energy / pi0,
                   delay_s=res.delay, best_config=format_config(res.best), t0=res.t0,
                   evaluations=res.evaluations)
    return summary, res


SUMMARY_COLUMNS = ("n_rn", "d_max_s", "dmax_over_d0", "feasible", "energy_j_per_bit",
                   "pi0_j_per_bit", "pi_over_pi0", "delay_s", "d0_s", "best_config", "t0",
                   "evaluations")


def cmd_optimize(args) -> int:
    path = resolve_scenario(args.scenario)
    sc = load_scenario(path)
    base = baseline(sc, args.weighting)
    header = provenance(args, path)
    summary, res = optimize_point(sc, args.nrn, args, base.delay, base.energy)
    out = Path(args.out) if args.out else None
    text = write_csv(out / "summary.csv" if out else None, header, SUMMARY_COLUMNS, [summary])
    if res is not None and out is not None:
        atomic_write(out / "trace.csv", "\n".join(header) + "\n" + res.trace.to_csv())
        x = res.best
        atomic_write(out / "best_config.csv", "\n".join(header) + "\n"
                     + "sites,p_enb_dbm,p_rn_dbm,bias_db\n"
                     + f"{'+'.join(map(str, x.rn_sites))},{x.p_enb:.9g},{x.p_rn:.9g},{x.bias:.9g}\n")
    if out is None:
        sys.stdout.write(text)
    if res is None:
        print("no-feasible-found: no visited configuration met the delay bound", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


# -- sweep ------------------------------------------------------------------------------------


def _sweep_point(job):
    sc, axis, value, args, index = job
    if axis == "omega":
        sc = dataclasses.replace(sc, traffic_mean=float(value))
    base = baseline(sc, args.weighting)
    point = argparse.Namespace(**vars(args))
    n_rn = args.nrn
    if axis == "dmax":
        point.dmax, point.dmax_rel = None, float(value)
    elif axis == "nrn":
        n_rn = int(value)
    summary, res = optimize_point(sc, n_rn, point, base.delay, base.energy)
    summary = {"axis_value": value, **summary}
    if res is not None and args.out:
        atomic_write(Path(args.out) / f"trace_{index:03d}.csv", res.trace.to_csv())
    return summary


SWEEP_COLUMNS = ("axis_value",) + SUMMARY_COLUMNS


def cmd_sweep(args) -> int:
    path = resolve_scenario(args.scenario)
    sc = load_scenario(path)
    values = [float(v) for v in args.values.split(",")]
    if args.axis == "nrn" and any(v != int(v) or v < 0 for v in values):
        raise ScenarioError("sweep values for nrn must be non-negative integers")
    jobs = [(sc, args.axis, v, args, i) for i, v in enumerate(values)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    header = provenance(args, path)
    out = Path(args.out) if args.out else None
    text = write_csv(out / "sweep.csv" if out else None, header, SWEEP_COLUMNS, rows)
    if out is not None:
        atomic_write(out / "sweep_plot.txt", plot_description(args, rows))
    else:
        sys.stdout.write(text)
    return EXIT_OK if any(r["feasible"] for r in rows) else EXIT_INFEASIBLE


AXIS_LABEL = {"dmax": "D_max / D_0", "omega": "mean traffic omega (bits/s/m^2)",
              "nrn": "number of RNs in the cell of interest"}


def plot_description(args, rows) -> str:
    pi0 = sorted({r["pi0_j_per_bit"] for r in rows})
    d0 = sorted({r["d0_s"] for r in rows})
    lines = [
        "plot: energy-delay trade-off",
        "data: sweep.csv",
        f"x: axis_value  label: {AXIS_LABEL[args.axis]}",
        "y: pi_over_pi0  label: Pi* / Pi_0 (energy per bit relative to the eNB-only baseline)",
        f"series: n_rn={args.nrn} penalty={args.penalty} weighting={args.weighting}"
        + (" small-cell" if args.small_cell else " relay"),
        "markers: rows with feasible=0 are omitted",
        "normalization: Pi_0 = " + ", ".join(f"{v:.9g}" for v in pi0) + " J/bit",
        "normalization: D_0 = " + ", ".join(f"{v:.9g}" for v in d0) + " s",
    ]
    return "\n".join(lines) + "\n"


# -- parser -----------------------------------------------------------------------------------


def _common(p):
    p.add_argument("--scenario", default="default_7cell",
                   help="scenario file, or the name of a bundled scenario")
    p.add_argument("--weighting", choices=("paper", "traffic_share"), default="paper")
    p.add_argument("--small-cell", action="store_true",
                   help="evaluate RNs as small cells: no backhaul quota, no backhaul delay")
    p.add_argument("--out", help="output directory (default: CSV on stdout)")


def _search(p):
    p.add_argument("--nrn", type=int, default=1)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dmax", type=float, help="delay bound in seconds")
    g.add_argument("--dmax-rel", type=float, default=1.0, help="delay bound relative to D_0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--penalty", choices=tuple(PENALTY_MODES), default="exterior")
    p.add_argument("--alpha-c", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=45)
    p.add_argument("--proposals", type=int, default=None,
                   help="proposals per temperature (default scales with the move set)")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--h", type=float, default=0.85, help="temperature decay per step")
    p.add_argument("--t0", type=float, default=None, help="initial temperature (default: searched)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relayplace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate one configuration (eNB-only baseline by default)")
    _common(p)
    p.add_argument("--sites", help="candidate-site indices, comma separated")
    p.add_argument("--p-enb", type=float, help="eNB target received power, dBm")
    p.add_argument("--p-rn", type=float, help="RN target received power, dBm")
    p.add_argument("--bias", type=float, default=0.0, help="RN bias, dB")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("optimize", help="minimize energy per bit under a delay bound")
    _common(p)
    _search(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="one optimization per value of D_max, omega or n_RN")
    _common(p)
    _search(p)
    p.add_argument("--axis", choices=("dmax", "omega", "nrn"), required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ScenarioError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
