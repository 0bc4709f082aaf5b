"""Uplink relay placement: analytic flow-level model and constrained annealing.

Typical use::

    from relayplace import default_scenario, Configuration, evaluate
    sc = default_scenario()
    report = evaluate(sc, Configuration((12,), -100.0, -100.0, 6.0))
    report.energy, report.delay
"""
from .annealer import (NoFeasibleError, PenaltyParams, SASchedule, SearchSpace, anneal,
                       find_t0, gibbs_concentration_check, penalty)
from .capacity import CapacityTable, default_capacity_table
from .loads import LoadState, fixed_point, link_budget
from .metrics import EvalReport, Evaluator, baseline, evaluate
from .scenario import (Configuration, Scenario, ScenarioError, Station, build_association,
                       bundled_scenario_path, default_scenario, enumerate_candidates,
                       load_scenario)

__version__ = "0.1.0"

__all__ = [
    "CapacityTable", "Configuration", "EvalReport", "Evaluator", "LoadState", "NoFeasibleError",
    "PenaltyParams", "SASchedule", "Scenario", "ScenarioError", "SearchSpace", "Station",
    "anneal", "baseline", "build_association", "bundled_scenario_path", "default_capacity_table",
    "default_scenario", "enumerate_candidates", "evaluate", "find_t0", "fixed_point",
    "gibbs_concentration_check", "link_budget", "load_scenario", "penalty",
]
