"""
Crossing infeasible regions: exterior penalty against hard rejection
====================================================================

Under a tight delay bound the feasible configurations are scattered. The
exterior penalty lets the chain walk through infeasible ones while the penalty
weight is still small; hard rejection never leaves the feasible set.
"""

from relayplace import (Evaluator, NoFeasibleError, PenaltyParams, SASchedule, SearchSpace,
                        anneal, baseline, load_scenario)
from relayplace.scenario import bundled_scenario_path

sc = load_scenario(bundled_scenario_path("desk_2station"))
ref = baseline(sc, weighting="traffic_share")
space = SearchSpace.from_scenario(sc, n_rn=2)
evaluator = Evaluator(sc, weighting="traffic_share")
schedule = SASchedule(steps=20, proposals=100, restarts=2)
d_max = 0.6 * ref.delay

print("seed   exterior Pi/Pi_0   interior Pi/Pi_0")
for seed in range(4):
    out = []
    for mode in ("exterior", "interior"):
        try:
            res = anneal(space, PenaltyParams(d_max, mode=mode), schedule, evaluator, seed=seed)
            out.append(f"{res.energy / ref.energy:.3f}")
        except NoFeasibleError:
            out.append("none")
    print(f"{seed:4d}   {out[0]:>16s}   {out[1]:>16s}")

# The trace records, per temperature step, the current energy, the penalty
# and the fraction of accepted moves.
res = anneal(space, PenaltyParams(d_max), schedule, evaluator, seed=0)
print("\n" + "\n".join(res.trace.to_csv().splitlines()[:6]))
