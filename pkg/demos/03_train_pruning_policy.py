"""Train a pruning policy by imitation and watch it shrink the search.

Labels come from the exhaustive oracle: a node is "preserve" exactly when its
box still contains the optimal assignment. Data aggregation re-collects
samples under each intermediate policy so the classifier sees its own
mistakes. The trained policy then drives branch-and-bound with one SOCP at
the root plus a handful of leaf evaluations.
"""

import numpy as np

from learnbnb.bnb import solve_exact
from learnbnb.cran import CranConfig, exhaustive_oracle, generate_feasible_instance
from learnbnb.imitation import DaggerConfig, dagger_train
from learnbnb.learned import EscalationSchedule, LeafTable, learned_solve

cfg = CranConfig(rrh_count=6, user_count=6, antennas_per_rrh=2)
train_insts = [generate_feasible_instance(cfg, seed=i) for i in range(40)]
test_insts = [generate_feasible_instance(cfg, seed=500 + i) for i in range(10)]

optima = {}
for inst in train_insts + test_insts:
    res = exhaustive_oracle(inst)
    optima[inst.instance_id] = (res.assignment, res.objective)

result = dagger_train(train_insts, optima, DaggerConfig(), seed=0)
print(f"aggregated dataset: {len(result.dataset)} samples")
print(f"validation gaps by round: {[f'{g:.1%}' for g in result.validation_gaps]}")
print(f"selected round: {result.best_round + 1}")

print(f"\n{'instance':>8} {'optimum W':>10} {'learned W':>10} {'gap':>7} {'SOCPs':>6} {'exact SOCPs':>12}")
gaps, learned_solves, exact_solves = [], 0, 0
for i, inst in enumerate(test_insts):
    res = learned_solve(
        inst, result.best_policy, schedule=EscalationSchedule(), table=LeafTable(inst.instance_id)
    )
    exact = solve_exact(inst)
    _, opt = optima[inst.instance_id]
    gap = (res.incumbent.objective - opt) / opt
    gaps.append(gap)
    learned_solves += res.stats.relaxations_solved
    exact_solves += exact.stats.relaxations_solved
    print(
        f"{i:>8} {opt:>10.2f} {res.incumbent.objective:>10.2f} {gap:>7.2%} "
        f"{res.stats.relaxations_solved:>6} {exact.stats.relaxations_solved:>12}"
    )
print(
    f"\nmean gap {np.mean(gaps):.2%}; conic solves {learned_solves} vs {exact_solves} "
    f"for exact search ({learned_solves / exact_solves:.0%})"
)
