"""Adapt a trained policy to a different user load without any new labels.

The source policy is trained with oracle labels on 2-user networks, then
deployed on 5-user networks. Self-imitation explores each unlabeled target
instance with a raised threshold, labels the visited nodes with the best
solution it has found itself, and fine-tunes at a reduced learning rate.
"""

import numpy as np

from learnbnb.cran import CranConfig, exhaustive_oracle, generate_feasible_instance
from learnbnb.imitation import DaggerConfig, dagger_train
from learnbnb.learned import EscalationSchedule, LeafTable, learned_solve
from learnbnb.transfer import SiConfig, si_transfer

source_cfg = CranConfig(rrh_count=5, user_count=2, antennas_per_rrh=2)
target_cfg = CranConfig(rrh_count=5, user_count=5, antennas_per_rrh=2)

src_train = [generate_feasible_instance(source_cfg, seed=i) for i in range(20)]
src_opt = {}
for inst in src_train:
    res = exhaustive_oracle(inst)
    src_opt[inst.instance_id] = (res.assignment, res.objective)
source = dagger_train(src_train, src_opt, DaggerConfig(o2=(1.5, 1.0)), seed=0)
print("source policy trained on 2-user networks")

unlabeled = [generate_feasible_instance(target_cfg, seed=300 + i) for i in range(12)]
held_out = [generate_feasible_instance(target_cfg, seed=400 + i) for i in range(10)]
held_opt = {}
for inst in held_out:
    res = exhaustive_oracle(inst)
    held_opt[inst.instance_id] = (res.assignment, res.objective)


def mean_gap(policy):
    gaps = []
    for inst in held_out:
        res = learned_solve(
            inst, policy, schedule=EscalationSchedule(), table=LeafTable(inst.instance_id)
        )
        _, opt = held_opt[inst.instance_id]
        gaps.append((res.incumbent.objective - opt) / opt if res.incumbent.found else 1.0)
    return float(np.mean(gaps))


print(f"pre-transfer gap on 5-user networks : {mean_gap(source.best_policy):.2%}")
si = si_transfer(source.best_policy, unlabeled, SiConfig(), seed=0)
print(f"self-label objective sums by round  : {[f'{v:.1f}' for v in si.objective_sums]}")
print(f"exploration thresholds used         : {[f'{t:.3f}' for t in si.thresholds]}")
print(f"post-transfer gap                   : {mean_gap(si.policy):.2%}")
