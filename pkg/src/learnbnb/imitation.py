"""Policy training by data aggregation against known optimal assignments.

Each round runs the learned solver on every training instance, labels the
visited nodes by whether their region contains the instance's optimal
assignment, force-walks the optimal chain so its samples are always present,
retrains, and finally keeps the policy that scores best on validation.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bnb import SearchNode
from .conic import RelaxedSolution, SolveStatus
from .features import FeatureConfig, TreeState, extract_features
from .learned import EscalationSchedule, LeafTable, learned_solve
from .mlp import ClassWeights, Label, MlpModel, PrunePolicy, init_model, train
from .problems import MinlpDefinition, VarBounds
from .seeding import derive_seed

logger = logging.getLogger(__name__)

LABEL_SOURCE_EXACT = "exact-bnb"
LABEL_SOURCE_HEURISTIC = "heuristic"

# Validation gap charged to an instance left infeasible after escalation.
INFEASIBLE_PENALTY_GAP = 1.0


@dataclass(frozen=True)
class LabeledSample:
    values: tuple[float, ...]
    label: Label
    instance_id: str
    node_key: str
    round_index: int


class AggregatedDataset:
    """Append-only multiset of labeled samples collected across rounds."""

    def __init__(self, schema_id: str):
        self.schema_id = schema_id
        self.samples: list[LabeledSample] = []

    def __len__(self) -> int:
        return len(self.samples)

    def append(self, sample: LabeledSample) -> None:
        self.samples.append(sample)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.array([s.values for s in self.samples])
        y = np.array([int(s.label) for s in self.samples])
        return X, y

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples])

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["schema_id", self.schema_id])
            writer.writerow(["label", "instance_id", "node_key", "round", "features..."])
            for s in self.samples:
                writer.writerow(
                    [int(s.label), s.instance_id, s.node_key, s.round_index]
                    + [repr(float(v)) for v in s.values]
                )

    @classmethod
    def load(cls, path: str | Path) -> "AggregatedDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            dataset = cls(schema_id=header[1])
            next(reader)  # column header
            for row in reader:
                dataset.append(
                    LabeledSample(
                        values=tuple(float(v) for v in row[4:]),
                        label=Label(int(row[0])),
                        instance_id=row[1],
                        node_key=row[2],
                        round_index=int(row[3]),
                    )
                )
        return dataset


@dataclass(frozen=True)
class DaggerConfig:
    """Defaults follow the experiment protocol; lr, momentum, batch size, and
    the hand-tuned class weight o2 were selected on validation instances."""

    rounds: int = 5
    epochs_per_round: int = 5
    validation_fraction: float = 0.2
    label_source: str = LABEL_SOURCE_EXACT
    base_threshold: float = 0.5
    lr: float = 0.035
    momentum: float = 0.9
    batch_size: int = 16
    o2: tuple[float, float] = (1.0, 1.2)
    hidden: tuple[int, ...] = (32, 64, 16)

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("at least one round is required")
        if self.label_source not in (LABEL_SOURCE_EXACT, LABEL_SOURCE_HEURISTIC):
            raise ValueError(f"unknown label source '{self.label_source}'")


def label_tree(trace, optimal_assignment) -> dict[int, Label]:
    """Label every trace node: preserve iff its box contains the optimal assignment."""
    root = min(trace, key=lambda rec: rec.node.depth)
    if not root.node.bounds.contains(optimal_assignment):
        raise ValueError("optimal assignment lies outside the root bounds")
    return {
        rec.node.id: (
            Label.PRESERVE
            if rec.node.bounds.contains(optimal_assignment)
            else Label.PRUNE
        )
        for rec in trace
    }


def optimal_chain(root_bounds: VarBounds, assignment) -> list[SearchNode]:
    """Non-root nodes along the root-to-leaf path that fixes `assignment` in index order.

    Ids are negative to mark the nodes as synthetic (they may never have been
    visited by any recorded search).
    """
    chain: list[SearchNode] = []
    bounds = root_bounds
    for j in range(root_bounds.n_vars):
        value = int(assignment[j])
        bounds = bounds.with_bounds(j, value, value)
        chain.append(
            SearchNode(
                id=-(j + 1),
                parent_id=chain[-1].id if chain else None,
                depth=j + 2,
                bounds=bounds,
                branch_var=j,
                branch_dir="right" if value == 1 else "left",
            )
        )
    return chain


@dataclass
class InstanceContext:
    """Per-instance cache reused across rounds: root solve and leaf table."""

    instance: MinlpDefinition
    optimal_assignment: tuple[int, ...]
    optimal_objective: float
    root_solution: RelaxedSolution | None = None
    table: LeafTable | None = None

    def ensure_root(self) -> RelaxedSolution:
        if self.table is None:
            self.table = LeafTable(self.instance.instance_id)
        if self.root_solution is None:
            self.root_solution = self.instance.solve_relaxation(self.instance.root_bounds())
            if self.root_solution.status is not SolveStatus.OPTIMAL:
                raise RuntimeError(
                    f"root relaxation of {self.instance.instance_id} is not solvable"
                )
        return self.root_solution


def require_static_features(feature_cfg: FeatureConfig) -> None:
    """Data collection labels nodes outside the live search, so features must
    not depend on evolving tree state or per-node relaxations."""
    if feature_cfg.mode != "root-only" or feature_cfg.include_tree_features:
        raise ValueError(
            "imitation data collection supports the static root-only feature layout only"
        )


def dagger_round(
    policy: PrunePolicy,
    contexts: list[InstanceContext],
    dataset: AggregatedDataset,
    feature_cfg: FeatureConfig,
    round_index: int,
) -> None:
    """Collect one round of samples under `policy` into `dataset`.

    The policy runs at its base threshold with escalation and fallback
    disabled: training must see the policy's genuine mistakes. The optimal
    chain is always added, computed without any extra relaxations.
    """
    require_static_features(feature_cfg)
    for ctx in contexts:
        root_sol = ctx.ensure_root()
        result = learned_solve(
            ctx.instance,
            policy,
            schedule=EscalationSchedule.single(policy.threshold),
            table=ctx.table,
            feature_cfg=feature_cfg,
            root_solution=root_sol,
        )
        tree_state = TreeState()
        seen: set = set()
        optimal = np.asarray(ctx.optimal_assignment)

        def add(node: SearchNode) -> None:
            key = (node.bounds.lb, node.bounds.ub)
            if key in seen:
                return
            seen.add(key)
            fv = extract_features(node, tree_state, root_sol, ctx.instance, feature_cfg)
            label = Label.PRESERVE if node.bounds.contains(optimal) else Label.PRUNE
            dataset.append(
                LabeledSample(
                    values=tuple(fv.values),
                    label=label,
                    instance_id=ctx.instance.instance_id,
                    node_key=f"{node.bounds.lb}/{node.bounds.ub}",
                    round_index=round_index,
                )
            )

        for visit in result.visits:
            if visit.node.branch_var is None:
                continue  # the root is never classified
            add(visit.node)
        for node in optimal_chain(ctx.instance.root_bounds(), ctx.optimal_assignment):
            add(node)


def validation_gap(
    policy: PrunePolicy,
    contexts: list[InstanceContext],
    feature_cfg: FeatureConfig,
) -> float:
    """Mean relative objective gap of the policy on held-out instances.

    Escalation is enabled but the exact fallback is not; an instance still
    infeasible after the schedule is charged the fixed penalty gap.
    """
    if not contexts:
        raise ValueError("no validation instances")
    gaps = []
    for ctx in contexts:
        root_sol = ctx.ensure_root()
        result = learned_solve(
            ctx.instance,
            policy,
            schedule=EscalationSchedule(fallback=False),
            table=ctx.table,
            feature_cfg=feature_cfg,
            root_solution=root_sol,
        )
        if not result.incumbent.found:
            gaps.append(INFEASIBLE_PENALTY_GAP)
        else:
            opt = ctx.optimal_objective
            gaps.append((result.incumbent.objective - opt) / abs(opt))
    return float(np.mean(gaps))


@dataclass
class DaggerResult:
    best_policy: PrunePolicy
    policies: list[PrunePolicy]
    validation_gaps: list[float]
    dataset: AggregatedDataset
    best_round: int = 0


def dagger_train(
    instances: list[MinlpDefinition],
    optima: dict[str, tuple[tuple[int, ...], float]],
    cfg: DaggerConfig,
    seed: int,
    feature_cfg: FeatureConfig | None = None,
) -> DaggerResult:
    """Full data-aggregation training loop; bit-deterministic for a fixed seed.

    `optima` maps instance id to (assignment, objective) produced by the
    configured label source (exact search or a heuristic).
    """
    if len(instances) < 2:
        raise ValueError("need at least two instances for a train/validation split")
    if feature_cfg is None:
        feature_cfg = FeatureConfig()

    order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(instances))
    n_val = int(round(cfg.validation_fraction * len(instances)))
    val_idx = set(order[:n_val].tolist())
    contexts = []
    for i, inst in enumerate(instances):
        assignment, objective = optima[inst.instance_id]
        contexts.append(
            InstanceContext(
                instance=inst,
                optimal_assignment=tuple(int(v) for v in assignment),
                optimal_objective=objective,
            )
        )
    train_ctx = [c for i, c in enumerate(contexts) if i not in val_idx]
    val_ctx = [c for i, c in enumerate(contexts) if i in val_idx]

    model = init_model(
        feature_cfg.length, feature_cfg.schema_id, hidden=cfg.hidden,
        seed=derive_seed(seed, "init"),
    )
    policy = PrunePolicy(model=model, threshold=cfg.base_threshold)
    dataset = AggregatedDataset(feature_cfg.schema_id)

    policies: list[PrunePolicy] = []
    gaps: list[float] = []
    for rnd in range(1, cfg.rounds + 1):
        size_before = len(dataset)
        dagger_round(policy, train_ctx, dataset, feature_cfg, rnd)
        if len(dataset) == size_before:
            logger.warning("round %d collected no new samples", rnd)
        weights = ClassWeights.from_labels(dataset.labels(), o2=cfg.o2)
        X, y = dataset.as_arrays()
        result = train(
            policy.model, X, y, weights,
            epochs=cfg.epochs_per_round, lr=cfg.lr, batch_size=cfg.batch_size,
            seed=derive_seed(seed, "train", rnd), momentum=cfg.momentum,
        )
        policy = PrunePolicy(model=result.model, threshold=cfg.base_threshold)
        policies.append(policy)
        if val_ctx:
            gaps.append(validation_gap(policy, val_ctx, feature_cfg))

    if val_ctx:
        best_round = int(np.argmin(gaps))
    else:
        logger.warning("validation split is empty; falling back to the last-round policy")
        best_round = len(policies) - 1
        gaps = [math.nan] * len(policies)
    return DaggerResult(
        best_policy=policies[best_round],
        policies=policies,
        validation_gaps=gaps,
        dataset=dataset,
        best_round=best_round,
    )
