"""Adapting a trained pruning policy to a new task from unlabeled instances.

Each round explores every target instance with a raised threshold, keeps the
best solution found so far per instance, self-labels the visited nodes
against that solution's chain, and fine-tunes the policy at a reduced
learning rate. No ground-truth labels are ever required.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conic import RelaxedSolution
from .features import FeatureConfig, TreeState, extract_features
from .imitation import AggregatedDataset, LabeledSample
from .learned import EscalationSchedule, LeafTable, learned_solve
from .mlp import ClassWeights, Label, PrunePolicy, load_policy, save_policy, train
from .problems import MinlpDefinition
from .seeding import derive_seed

logger = logging.getLogger(__name__)

HALVE_THRESHOLD = "halve-threshold"
HALVE_MARGIN = "halve-margin"


@dataclass(frozen=True)
class SiConfig:
    """`base_lr`, `momentum`, and `batch_size` default to the source
    training configuration; fine-tuning runs at `lr_multiplier` times the
    source learning rate."""

    rounds: int = 10
    explore_threshold: float = 0.9
    adaptation: str = HALVE_THRESHOLD
    lr_multiplier: float = 0.1
    base_lr: float = 0.035
    momentum: float = 0.9
    epochs_per_round: int = 5
    batch_size: int = 16
    o2: tuple[float, float] = (1.0, 1.2)
    same_rtol: float = 1e-6

    def __post_init__(self) -> None:
        if not 0.5 < self.explore_threshold < 1.0:
            raise ValueError("explore_threshold must lie in (0.5, 1)")
        if self.adaptation not in (HALVE_THRESHOLD, HALVE_MARGIN):
            raise ValueError(f"unknown adaptation rule '{self.adaptation}'")


@dataclass
class SiInstanceState:
    """Best-so-far record for one unlabeled instance across rounds."""

    instance: MinlpDefinition
    best_objective: float = math.inf
    best_assignment: tuple[int, ...] | None = None
    table: LeafTable | None = None
    root_solution: RelaxedSolution | None = None

    def __post_init__(self) -> None:
        if self.table is None:
            self.table = LeafTable(self.instance.instance_id)


def collect_si(
    policy: PrunePolicy,
    state: SiInstanceState,
    threshold: float,
    feature_cfg: FeatureConfig,
    round_index: int,
) -> list[LabeledSample]:
    """One exploration pass over one instance; updates the keep-best record.

    The search runs a single round at the exploration threshold (no
    escalation, no fallback). A strictly better incumbent replaces the
    stored solution, otherwise the old one is kept; every visited non-root
    node is labeled preserve iff its box contains the stored solution.
    """
    from .imitation import require_static_features

    require_static_features(feature_cfg)
    if state.root_solution is None:
        state.root_solution = state.instance.solve_relaxation(state.instance.root_bounds())
    result = learned_solve(
        state.instance,
        policy,
        schedule=EscalationSchedule.single(threshold),
        table=state.table,
        feature_cfg=feature_cfg,
        root_solution=state.root_solution,
    )
    if result.incumbent.found and result.incumbent.objective < state.best_objective:
        state.best_objective = result.incumbent.objective
        state.best_assignment = result.incumbent.assignment

    best = state.best_assignment
    tree_state = TreeState()
    samples: list[LabeledSample] = []
    seen: set = set()
    for visit in result.visits:
        node = visit.node
        if node.branch_var is None:
            continue
        key = (node.bounds.lb, node.bounds.ub)
        if key in seen:
            continue
        seen.add(key)
        fv = extract_features(node, tree_state, state.root_solution, state.instance, feature_cfg)
        label = (
            Label.PRESERVE
            if best is not None and node.bounds.contains(best)
            else Label.PRUNE
        )
        samples.append(
            LabeledSample(
                values=tuple(fv.values),
                label=label,
                instance_id=state.instance.instance_id,
                node_key=f"{node.bounds.lb}/{node.bounds.ub}",
                round_index=round_index,
            )
        )
    return samples


@dataclass
class SiResult:
    policy: PrunePolicy
    objective_sums: list[float]
    thresholds: list[float]
    best_round: int
    dataset: AggregatedDataset
    states: list[SiInstanceState]


def _objective_sum(states: list[SiInstanceState]) -> float:
    return sum(s.best_objective for s in states)


def _same_performance(prev: float, cur: float, rtol: float) -> bool:
    if math.isinf(prev) and math.isinf(cur):
        return True
    if math.isinf(prev) or math.isinf(cur):
        return False
    return abs(cur - prev) <= rtol * max(1.0, abs(prev))


def si_transfer(
    policy_src: PrunePolicy,
    instances: list[MinlpDefinition],
    cfg: SiConfig,
    seed: int,
    feature_cfg: FeatureConfig | None = None,
    checkpoint_dir: str | Path | None = None,
) -> SiResult:
    """Self-imitation rounds on unlabeled instances; deterministic in the seed.

    Returns the fine-tuned policy whose round achieved the best (lowest)
    self-label objective sum, ties broken toward the most-trained round.
    When `checkpoint_dir` is given, state is persisted after every round and
    an interrupted transfer resumes from the last completed round.
    """
    if not instances:
        raise ValueError("at least one unlabeled instance is required")
    if feature_cfg is None:
        feature_cfg = FeatureConfig()
    if feature_cfg.schema_id != policy_src.model.schema_id:
        raise ValueError(
            f"source policy schema '{policy_src.model.schema_id}' does not match "
            f"target feature config '{feature_cfg.schema_id}'"
        )

    states = [SiInstanceState(instance=inst) for inst in instances]
    dataset = AggregatedDataset(feature_cfg.schema_id)
    policy = PrunePolicy(model=policy_src.model.copy(), threshold=policy_src.threshold)
    best_policy = policy
    best_sum = math.inf
    best_round = 0
    threshold = cfg.explore_threshold
    sums: list[float] = []
    thresholds: list[float] = []
    start_round = 1

    if checkpoint_dir is not None:
        loaded = _load_checkpoint(Path(checkpoint_dir), states, feature_cfg)
        if loaded is not None:
            policy, best_policy, best_sum, best_round, threshold, sums, thresholds, dataset = loaded
            start_round = len(sums) + 1
            logger.info("resuming transfer from round %d", start_round)

    lr = cfg.lr_multiplier * cfg.base_lr
    for rnd in range(start_round, cfg.rounds + 1):
        thresholds.append(threshold)
        for state in states:
            for sample in collect_si(policy, state, threshold, feature_cfg, rnd):
                dataset.append(sample)
        current_sum = _objective_sum(states)
        sums.append(current_sum)

        weights = ClassWeights.from_labels(dataset.labels(), o2=cfg.o2)
        X, y = dataset.as_arrays()
        trained = train(
            policy.model, X, y, weights,
            epochs=cfg.epochs_per_round, lr=lr, batch_size=cfg.batch_size,
            seed=derive_seed(seed, "finetune", rnd), momentum=cfg.momentum,
        )
        policy = PrunePolicy(model=trained.model, threshold=policy.threshold)

        if current_sum <= best_sum:
            best_sum = current_sum
            best_policy = policy
            best_round = rnd

        if len(sums) >= 2:
            if _same_performance(sums[-2], sums[-1], cfg.same_rtol):
                if cfg.adaptation == HALVE_THRESHOLD:
                    threshold = threshold / 2.0
                else:
                    threshold = 1.0 - (1.0 - threshold) / 2.0
            else:
                threshold = cfg.explore_threshold

        if checkpoint_dir is not None:
            _save_checkpoint(
                Path(checkpoint_dir), states, policy, best_policy, best_sum,
                best_round, threshold, sums, thresholds, dataset,
            )

    return SiResult(
        policy=best_policy,
        objective_sums=sums,
        thresholds=thresholds,
        best_round=best_round,
        dataset=dataset,
        states=states,
    )


def _save_checkpoint(
    directory: Path,
    states: list[SiInstanceState],
    policy: PrunePolicy,
    best_policy: PrunePolicy,
    best_sum: float,
    best_round: int,
    threshold: float,
    sums: list[float],
    thresholds: list[float],
    dataset: AggregatedDataset,
) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "tables").mkdir(exist_ok=True)
    for state in states:
        state.table.save(directory / "tables" / f"{state.instance.instance_id}.json")
    save_policy(policy, directory / "current_model.json")
    save_policy(best_policy, directory / "best_model.json")
    dataset.save(directory / "dataset.csv")
    doc = {
        "format_version": 1,
        "rounds_done": len(sums),
        "threshold": threshold,
        "sums": [None if math.isinf(v) else v for v in sums],
        "thresholds": thresholds,
        "best_sum": None if math.isinf(best_sum) else best_sum,
        "best_round": best_round,
        "instances": [
            {
                "digest": s.instance.instance_id,
                "best_objective": None if math.isinf(s.best_objective) else s.best_objective,
                "best_assignment": None
                if s.best_assignment is None
                else list(s.best_assignment),
            }
            for s in states
        ],
    }
    (directory / "state.json").write_text(json.dumps(doc))


def _load_checkpoint(directory: Path, states: list[SiInstanceState], feature_cfg: FeatureConfig):
    state_file = directory / "state.json"
    if not state_file.exists():
        return None
    doc = json.loads(state_file.read_text())
    by_digest = {s.instance.instance_id: s for s in states}
    if set(by_digest) != {entry["digest"] for entry in doc["instances"]}:
        raise ValueError("checkpoint does not match the provided instance set")
    for entry in doc["instances"]:
        state = by_digest[entry["digest"]]
        state.best_objective = (
            math.inf if entry["best_objective"] is None else entry["best_objective"]
        )
        state.best_assignment = (
            None
            if entry["best_assignment"] is None
            else tuple(entry["best_assignment"])
        )
        table_file = directory / "tables" / f"{entry['digest']}.json"
        if table_file.exists():
            state.table = LeafTable.load(table_file)
    policy = load_policy(directory / "current_model.json", expected_schema=feature_cfg.schema_id)
    best_policy = load_policy(directory / "best_model.json", expected_schema=feature_cfg.schema_id)
    best_sum = math.inf if doc["best_sum"] is None else doc["best_sum"]
    sums = [math.inf if v is None else v for v in doc["sums"]]
    dataset = AggregatedDataset.load(directory / "dataset.csv")
    return (
        policy, best_policy, best_sum, doc["best_round"], doc["threshold"],
        sums, doc["thresholds"], dataset,
    )
