"""Classifier-pruned branch-and-bound with a leaf lookup table.

One SOCP at the root, classifier decisions at internal nodes, and leaf
evaluations memoized in a `LeafTable`. If a pass finds no feasible leaf the
threshold escalates (enlarging the preserved set monotonically) and the tree
is re-searched; after the schedule is exhausted an optional exact fallback
guarantees feasibility on any feasible instance.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bnb import Incumbent, SearchNode, SearchStats, solve_exact
from .conic import RelaxedSolution, SolveStatus
from .features import FeatureConfig, TreeState, extract_features
from .mlp import Label, PrunePolicy, predict
from .problems import LeafResult, MinlpDefinition, VarBounds


class LeafTable:
    """Memoized leaf evaluations keyed by complete assignment.

    Safe for concurrent use: a single lock guarantees each distinct
    assignment is solved at most once per table lifetime.
    """

    def __init__(self, instance_digest: str | None = None):
        self.instance_digest = instance_digest
        self._entries: dict[tuple[int, ...], LeafResult] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, assignment) -> bool:
        return tuple(int(v) for v in assignment) in self._entries

    def lookup_or_solve(self, assignment, instance: MinlpDefinition) -> LeafResult:
        key = tuple(int(v) for v in assignment)
        if len(key) != instance.integer_count:
            raise ValueError("assignment is not complete")
        if self.instance_digest is not None and self.instance_digest != instance.instance_id:
            raise ValueError(
                f"table belongs to instance {self.instance_digest}, got {instance.instance_id}"
            )
        with self._lock:
            if key in self._entries:
                self.hits += 1
                return self._entries[key]
            if self.instance_digest is None:
                self.instance_digest = instance.instance_id
            result = instance.leaf_evaluate(key)
            self._entries[key] = result
            self.misses += 1
            return result

    def save(self, path: str | Path) -> None:
        doc = {
            "format_version": 1,
            "instance_digest": self.instance_digest,
            "entries": [
                {
                    "assignment": list(key),
                    "status": res.status.value,
                    "objective": None if math.isinf(res.objective) else res.objective,
                    "x": None if res.x is None else [repr(float(v)) for v in res.x],
                }
                for key, res in self._entries.items()
            ],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> "LeafTable":
        doc = json.loads(Path(path).read_text())
        table = cls(doc["instance_digest"])
        for entry in doc["entries"]:
            status = SolveStatus(entry["status"])
            obj = math.inf if entry["objective"] is None else float(entry["objective"])
            x = None if entry["x"] is None else np.array([float(v) for v in entry["x"]])
            table._entries[tuple(entry["assignment"])] = LeafResult(status, obj, x)
        return table


@dataclass(frozen=True)
class EscalationSchedule:
    """Thresholds 1 - 0.5 * 0.8^k for rounds k = 0, 1, ...; optionally explicit."""

    max_rounds: int = 10
    fallback: bool = True
    explicit: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("at least one round is required")
        if self.explicit is not None and len(self.explicit) != self.max_rounds:
            raise ValueError("explicit thresholds must match max_rounds")

    def threshold(self, k: int) -> float:
        if not 0 <= k < self.max_rounds:
            raise IndexError(f"round {k} outside schedule")
        if self.explicit is not None:
            return self.explicit[k]
        return 1.0 - 0.5 * 0.8**k

    @classmethod
    def single(cls, threshold: float, fallback: bool = False) -> "EscalationSchedule":
        """One pass at a fixed threshold (data collection, exploration)."""
        return cls(max_rounds=1, fallback=fallback, explicit=(threshold,))


@dataclass(frozen=True)
class VisitRecord:
    """One visited node of a learned search round.

    `decision` is "root" (always expanded), "preserve" or "prune" (classifier
    outcomes), "leaf" (evaluated through the table), or "dominated" (a leaf
    whose objective lower bound cannot beat the incumbent; not solved).
    """

    node: SearchNode
    round_index: int
    decision: str
    objective: float = math.nan

    @property
    def bounds_key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (self.node.bounds.lb, self.node.bounds.ub)


@dataclass
class LearnedResult:
    incumbent: Incumbent
    stats: SearchStats
    visits: list[VisitRecord]
    root_solution: RelaxedSolution | None
    rounds_used: int = 0
    thresholds_used: list[float] = field(default_factory=list)
    fell_back: bool = False
    problem_infeasible: bool = False

    def explored_keys(self, round_index: int | None = None) -> set:
        return {
            v.bounds_key
            for v in self.visits
            if round_index is None or v.round_index == round_index
        }


def _branch_children(node: SearchNode, next_id: int) -> tuple[SearchNode, SearchNode]:
    j = node.bounds.free_indices()[0]
    left_b = node.bounds.with_bounds(j, node.bounds.lb[j], node.bounds.lb[j])
    right_b = node.bounds.with_bounds(j, node.bounds.ub[j], node.bounds.ub[j])
    left = SearchNode(
        id=next_id, parent_id=node.id, depth=node.depth + 1, bounds=left_b,
        branch_var=j, branch_dir="left",
    )
    right = SearchNode(
        id=next_id + 1, parent_id=node.id, depth=node.depth + 1, bounds=right_b,
        branch_var=j, branch_dir="right",
    )
    return left, right


def learned_solve(
    instance: MinlpDefinition,
    policy: PrunePolicy,
    schedule: EscalationSchedule | None = None,
    table: LeafTable | None = None,
    feature_cfg: FeatureConfig | None = None,
    root_solution: RelaxedSolution | None = None,
    child_order: str = "right-first",
    dominance_filter: bool = True,
) -> LearnedResult:
    """Branch-and-bound where the learned policy replaces the pruning rule.

    The root relaxation is solved exactly once per call (or reused when
    passed in); internal nodes are classified, never relaxed; leaves go
    through the table. Binary instances only: branching fixes the
    lowest-index free variable to 0 (left) or 1 (right).

    With `dominance_filter` on, a leaf whose cheap objective lower bound
    already reaches the incumbent is visited but not solved; this never
    changes the returned incumbent, only the number of solver calls.
    """
    if schedule is None:
        schedule = EscalationSchedule()
    if table is None:
        table = LeafTable(instance.instance_id)
    if feature_cfg is None:
        feature_cfg = FeatureConfig()
    if feature_cfg.schema_id != policy.model.schema_id:
        raise ValueError(
            f"policy schema '{policy.model.schema_id}' does not match "
            f"feature config '{feature_cfg.schema_id}'"
        )

    stats = SearchStats()
    root_bounds = instance.root_bounds()
    if any(lo < 0 or hi > 1 for lo, hi in zip(root_bounds.lb, root_bounds.ub)):
        raise ValueError("the learned solver supports binary instances only")
    if root_solution is None:
        root_solution = instance.solve_relaxation(root_bounds)
        stats.relaxations_solved += 1
    if root_solution.status is SolveStatus.INFEASIBLE:
        return LearnedResult(
            Incumbent(), stats, [], root_solution, problem_infeasible=True
        )
    if root_solution.status is SolveStatus.NUMERICAL_FAILURE:
        raise RuntimeError("root relaxation failed numerically")

    incumbent = Incumbent()
    visits: list[VisitRecord] = []
    thresholds_used: list[float] = []
    tree_state = TreeState()
    rounds_used = 0
    # Assignments proven infeasible; with monotone feasibility their whole
    # componentwise down-set is infeasible too, needing no solves.
    infeasible_frontier: list[tuple[int, ...]] = []

    for k in range(schedule.max_rounds):
        threshold = schedule.threshold(k)
        thresholds_used.append(threshold)
        rounds_used = k + 1
        round_policy = PrunePolicy(model=policy.model, threshold=threshold)
        root = SearchNode(id=1, parent_id=None, depth=1, bounds=root_bounds)
        stack = [root]
        next_id = 2
        while stack:
            node = stack.pop()
            stats.nodes_explored += 1
            if node.bounds.is_complete():
                assignment = node.bounds.assignment()
                if (
                    dominance_filter
                    and incumbent.found
                    and instance.leaf_lower_bound(assignment) >= incumbent.objective
                ):
                    visits.append(VisitRecord(node, k, "dominated"))
                    continue
                if dominance_filter and any(
                    all(a <= b for a, b in zip(assignment, known))
                    for known in infeasible_frontier
                ):
                    visits.append(VisitRecord(node, k, "dominated"))
                    continue
                misses_before = table.misses
                leaf = table.lookup_or_solve(assignment, instance)
                stats.relaxations_solved += table.misses - misses_before
                visits.append(VisitRecord(node, k, "leaf", leaf.objective))
                if (
                    leaf.status is SolveStatus.INFEASIBLE
                    and instance.monotone_feasibility
                ):
                    infeasible_frontier.append(assignment)
                if leaf.feasible and leaf.objective < incumbent.objective:
                    incumbent.objective = leaf.objective
                    incumbent.assignment = assignment
                    incumbent.x = leaf.x
                    stats.incumbent_updates.append((node.id, leaf.objective))
                    tree_state.incumbent_objective = leaf.objective
                    tree_state.incumbent_count += 1
                continue
            if node.branch_var is None:
                visits.append(VisitRecord(node, k, "root"))
            else:
                fv = extract_features(node, tree_state, root_solution, instance, feature_cfg)
                if predict(round_policy, fv) == Label.PRUNE:
                    visits.append(VisitRecord(node, k, "prune"))
                    continue
                visits.append(VisitRecord(node, k, "preserve"))
            left, right = _branch_children(node, next_id)
            next_id += 2
            if child_order == "left-first":
                stack.extend([right, left])
            else:
                stack.extend([left, right])
        if incumbent.found:
            break

    fell_back = False
    if not incumbent.found and schedule.fallback:
        fell_back = True
        exact = solve_exact(instance)
        stats.nodes_explored += exact.stats.nodes_explored
        stats.relaxations_solved += exact.stats.relaxations_solved
        incumbent = exact.incumbent
        if exact.problem_infeasible:
            return LearnedResult(
                incumbent, stats, visits, root_solution,
                rounds_used=rounds_used, thresholds_used=thresholds_used,
                fell_back=True, problem_infeasible=True,
            )

    return LearnedResult(
        incumbent=incumbent,
        stats=stats,
        visits=visits,
        root_solution=root_solution,
        rounds_used=rounds_used,
        thresholds_used=thresholds_used,
        fell_back=fell_back,
    )
