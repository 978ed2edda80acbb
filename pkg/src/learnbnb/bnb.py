"""Exact branch-and-bound with exchangeable node / variable selection policies.

The engine certifies optimality through the three standard pruning rules
(bound, infeasibility, integrality) and records a full per-node trace so
that downstream learners can label and replay the search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conic import RelaxedSolution, SolveStatus
from .problems import MinlpDefinition, VarBounds, split_bounds

INTEGRALITY_TOL = 1e-6


class Decision(Enum):
    PRESERVE = "preserve"
    PRUNE_BOUND = "prune-by-bound"
    PRUNE_INFEASIBILITY = "prune-by-infeasibility"
    PRUNE_INTEGRALITY = "prune-by-integrality"
    NUMERICAL_FAILURE = "numerical-failure"


PRUNE_DECISIONS = (
    Decision.PRUNE_BOUND,
    Decision.PRUNE_INFEASIBILITY,
    Decision.PRUNE_INTEGRALITY,
)


@dataclass(frozen=True)
class SearchNode:
    """One node of the search tree; bounds differ from the parent at one variable."""

    id: int
    parent_id: int | None
    depth: int
    bounds: VarBounds
    branch_var: int | None = None
    branch_dir: str | None = None
    parent_objective: float = -math.inf

    def branch_value(self) -> float:
        """Bound imposed on the branch variable (0/1 for binary splits)."""
        if self.branch_var is None or self.branch_dir is None:
            raise ValueError("the root node has no creating branch")
        j = self.branch_var
        return float(self.bounds.lb[j] if self.branch_dir == "right" else self.bounds.ub[j])


@dataclass
class Incumbent:
    """Best integral solution found so far; objective never increases."""

    objective: float = math.inf
    assignment: tuple[int, ...] | None = None
    x: np.ndarray | None = None

    @property
    def found(self) -> bool:
        return self.assignment is not None


@dataclass
class SearchStats:
    nodes_explored: int = 0
    relaxations_solved: int = 0
    incumbent_updates: list[tuple[int, float]] = field(default_factory=list)
    prune_events: list[tuple[int, Decision]] = field(default_factory=list)
    numerical_failures: int = 0

    def prune_count(self, decision: Decision) -> int:
        return sum(1 for _, d in self.prune_events if d is decision)


@dataclass(frozen=True)
class NodeRecord:
    """Trace entry: everything needed to re-derive the node's features and label."""

    node: SearchNode
    status: SolveStatus | None
    objective: float
    decision: Decision

    def to_dict(self) -> dict:
        return {
            "id": self.node.id,
            "parent": self.node.parent_id,
            "depth": self.node.depth,
            "lb": list(self.node.bounds.lb),
            "ub": list(self.node.bounds.ub),
            "branch_var": self.node.branch_var,
            "branch_dir": self.node.branch_dir,
            "status": self.status.value if self.status else None,
            "objective": None if math.isnan(self.objective) else self.objective,
            "decision": self.decision.value,
        }


def trace_to_jsonl(trace: list[NodeRecord]) -> str:
    """Line-delimited structured-text log, one record per explored node."""
    return "\n".join(json.dumps(rec.to_dict()) for rec in trace) + "\n"


@dataclass
class BnbResult:
    incumbent: Incumbent
    stats: SearchStats
    trace: list[NodeRecord]
    root_solution: RelaxedSolution | None
    problem_infeasible: bool = False


def standard_prune_decision(
    node: SearchNode,
    sol: RelaxedSolution,
    incumbent: Incumbent,
    int_values: np.ndarray | None = None,
    int_tol: float = INTEGRALITY_TOL,
) -> Decision:
    """The conservative pruning rule of exact branch-and-bound.

    Infeasibility is treated as an infinite bound; integrality pruning is
    reported only when the node improves on the incumbent (otherwise the
    bound rule already applies). The caller updates the incumbent.
    """
    if sol.status is SolveStatus.INFEASIBLE:
        return Decision.PRUNE_INFEASIBILITY
    if sol.status is SolveStatus.NUMERICAL_FAILURE:
        return Decision.NUMERICAL_FAILURE
    if sol.objective >= incumbent.objective:
        return Decision.PRUNE_BOUND
    values = sol.x if int_values is None else int_values
    if np.all(np.abs(values - np.rint(values)) <= int_tol):
        return Decision.PRUNE_INTEGRALITY
    return Decision.PRESERVE


def select_node(unexplored: list[SearchNode], policy: str) -> SearchNode:
    """Pop the next node: LIFO for depth-first, best parent bound for best-first."""
    if not unexplored:
        raise ValueError("no unexplored nodes to select")
    if policy == "depth-first":
        return unexplored.pop()
    if policy == "best-first":
        best = 0
        for i in range(1, len(unexplored)):
            if unexplored[i].parent_objective < unexplored[best].parent_objective:
                best = i
        return unexplored.pop(best)
    raise ValueError(f"unknown node selection policy '{policy}'")


def select_fractional_variable(
    values: np.ndarray, policy: str = "lowest-index", tol: float = INTEGRALITY_TOL
) -> int:
    """Choose a branching variable among the fractional integer entries."""
    frac = np.minimum(values - np.floor(values), np.ceil(values) - values)
    candidates = np.flatnonzero(frac > tol)
    if candidates.size == 0:
        raise ValueError("no fractional variable to branch on")
    if policy == "lowest-index":
        return int(candidates[0])
    if policy == "most-fractional":
        best = candidates[np.argmax(frac[candidates])]
        # argmax returns the first maximizer, which is already the lowest index.
        return int(best)
    raise ValueError(f"unknown variable selection policy '{policy}'")


def _fallback_pivot(bounds: VarBounds, j: int) -> float:
    mid = (bounds.lb[j] + bounds.ub[j]) / 2.0
    return mid if not float(mid).is_integer() else mid + 0.5


def _make_children(
    node: SearchNode, j: int, pivot: float, next_id: int, parent_objective: float
) -> tuple[SearchNode, SearchNode]:
    left_b, right_b = split_bounds(node.bounds, j, pivot)
    left = SearchNode(
        id=next_id,
        parent_id=node.id,
        depth=node.depth + 1,
        bounds=left_b,
        branch_var=j,
        branch_dir="left",
        parent_objective=parent_objective,
    )
    right = SearchNode(
        id=next_id + 1,
        parent_id=node.id,
        depth=node.depth + 1,
        bounds=right_b,
        branch_var=j,
        branch_dir="right",
        parent_objective=parent_objective,
    )
    return left, right


def solve_exact(
    instance: MinlpDefinition,
    node_policy: str = "depth-first",
    var_policy: str = "lowest-index",
    child_order: str = "right-first",
    int_tol: float = INTEGRALITY_TOL,
) -> BnbResult:
    """Run exact branch-and-bound and return incumbent, statistics, and trace.

    `child_order` controls which child a depth-first search explores first;
    the default explores the upper (a[j]=1) branch first, which finds early
    incumbents in power-minimization families.
    """
    if child_order not in ("left-first", "right-first"):
        raise ValueError(f"unknown child order '{child_order}'")
    incumbent = Incumbent()
    stats = SearchStats()
    trace: list[NodeRecord] = []
    root = SearchNode(id=1, parent_id=None, depth=1, bounds=instance.root_bounds())
    unexplored = [root]
    next_id = 2
    root_solution: RelaxedSolution | None = None

    while unexplored:
        node = select_node(unexplored, node_policy)
        sol = instance.solve_relaxation(node.bounds)
        stats.nodes_explored += 1
        stats.relaxations_solved += 1
        if node.id == 1:
            root_solution = sol
            if sol.status is SolveStatus.INFEASIBLE:
                trace.append(NodeRecord(node, sol.status, sol.objective, Decision.PRUNE_INFEASIBILITY))
                stats.prune_events.append((node.id, Decision.PRUNE_INFEASIBILITY))
                return BnbResult(incumbent, stats, trace, root_solution, problem_infeasible=True)

        int_values = instance.integer_values(sol.x) if sol.is_optimal else None
        decision = standard_prune_decision(node, sol, incumbent, int_values, int_tol)

        if decision is Decision.PRUNE_INTEGRALITY:
            assignment = tuple(int(v) for v in np.rint(int_values))
            incumbent.objective = sol.objective
            incumbent.assignment = assignment
            incumbent.x = sol.x
            stats.incumbent_updates.append((node.id, sol.objective))

        trace.append(NodeRecord(node, sol.status, sol.objective, decision))
        if decision in PRUNE_DECISIONS:
            stats.prune_events.append((node.id, decision))
            continue

        if decision is Decision.NUMERICAL_FAILURE:
            # Conservative: a failed relaxation never prunes a subtree.
            stats.numerical_failures += 1
            free = node.bounds.free_indices()
            if not free:
                continue
            j, pivot = free[0], _fallback_pivot(node.bounds, free[0])
        else:
            j = select_fractional_variable(int_values, var_policy, int_tol)
            pivot = float(int_values[j])

        parent_obj = sol.objective if sol.is_optimal else node.parent_objective
        left, right = _make_children(node, j, pivot, next_id, parent_obj)
        next_id += 2
        if node_policy == "depth-first" and child_order == "left-first":
            unexplored.extend([right, left])
        else:
            unexplored.extend([left, right])

    return BnbResult(incumbent, stats, trace, root_solution)
