"""Problem and node vocabulary shared by every solver in the package.

A problem family implements `MinlpDefinition`; the engines only ever see
integer boxes (`VarBounds`) and relaxation results, so the same search code
drives both the scripted toy problem and the Cloud-RAN family.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram, RelaxedSolution, SolveStatus, solve_conic


class InfeasibleInstanceError(RuntimeError):
    """Raised when a problem instance admits no feasible assignment."""


@dataclass(frozen=True)
class VarBounds:
    """Integer box bounds, one (lb, ub) pair per integer variable."""

    lb: tuple[int, ...]
    ub: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.lb) != len(self.ub):
            raise ValueError("lb and ub must have equal length")
        for lo, hi in zip(self.lb, self.ub):
            if lo > hi:
                raise ValueError(f"empty bound interval [{lo}, {hi}]")

    @classmethod
    def binary(cls, n: int) -> "VarBounds":
        return cls(lb=(0,) * n, ub=(1,) * n)

    @classmethod
    def fixed(cls, assignment: tuple[int, ...]) -> "VarBounds":
        return cls(lb=tuple(assignment), ub=tuple(assignment))

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    def is_complete(self) -> bool:
        return all(lo == hi for lo, hi in zip(self.lb, self.ub))

    def assignment(self) -> tuple[int, ...]:
        if not self.is_complete():
            raise ValueError("bounds are not complete")
        return self.lb

    def free_indices(self) -> list[int]:
        return [j for j in range(self.n_vars) if self.lb[j] < self.ub[j]]

    def contains(self, assignment: tuple[int, ...] | np.ndarray) -> bool:
        if len(assignment) != self.n_vars:
            raise ValueError("assignment length mismatch")
        return all(lo <= v <= hi for lo, hi, v in zip(self.lb, self.ub, assignment))

    def with_bounds(self, j: int, lo: int, hi: int) -> "VarBounds":
        lb = list(self.lb)
        ub = list(self.ub)
        lb[j], ub[j] = lo, hi
        return VarBounds(lb=tuple(lb), ub=tuple(ub))


@dataclass(frozen=True)
class NodeProblem:
    """A subproblem of one instance: the instance plus tightened bounds."""

    bounds: VarBounds
    instance_id: str


def split_bounds(bounds: VarBounds, j: int, pivot: float) -> tuple[VarBounds, VarBounds]:
    """Partition an integer box at a fractional pivot of variable j.

    Left child gets ub[j] = floor(pivot), right child gets lb[j] = ceil(pivot);
    together the children cover the parent lattice exactly once.
    """
    if not 0 <= j < bounds.n_vars:
        raise IndexError(f"variable index {j} out of range")
    if bounds.lb[j] == bounds.ub[j]:
        raise ValueError(f"variable {j} is already fixed")
    if not bounds.lb[j] <= pivot <= bounds.ub[j]:
        raise ValueError(f"pivot {pivot} outside [{bounds.lb[j]}, {bounds.ub[j]}]")
    if float(pivot).is_integer():
        raise ValueError("pivot must be strictly fractional")
    left = bounds.with_bounds(j, bounds.lb[j], math.floor(pivot))
    right = bounds.with_bounds(j, math.ceil(pivot), bounds.ub[j])
    return left, right


def branch_partition(node: NodeProblem, j: int, pivot: float) -> tuple[NodeProblem, NodeProblem]:
    """Split a node's feasible set into two child subproblems."""
    left, right = split_bounds(node.bounds, j, pivot)
    return (
        NodeProblem(bounds=left, instance_id=node.instance_id),
        NodeProblem(bounds=right, instance_id=node.instance_id),
    )


def is_complete(node: NodeProblem) -> bool:
    """True when every integer variable of the node is fixed."""
    return node.bounds.is_complete()


@dataclass(frozen=True)
class LeafResult:
    """Continuous solve over a complete assignment: objective and solution, or infeasible."""

    status: SolveStatus
    objective: float
    x: np.ndarray | None

    @property
    def feasible(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class MinlpDefinition(abc.ABC):
    """Contract a problem family implements to be solvable by the engines.

    Implementations must be stateless with respect to `relax` and
    `leaf_evaluate` so that instances can be shared across workers.
    """

    @property
    @abc.abstractmethod
    def integer_count(self) -> int:
        """Number of integer variables."""

    @property
    @abc.abstractmethod
    def instance_id(self) -> str:
        """Opaque identifier (digest) for table keying and provenance."""

    def root_bounds(self) -> VarBounds:
        return VarBounds.binary(self.integer_count)

    @abc.abstractmethod
    def relax(self, bounds: VarBounds) -> ConicProgram:
        """Continuous relaxation of the subproblem restricted to `bounds`."""

    @abc.abstractmethod
    def integer_values(self, x: np.ndarray) -> np.ndarray:
        """Extract the integer-variable block from a relaxation primal vector."""

    def solve_relaxation(self, bounds: VarBounds) -> RelaxedSolution:
        return solve_conic(self.relax(bounds))

    @abc.abstractmethod
    def leaf_evaluate(self, assignment: tuple[int, ...]) -> LeafResult:
        """Solve the continuous problem with all integer variables fixed."""

    def leaf_lower_bound(self, assignment: tuple[int, ...]) -> float:
        """Cheap lower bound on a leaf's objective, computed without a solve.

        Used to skip leaf evaluations that provably cannot improve an
        incumbent. The default is vacuous.
        """
        return -math.inf

    @property
    def monotone_feasibility(self) -> bool:
        """True when raising any integer variable can only enlarge the feasible set.

        Lets searches infer a leaf's infeasibility from an already-solved leaf
        that dominates it componentwise.
        """
        return False

    @abc.abstractmethod
    def problem_feature(self, j: int) -> np.ndarray:
        """Problem-dependent feature slots for integer variable j."""
