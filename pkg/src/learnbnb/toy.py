"""A scripted two-variable integer program with a fully known search tree.

The instance maximizes 5.5*x1 + 2.1*x2 over -x1 + x2 <= 2 and
8*x1 + 2*x2 <= 17 with x integer in [0, 5]^2; it is stored negated so the
minimizing engine reproduces the known tree: one integrality prune at
objective -11.8, one bound prune at -11.6875, one infeasibility prune.
`scripted_relaxation` replays the five solved nodes from a fixed table, so
engine tests need no numerical solver at all.
"""

from __future__ import annotations

import numpy as np

from .conic import ConicProgram, RelaxedSolution, SocConstraint, SolveStatus
from .problems import LeafResult, MinlpDefinition, VarBounds

_ROOT_LB = (0, 0)
_ROOT_UB = (5, 5)

# Replay table keyed by (lb, ub); values are (x, objective) or None for an
# infeasible relaxation. Objectives are negated from the maximization form.
_SCRIPT: dict[tuple[tuple[int, ...], tuple[int, ...]], tuple[tuple[float, float], float] | None] = {
    ((0, 0), (5, 5)): ((1.3, 3.3), -14.08),
    ((0, 0), (1, 5)): ((1.0, 3.0), -11.8),
    ((2, 0), (5, 5)): ((2.0, 0.5), -12.05),
    ((2, 0), (5, 0)): ((2.125, 0.0), -11.6875),
    ((2, 1), (5, 5)): None,
}


def scripted_relaxation(bounds: VarBounds) -> RelaxedSolution:
    """Replay the known relaxation result for one of the five scripted nodes."""
    key = (bounds.lb, bounds.ub)
    if key not in _SCRIPT:
        raise KeyError(f"bounds {key} are not part of the scripted tree")
    entry = _SCRIPT[key]
    if entry is None:
        return RelaxedSolution(SolveStatus.INFEASIBLE, None, float("inf"))
    x, objective = entry
    return RelaxedSolution(SolveStatus.OPTIMAL, np.asarray(x, dtype=float), objective)


class ScriptedToyProblem(MinlpDefinition):
    """Two general-integer variables; relaxations replayed from the script."""

    _c = np.array([-5.5, -2.1])

    @property
    def integer_count(self) -> int:
        return 2

    @property
    def instance_id(self) -> str:
        return "toy-two-var"

    def root_bounds(self) -> VarBounds:
        return VarBounds(lb=_ROOT_LB, ub=_ROOT_UB)

    def relax(self, bounds: VarBounds) -> ConicProgram:
        # The true LP behind the script, as degenerate (zero-norm) cones;
        # tests cross-check the replay table against it.
        empty = np.zeros((0, 2))
        return ConicProgram(
            n_vars=2,
            objective=self._c.copy(),
            soc=(
                SocConstraint(F=empty, g=np.zeros(0), e=np.array([1.0, -1.0]), d=2.0),
                SocConstraint(F=empty, g=np.zeros(0), e=np.array([-8.0, -2.0]), d=17.0),
            ),
            rsoc=(),
            lb=np.asarray(bounds.lb, dtype=float),
            ub=np.asarray(bounds.ub, dtype=float),
        )

    def integer_values(self, x: np.ndarray) -> np.ndarray:
        return x

    def solve_relaxation(self, bounds: VarBounds) -> RelaxedSolution:
        return scripted_relaxation(bounds)

    def leaf_evaluate(self, assignment: tuple[int, ...]) -> LeafResult:
        x1, x2 = assignment
        feasible = (-x1 + x2 <= 2) and (8 * x1 + 2 * x2 <= 17) and x1 >= 0 and x2 >= 0
        if not feasible:
            return LeafResult(SolveStatus.INFEASIBLE, float("inf"), None)
        obj = float(self._c @ np.asarray(assignment, dtype=float))
        return LeafResult(SolveStatus.OPTIMAL, obj, np.asarray(assignment, dtype=float))

    def problem_feature(self, j: int) -> np.ndarray:
        return np.zeros(0)
