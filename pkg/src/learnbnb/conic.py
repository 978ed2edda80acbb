"""Second-order cone programs and the solver behind every node relaxation.

Everything the search engine ever asks of continuous optimization goes
through `solve_conic`, so the backend (Clarabel interior-point) stays
swappable and countable.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum

import clarabel
import numpy as np
from scipy import sparse

# Contract tolerances for an "optimal" answer (relative residual / gap).
FEAS_TOL = 1e-6
GAP_TOL = 1e-6

# Solver working tolerances sit well below the contract so that a clean
# "Solved" status certifies the contract with margin.
_SOLVER_TOL = 1e-8


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SocConstraint:
    """||F x + g||_2 <= e.x + d."""

    F: np.ndarray
    g: np.ndarray
    e: np.ndarray
    d: float


@dataclass(frozen=True)
class RotatedSocConstraint:
    """||F x + g||^2 <= (p.x + q) * (r.x + s), with both factors >= 0."""

    F: np.ndarray
    g: np.ndarray
    p: np.ndarray
    q: float
    r: np.ndarray
    s: float


@dataclass(frozen=True)
class ConicProgram:
    """Minimize c.x over second-order cone and box constraints."""

    n_vars: int
    objective: np.ndarray
    soc: tuple[SocConstraint, ...]
    rsoc: tuple[RotatedSocConstraint, ...]
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self) -> None:
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length does not match n_vars")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective must be finite")
        for con in self.soc:
            if con.F.shape[1] != self.n_vars or con.e.shape != (self.n_vars,):
                raise ValueError("SOC constraint dimension mismatch")
        for con in self.rsoc:
            if con.F.shape[1] != self.n_vars:
                raise ValueError("rotated SOC constraint dimension mismatch")


@dataclass(frozen=True)
class RelaxedSolution:
    """Outcome of one conic solve.

    `objective` is +inf for an infeasible program and NaN after a numerical
    failure; callers must treat the two outcomes differently.
    """

    status: SolveStatus
    x: np.ndarray | None
    objective: float

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass(frozen=True)
class ResidualReport:
    """Worst-case constraint and bound violations of a primal point."""

    cone_violation: float
    box_violation: float

    @property
    def max_violation(self) -> float:
        return max(self.cone_violation, self.box_violation)


_count_lock = threading.Lock()
_solve_count = 0


def total_solves() -> int:
    """Number of conic solves performed by this process (for audits)."""
    return _solve_count


def _bump_solve_count() -> None:
    global _solve_count
    with _count_lock:
        _solve_count += 1


def _assemble(prog: ConicProgram):
    """Lower a ConicProgram to Clarabel's `Ax + s = b, s in K` form."""
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    cones = []

    # Box bounds and degenerate (zero-norm) cones populate one nonneg block.
    n_lin = 0
    for i in range(prog.n_vars):
        if np.isfinite(prog.ub[i]):
            row = np.zeros(prog.n_vars)
            row[i] = 1.0
            rows.append(row)
            rhs.append(float(prog.ub[i]))
            n_lin += 1
        if np.isfinite(prog.lb[i]):
            row = np.zeros(prog.n_vars)
            row[i] = -1.0
            rows.append(row)
            rhs.append(float(-prog.lb[i]))
            n_lin += 1
    for con in prog.soc:
        if con.F.shape[0] == 0:
            # ||()|| <= e.x+d is the linear inequality 0 <= e.x+d.
            rows.append(-con.e)
            rhs.append(float(con.d))
            n_lin += 1
    if n_lin:
        cones.append(clarabel.NonnegativeConeT(n_lin))

    # ||Fx+g|| <= e.x+d  becomes  (e.x+d, Fx+g) in SOC.
    for con in prog.soc:
        if con.F.shape[0] == 0:
            continue
        rows.append(-con.e)
        rhs.append(float(con.d))
        for k in range(con.F.shape[0]):
            rows.append(-con.F[k])
            rhs.append(float(con.g[k]))
        cones.append(clarabel.SecondOrderConeT(con.F.shape[0] + 1))

    # ||Fx+g||^2 <= u*v  becomes  (u+v, u-v, 2Fx+2g) in SOC.
    for con in prog.rsoc:
        rows.append(-(con.p + con.r))
        rhs.append(float(con.q + con.s))
        rows.append(-(con.p - con.r))
        rhs.append(float(con.q - con.s))
        for k in range(con.F.shape[0]):
            rows.append(-2.0 * con.F[k])
            rhs.append(float(2.0 * con.g[k]))
        cones.append(clarabel.SecondOrderConeT(con.F.shape[0] + 2))

    A = sparse.csc_matrix(np.asarray(rows)) if rows else sparse.csc_matrix((0, prog.n_vars))
    b = np.asarray(rhs, dtype=float)
    return A, b, cones


def _run_clarabel(prog: ConicProgram, tol: float):
    A, b, cones = _assemble(prog)
    P = sparse.csc_matrix((prog.n_vars, prog.n_vars))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    solver = clarabel.DefaultSolver(P, prog.objective, A, b, cones, settings)
    return solver.solve()


def solve_conic(prog: ConicProgram) -> RelaxedSolution:
    """Solve a conic program, reporting infeasibility as a status, never an exception.

    A numerical failure is retried once with 10x looser tolerances before
    being surfaced as NUMERICAL_FAILURE.
    """
    _bump_solve_count()
    for tol in (_SOLVER_TOL, 10.0 * _SOLVER_TOL):
        result = _run_clarabel(prog, tol)
        status = str(result.status)
        if status == "Solved":
            return RelaxedSolution(SolveStatus.OPTIMAL, np.asarray(result.x), float(result.obj_val))
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return RelaxedSolution(SolveStatus.INFEASIBLE, None, float("inf"))
        if status == "AlmostSolved":
            # Accept reduced-accuracy answers only if they still satisfy the
            # residual contract.
            candidate = RelaxedSolution(
                SolveStatus.OPTIMAL, np.asarray(result.x), float(result.obj_val)
            )
            report = validate_solution(prog, candidate)
            scale = 1.0 + float(np.max(np.abs(candidate.x)))
            if report.max_violation <= FEAS_TOL * scale:
                return candidate
        # Anything else falls through to the looser retry.
    return RelaxedSolution(SolveStatus.NUMERICAL_FAILURE, None, float("nan"))


def validate_solution(prog: ConicProgram, sol: RelaxedSolution) -> ResidualReport:
    """Recompute constraint residuals of an optimal solution by direct substitution."""
    if sol.status is not SolveStatus.OPTIMAL:
        raise ValueError("validate_solution requires an optimal solution")
    x = sol.x
    cone_viol = 0.0
    for con in prog.soc:
        lhs = float(np.linalg.norm(con.F @ x + con.g))
        rhs = float(con.e @ x + con.d)
        cone_viol = max(cone_viol, lhs - rhs)
    for con in prog.rsoc:
        lhs = float(np.sum((con.F @ x + con.g) ** 2))
        u = float(con.p @ x + con.q)
        v = float(con.r @ x + con.s)
        cone_viol = max(cone_viol, lhs - u * v, -u, -v)
    box_viol = 0.0
    finite_lb = np.isfinite(prog.lb)
    finite_ub = np.isfinite(prog.ub)
    if np.any(finite_lb):
        box_viol = max(box_viol, float(np.max(prog.lb[finite_lb] - x[finite_lb])))
    if np.any(finite_ub):
        box_viol = max(box_viol, float(np.max(x[finite_ub] - prog.ub[finite_ub])))
    return ResidualReport(cone_violation=max(cone_viol, 0.0), box_violation=max(box_viol, 0.0))
