"""Expected search cost of a randomized pruning policy on a full binary tree.

Model: a policy expands a non-optimal node with probability eps1 and prunes
an optimal node with probability eps2. On an n-layer full binary tree with
one designated optimal root-to-leaf path, `recurrence_ab` gives the expected
number of explored nodes, `recurrence_cd` the expected number of explored
leaves (the only nodes whose relaxations are solved by the learned solver),
and `monte_carlo` simulates the same generative model for cross-checking.

With eps1 <= 0.5 the explored-node count is O(n^2) and the leaf count O(n);
with eps1 <= 1/3 they drop to O(n) and O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed

# Distance from a denominator zero at which the closed form defers to the
# recurrence.
SINGULARITY_GUARD = 1e-3


@dataclass(frozen=True)
class PruneModelParams:
    """(eps1, eps2) pruning-error probabilities and the tree depth n = L + 1."""

    eps1: float
    eps2: float
    n: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps1 <= 1.0 or not 0.0 <= self.eps2 <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.n < 1:
            raise ValueError("tree must have at least one layer")


def recurrence_ab(params: PruneModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Expected explored nodes of optimal-rooted (a) and non-optimal-rooted (b) subtrees.

    a(1) = b(1) = 1;
    b(m) = 2*eps1*b(m-1) + 1;
    a(m) = (1-eps2)*a(m-1) + eps1*b(m-1) + 1.

    Returned arrays are 1-indexed by subtree height: entry [m-1] is height m.
    """
    e1, e2, n = params.eps1, params.eps2, params.n
    a = np.ones(n)
    b = np.ones(n)
    for m in range(1, n):
        b[m] = 2.0 * e1 * b[m - 1] + 1.0
        a[m] = (1.0 - e2) * a[m - 1] + e1 * b[m - 1] + 1.0
    return a, b


@dataclass(frozen=True)
class ClosedFormValue:
    value: float
    by_recurrence: bool  # True when a nearby singularity forced the fallback


def closed_form_a(params: PruneModelParams) -> ClosedFormValue:
    """Closed form of a(n); falls back to the recurrence near its singularities.

    eps2 != 0: a(n) = (1-eps2)^(n-1) * (1 - s2 - s1) + s2 * (2*eps1)^(n-1) + s1
    with s1 = (1-eps1) / (eps2*(1-2*eps1)) and
         s2 = 2*eps1^2 / ((1-2*eps1-eps2)*(1-2*eps1));
    eps2 == 0: a(n) = n + e*(n-1-2*eps1/(1-2*eps1)) + eps1*(2*eps1)^n/(1-2*eps1)^2
    with e = eps1/(1-2*eps1).

    Singular at eps1 = 1/2 and 1-2*eps1-eps2 = 0 (at eps1 = 1/2, eps2 = 0 the
    limit is n + n*(n-1)/4).
    """
    e1, e2, n = params.eps1, params.eps2, params.n
    near_half = abs(1.0 - 2.0 * e1) < SINGULARITY_GUARD
    near_resonance = abs(1.0 - 2.0 * e1 - e2) < SINGULARITY_GUARD
    near_zero_eps2 = 0.0 < e2 < SINGULARITY_GUARD
    if near_half or near_resonance or near_zero_eps2:
        a, _ = recurrence_ab(params)
        return ClosedFormValue(value=float(a[-1]), by_recurrence=True)
    if e2 == 0.0:
        e = e1 / (1.0 - 2.0 * e1)
        value = n + e * (n - 1.0 - 2.0 * e1 / (1.0 - 2.0 * e1)) + e1 * (2.0 * e1) ** n / (
            1.0 - 2.0 * e1
        ) ** 2
    else:
        s1 = (1.0 - e1) / (e2 * (1.0 - 2.0 * e1))
        s2 = 2.0 * e1**2 / ((1.0 - 2.0 * e1 - e2) * (1.0 - 2.0 * e1))
        value = (1.0 - e2) ** (n - 1) * (1.0 - s2 - s1) + s2 * (2.0 * e1) ** (n - 1) + s1
    return ClosedFormValue(value=float(value), by_recurrence=False)


def a_limit_half(n: int) -> float:
    """Limit of the eps2 = 0 closed form as eps1 -> 1/2: n + n*(n-1)/4."""
    return n + n * (n - 1) / 4.0


def a_quadratic_variant(n: int) -> float:
    """Alternative quadratic form 0.5*(n-1)^2 + n for the eps1 = 1/2, eps2 = 0 case.

    Differs from `a_limit_half` for n >= 3 (both are Theta(n^2)); reported
    alongside it, never asserted against the recurrence.
    """
    return 0.5 * (n - 1) ** 2 + n


def recurrence_cd(params: PruneModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Expected explored leaves (= leaf relaxations solved) of the two subtree kinds.

    c(1) = d(1) = 1; d(m) = 2*eps1*d(m-1); c(m) = (1-eps2)*c(m-1) + eps1*d(m-1).
    """
    e1, e2, n = params.eps1, params.eps2, params.n
    c = np.ones(n)
    d = np.ones(n)
    for m in range(1, n):
        d[m] = 2.0 * e1 * d[m - 1]
        c[m] = (1.0 - e2) * c[m - 1] + e1 * d[m - 1]
    return c, d


def leaf_count_bound(eps1: float, n: int) -> float:
    """Upper bound 1 + eps1*(1-(2*eps1)^(n-1))/(1-2*eps1) on c(n); equals c(n) at eps2 = 0.

    The eps1 = 1/2 limit is 1 + 0.5*(n-1), hence c(L+1) <= 1 + eps1*L.
    """
    if n < 2:
        return 1.0
    if abs(1.0 - 2.0 * eps1) < SINGULARITY_GUARD:
        return 1.0 + 0.5 * (n - 1)
    return 1.0 + eps1 * (1.0 - (2.0 * eps1) ** (n - 1)) / (1.0 - 2.0 * eps1)


@dataclass(frozen=True)
class MonteCarloResult:
    mean_explored: float
    mean_leaves: float
    se_explored: float
    se_leaves: float
    trials: int


def monte_carlo(params: PruneModelParams, trials: int, seed: int) -> MonteCarloResult:
    """Simulate the randomized pruning model and return sample means with standard errors.

    The root is always explored; each child of an explored node is explored
    independently with probability (1-eps2) if it lies on the optimal path
    and eps1 otherwise. Trials are vectorized level by level: the off-path
    explored population is a branching process with Binomial(2z, eps1)
    offspring, plus one potential defector from the surviving optimal chain.
    """
    if trials < 1:
        raise ValueError("at least one trial is required")
    e1, e2, n = params.eps1, params.eps2, params.n
    rng = np.random.default_rng(derive_seed(seed, "monte-carlo", e1, e2, n))

    alive = np.ones(trials, dtype=bool)  # optimal-chain node explored at this depth
    z = np.zeros(trials, dtype=np.int64)  # non-optimal explored nodes at this depth
    explored = np.ones(trials, dtype=np.int64)
    for _depth in range(2, n + 1):
        z_next = rng.binomial(2 * z, e1)
        z_next += alive & (rng.random(trials) < e1)
        alive = alive & (rng.random(trials) < 1.0 - e2)
        z = z_next
        explored += z + alive
    leaves = z + alive if n > 1 else np.ones(trials, dtype=np.int64)

    def mean_se(x: np.ndarray) -> tuple[float, float]:
        mean = float(np.mean(x))
        se = float(np.std(x, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        return mean, se

    mean_explored, se_explored = mean_se(explored)
    mean_leaves, se_leaves = mean_se(leaves)
    return MonteCarloResult(mean_explored, mean_leaves, se_explored, se_leaves, trials)


def comparison_table(
    eps1_grid, eps2_grid, n: int, trials: int, seed: int
) -> list[dict[str, float]]:
    """Analytic vs simulated expectations over a parameter grid, as table rows."""
    rows = []
    for e1 in eps1_grid:
        for e2 in eps2_grid:
            params = PruneModelParams(eps1=float(e1), eps2=float(e2), n=n)
            a, _ = recurrence_ab(params)
            c, _ = recurrence_cd(params)
            mc = monte_carlo(params, trials, seed)
            rows.append(
                {
                    "eps1": float(e1),
                    "eps2": float(e2),
                    "n": n,
                    "analytic_explored": float(a[-1]),
                    "simulated_explored": mc.mean_explored,
                    "se_explored": mc.se_explored,
                    "analytic_leaves": float(c[-1]),
                    "simulated_leaves": mc.mean_leaves,
                    "se_leaves": mc.se_leaves,
                }
            )
    return rows
