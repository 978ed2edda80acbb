"""Classifier inputs built from tree state, branching data, and problem hooks.

The default layout needs nothing beyond the root relaxation, which is what
lets the learned solver skip every internal-node SOCP. Objective-derived
entries are normalized by the root objective so features are invariant to
rescaling the instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bnb import SearchNode
from .conic import RelaxedSolution
from .problems import MinlpDefinition

ROOT_ONLY = "root-only"
FULL = "full"


@dataclass(frozen=True)
class FeatureConfig:
    """Which feature groups are built and how long the vector is."""

    mode: str = ROOT_ONLY
    include_tree_features: bool = False
    problem_feature_len: int = 1

    def __post_init__(self) -> None:
        if self.mode not in (ROOT_ONLY, FULL):
            raise ValueError(f"unknown feature mode '{self.mode}'")
        if self.problem_feature_len < 0:
            raise ValueError("problem_feature_len must be >= 0")

    @property
    def schema_id(self) -> str:
        return f"v1:{self.mode}:tree{int(self.include_tree_features)}:pf{self.problem_feature_len}"

    @property
    def length(self) -> int:
        n = 2 + self.problem_feature_len
        if self.include_tree_features:
            n += 3
        if self.mode == FULL:
            n += 3
        return n


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_id: str


@dataclass
class TreeState:
    """Search-tree summary available to the tree-feature group."""

    incumbent_objective: float | None = None
    incumbent_count: int = 0


def normalize_objective(z: float, z_root: float) -> float:
    """Objective value in units of the root relaxation objective."""
    if z_root == 0.0:
        raise ValueError("root objective is zero; instance is degenerate")
    return z / z_root


def extract_features(
    node: SearchNode,
    tree_state: TreeState,
    root_sol: RelaxedSolution,
    instance: MinlpDefinition,
    cfg: FeatureConfig,
    node_sol: RelaxedSolution | None = None,
    parent_sol: RelaxedSolution | None = None,
) -> FeatureVector:
    """Feature vector of a non-root node.

    Root-only layout: [branch direction value, root relaxation value of the
    branch variable, problem features of that variable]; optionally extended
    with tree features and, in full mode, with per-node relaxation features.
    """
    if node.branch_var is None:
        raise ValueError("the root node is never classified and has no features")
    j = node.branch_var
    a_root = instance.integer_values(root_sol.x)
    z_root = root_sol.objective
    if z_root == 0.0:
        raise ValueError("root objective is zero; instance is degenerate")

    values = [node.branch_value(), float(a_root[j])]
    pf = instance.problem_feature(j)
    if len(pf) != cfg.problem_feature_len:
        raise ValueError(
            f"instance provides {len(pf)} problem features, schema expects {cfg.problem_feature_len}"
        )
    values.extend(float(v) for v in pf)

    if cfg.include_tree_features:
        depth_norm = node.depth / instance.integer_count
        if tree_state.incumbent_objective is None:
            incumbent_norm = 0.0  # sentinel; the count feature disambiguates
        else:
            incumbent_norm = normalize_objective(tree_state.incumbent_objective, z_root)
        values.extend([depth_norm, incumbent_norm, float(tree_state.incumbent_count)])

    if cfg.mode == FULL:
        if node_sol is None or node_sol.x is None:
            raise ValueError("full mode requires the node's own relaxation solution")
        if parent_sol is None or parent_sol.x is None:
            raise ValueError("full mode requires the parent's relaxation solution")
        a_parent = instance.integer_values(parent_sol.x)
        values.extend(
            [
                normalize_objective(node_sol.objective, z_root),
                float(a_parent[j]),
                float(a_root[j]),
            ]
        )

    vec = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(vec)):
        raise ValueError("feature vector contains NaN or Inf")
    return FeatureVector(values=vec, schema_id=cfg.schema_id)
