"""Learned-pruning branch-and-bound for binary mixed-integer SOCPs."""

from .bnb import (
    BnbResult,
    Decision,
    Incumbent,
    SearchNode,
    SearchStats,
    select_fractional_variable,
    select_node,
    solve_exact,
    standard_prune_decision,
)
from .conic import (
    ConicProgram,
    RelaxedSolution,
    RotatedSocConstraint,
    SocConstraint,
    SolveStatus,
    solve_conic,
    validate_solution,
)
from .cran import (
    CranConfig,
    CranInstance,
    build_node_relaxation,
    exhaustive_oracle,
    generate_feasible_instance,
    generate_instance,
    gsbf,
    network_power,
    rminlp,
)
from .features import FeatureConfig, FeatureVector, TreeState, extract_features, normalize_objective
from .learned import EscalationSchedule, LeafTable, LearnedResult, learned_solve
from .mlp import (
    ClassWeights,
    Label,
    MlpModel,
    PrunePolicy,
    forward,
    init_model,
    load_policy,
    predict,
    save_policy,
    train,
    weighted_ce_loss,
)
from .problems import (
    InfeasibleInstanceError,
    LeafResult,
    MinlpDefinition,
    NodeProblem,
    VarBounds,
    branch_partition,
    is_complete,
    split_bounds,
)
from .toy import ScriptedToyProblem, scripted_relaxation

__version__ = "0.1.0"
