"""Belief-space trajectory optimization over discrete latent states.

Core pieces: a latent-belief representation (`poddp.belief`), a problem
definition interface (`poddp.model`), the trajectory-tree solver
(`poddp.solver`), two heuristic baseline planners (`poddp.baselines`),
three driving benchmark scenarios (`poddp.scenarios`) and a seeded
closed-loop evaluation harness (`poddp.harness`).
"""

from .belief import (
    Belief,
    BeliefLogits,
    BeliefState,
    LatentSet,
    bayes_update,
    belief_from_logits,
    logits_from_belief,
)
from .model import DerivativeBundle, ProblemModel, derivative_bundle, numerical_jacobian
from .solver import (
    GainSchedule,
    SolveResult,
    SolverConfig,
    backward_pass,
    evaluate_tree_cost,
    forward_pass,
    optimize_control,
    solve,
)
from .tree import QuadraticValueModel, TrajectoryTree, iterate_depth_first, node_count

__all__ = [
    "Belief",
    "BeliefLogits",
    "BeliefState",
    "LatentSet",
    "bayes_update",
    "belief_from_logits",
    "logits_from_belief",
    "DerivativeBundle",
    "ProblemModel",
    "derivative_bundle",
    "numerical_jacobian",
    "GainSchedule",
    "SolveResult",
    "SolverConfig",
    "backward_pass",
    "evaluate_tree_cost",
    "forward_pass",
    "optimize_control",
    "solve",
    "QuadraticValueModel",
    "TrajectoryTree",
    "iterate_depth_first",
    "node_count",
]
