"""Meshfree dynamic programming with Shepard (moving least squares) approximation.

The value function of a discrete-time optimal control problem is computed by
value iteration on the Kruzkov-transformed Bellman operator, projected after
every step onto the span of Shepard basis functions built from compactly
supported radial kernels.
"""

from shepard_dp.kernels import ShapeFunction, eval_shape, sigma_from_fill, support_radius
from shepard_dp.geometry import BoxDomain, NodeSet, ObstacleMask, grid_nodes, radius_neighbors
from shepard_dp.approximation import ShepardMatrix, interpolate, shepard_apply, shepard_matrix
from shepard_dp.problems import ControlProblem, Trajectory, make_problem
from shepard_dp.solver import (
    SolveReport,
    TransitionTable,
    assemble_transitions,
    Solution,
    bellman_apply,
    solve,
    to_value,
    value_iteration,
)
from shepard_dp.feedback import FeedbackPolicy, bellman_residual, check_decay, closed_loop, feedback_control
from shepard_dp.pgm import load_obstacle_map
from shepard_dp.config import RunConfig, load_config

__all__ = [
    "BoxDomain",
    "ControlProblem",
    "FeedbackPolicy",
    "NodeSet",
    "ObstacleMask",
    "ShapeFunction",
    "RunConfig",
    "ShepardMatrix",
    "Solution",
    "SolveReport",
    "Trajectory",
    "TransitionTable",
    "assemble_transitions",
    "bellman_apply",
    "bellman_residual",
    "check_decay",
    "closed_loop",
    "eval_shape",
    "feedback_control",
    "grid_nodes",
    "interpolate",
    "load_config",
    "load_obstacle_map",
    "make_problem",
    "radius_neighbors",
    "shepard_apply",
    "shepard_matrix",
    "sigma_from_fill",
    "solve",
    "support_radius",
    "to_value",
    "value_iteration",
]
