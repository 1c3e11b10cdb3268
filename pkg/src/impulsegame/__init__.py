"""Finite-horizon minimax impulse-control game solver.

Backward semi-Lagrangian schemes for two-player games where a drift
player maximises the payoff and an impulse player minimises it by
displacing the state at strictly positive cost.  See the README for the
file format, CLI and verification suite.
"""

from .expr import ExprError, evaluate, free_vars, parse
from .grid import Grid, TimeMesh, ValueField, interp, node_state, time_slice
from .impulse import JumpResult, best_jump, best_jump_scaled, terminal_values
from .kernels import active_backend
from .oracle import OracleSettings, oracle_field, oracle_value
from .policy import (
    FeedbackPolicy,
    Trajectory,
    extract_policy,
    simulate,
    trajectory_divergence_check,
)
from .problem import (
    ProblemError,
    ProblemSpec,
    ValidationReport,
    builtin,
    builtin_text,
    load_problem,
    validate,
)
from .solver import (
    ConvergenceError,
    ResidualStats,
    SolveReport,
    SolveSettings,
    SolverError,
    backward_step,
    cfl_ratio,
    qvi_residual,
    solve_no_jump,
    solve_qvi,
    solve_qvi_scaled,
    solve_stopping_iterates,
)

__version__ = "0.1.0"

__all__ = [
    "ExprError", "parse", "evaluate", "free_vars",
    "Grid", "TimeMesh", "ValueField", "interp", "node_state", "time_slice",
    "JumpResult", "best_jump", "best_jump_scaled", "terminal_values",
    "active_backend",
    "OracleSettings", "oracle_field", "oracle_value",
    "FeedbackPolicy", "Trajectory", "extract_policy", "simulate",
    "trajectory_divergence_check",
    "ProblemError", "ProblemSpec", "ValidationReport", "builtin",
    "builtin_text", "load_problem", "validate",
    "SolverError", "ConvergenceError", "SolveSettings", "SolveReport",
    "ResidualStats", "solve_no_jump", "solve_qvi", "solve_qvi_scaled",
    "solve_stopping_iterates", "qvi_residual", "backward_step", "cfl_ratio",
    "__version__",
]
