"""Sparse group lasso penalized quantile regression via dual ADMM."""

from .estimator import SparseGroupLassoQuantileRegressor
from .linalg import (
    IterativeSolveError,
    SystemOperator,
    build_system_operator,
    center_columns,
    solve_system,
)
from .model import (
    FittedModel,
    GroupPartition,
    PenaltySpec,
    QuantileProblem,
    check_loss,
    default_weights,
    penalty_from_alpha,
    primal_objective,
    sample_quantile,
)
from .path import (
    SolutionPath,
    adaptive_weights,
    lambda_grid,
    lambda_max,
    solve_path,
)
from .prox import (
    ProxPenalty,
    box_project,
    group_soft_threshold,
    prox_h,
    prox_h_conjugate_step,
    soft_threshold,
)
from .simulate import (
    BenchmarkConfig,
    MetricReport,
    SimSpec,
    compute_metrics,
    gen_poly_design,
    gen_timing_design,
    run_benchmark,
)
from .solver import (
    ConvergenceReport,
    DivergenceError,
    SolverConfig,
    SolverState,
    constraint_residual_sq,
    init_state,
    iterate_once,
    kkt_residual,
    merit_value,
    residuals,
    sgl_dadmm_solve,
)

__version__ = "0.1.0"

__all__ = [
    "SparseGroupLassoQuantileRegressor",
    "GroupPartition",
    "QuantileProblem",
    "PenaltySpec",
    "FittedModel",
    "check_loss",
    "primal_objective",
    "penalty_from_alpha",
    "sample_quantile",
    "default_weights",
    "ProxPenalty",
    "box_project",
    "soft_threshold",
    "group_soft_threshold",
    "prox_h",
    "prox_h_conjugate_step",
    "SystemOperator",
    "IterativeSolveError",
    "build_system_operator",
    "solve_system",
    "center_columns",
    "SolverConfig",
    "SolverState",
    "ConvergenceReport",
    "DivergenceError",
    "init_state",
    "iterate_once",
    "residuals",
    "kkt_residual",
    "sgl_dadmm_solve",
    "constraint_residual_sq",
    "merit_value",
    "SolutionPath",
    "lambda_max",
    "lambda_grid",
    "solve_path",
    "adaptive_weights",
    "SimSpec",
    "MetricReport",
    "BenchmarkConfig",
    "gen_timing_design",
    "gen_poly_design",
    "compute_metrics",
    "run_benchmark",
]
