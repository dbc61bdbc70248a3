"""Regularization paths: penalty ceiling, grids, warm starts, adaptive weights.

``lambda_max`` computes the smallest common penalty level at which the
zero coefficient vector is guaranteed optimal, from the worst-case check
loss subgradient at the intercept-only fit. With r_i = y_i - q_tau(y)
and Z = {i : r_i = 0}, the per-coordinate bound is

    s_j = | (2 tau - 1)/(2n) sum_i x_ij + 1/(2n) sum_{i not in Z} sgn(r_i) x_ij |
          + 1/(2n) sum_{i in Z} |x_ij|

and per group the same expression with the inner sums taken as vectors
over the group and absolute values replaced by Euclidean norms. The
ceiling is max_j s_j / d_j for the pure elementwise penalty, the group
analogue for the pure group penalty, and the minimum of the two scaled
maxima for a mixed split. The value can exceed the true critical level
(the Z rows are bounded worst-case), but the zero guarantee is exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .linalg import build_system_operator
from .model import (
    FittedModel,
    GroupPartition,
    QuantileProblem,
    default_weights,
    penalty_from_alpha,
    sample_quantile,
)
from .solver import ConvergenceReport, SolverConfig, sgl_dadmm_solve

__all__ = [
    "SolutionPath",
    "lambda_max",
    "lambda_grid",
    "solve_path",
    "adaptive_weights",
    "default_min_ratio",
]

_ZERO_RESID_RTOL = 1e-12


@dataclass
class SolutionPath:
    """Per-lambda fits and diagnostics along a descending grid."""

    alpha: float
    lambdas: np.ndarray
    models: list[FittedModel]
    reports: list[ConvergenceReport]
    wall_time_s: float = 0.0

    def coef_matrix(self) -> np.ndarray:
        """Rows are path points; first column intercept, then coefficients."""
        return np.array([np.concatenate(([m.beta0], m.beta)) for m in self.models])


def _subgradient_scores(problem: QuantileProblem) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate and per-group worst-case subgradient magnitudes."""
    X, y, tau = problem.X, problem.y, problem.tau
    n = problem.n
    r = y - sample_quantile(y, tau)
    zero_tol = _ZERO_RESID_RTOL * max(1.0, float(np.max(np.abs(y))))
    in_z = np.abs(r) <= zero_tol
    signs = np.where(in_z, 0.0, np.sign(r))

    base = X.T @ ((2.0 * tau - 1.0) / (2.0 * n) + signs / (2.0 * n))
    coord = np.abs(base)

    part = problem.groups
    grp = part.group_norms(base)
    if in_z.any():
        coord = coord + np.abs(X[in_z]).sum(axis=0) / (2.0 * n)
        onehot = np.zeros((part.p, part.count))
        onehot[np.arange(part.p), part.labels] = 1.0
        row_group_norms = np.sqrt(np.square(X[in_z]) @ onehot)
        grp = grp + row_group_norms.sum(axis=0) / (2.0 * n)
    return coord, grp


def lambda_max(problem: QuantileProblem, alpha: float, d=None, w=None) -> float:
    """Smallest common penalty level guaranteeing an all-zero solution."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if d is None or w is None:
        dd, ww = default_weights(problem.groups)
        d = dd if d is None else np.asarray(d, dtype=float)
        w = ww if w is None else np.asarray(w, dtype=float)
    else:
        d = np.asarray(d, dtype=float)
        w = np.asarray(w, dtype=float)

    coord, grp = _subgradient_scores(problem)

    lam_coord = None
    if alpha < 1.0:
        active = d != 0
        if not active.any():
            raise ValueError("all elementwise weights are zero; the elementwise ceiling is undefined")
        lam_coord = float(np.max(coord[active] / d[active]))
    lam_grp = None
    if alpha > 0.0:
        active = w != 0
        if not active.any():
            raise ValueError("all group weights are zero; the group ceiling is undefined")
        lam_grp = float(np.max(grp[active] / w[active]))

    if alpha == 0.0:
        return lam_coord
    if alpha == 1.0:
        return lam_grp
    return min(lam_coord / (1.0 - alpha), lam_grp / alpha)


def default_min_ratio(problem: QuantileProblem) -> float:
    """Grid floor ratio: 0.05 in the p > n regime, 0.001 otherwise."""
    return 0.05 if problem.p > problem.n else 0.001


def lambda_grid(lambda_max_value: float, count: int = 100, min_ratio: float = 0.05) -> np.ndarray:
    """Log-spaced descending grid from lambda_max down to min_ratio * lambda_max."""
    if count < 2:
        raise ValueError(f"count must be at least 2, got {count}")
    if not 0.0 < min_ratio < 1.0:
        raise ValueError(f"min_ratio must lie in (0, 1), got {min_ratio}")
    if lambda_max_value <= 0:
        raise ValueError(f"lambda_max_value must be positive, got {lambda_max_value}")
    return np.geomspace(lambda_max_value, min_ratio * lambda_max_value, count)


def solve_path(
    problem: QuantileProblem,
    alpha: float,
    d,
    w,
    grid,
    config: SolverConfig | None = None,
) -> SolutionPath:
    """Warm-started fits along a strictly decreasing grid of penalty levels.

    The linear-system factorization is built once and shared by every
    path point; each fit starts from the previous point's final state.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if grid.size > 1 and not np.all(np.diff(grid) < 0):
        raise ValueError("grid must be strictly decreasing")
    if config is None:
        config = SolverConfig()

    op = build_system_operator(problem.X, config.strategy, cg_tol=config.cg_tol,
                               cg_max_iters=config.cg_max_iters)
    models: list[FittedModel] = []
    reports: list[ConvergenceReport] = []
    state = None
    start = time.perf_counter()
    for lam_common in grid:
        penalty = penalty_from_alpha(alpha, float(lam_common), d, w)
        try:
            model, report, state = sgl_dadmm_solve(problem, penalty, config,
                                                   warm_start=state, op=op)
        except Exception as exc:
            raise RuntimeError(f"path fit failed at lambda={lam_common:g}") from exc
        models.append(model)
        reports.append(report)
    elapsed = time.perf_counter() - start
    return SolutionPath(alpha=float(alpha), lambdas=grid, models=models,
                        reports=reports, wall_time_s=elapsed)


def adaptive_weights(
    pilot_beta,
    partition: GroupPartition,
    power: float = 1.0,
    floor: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Data-driven penalty weights from a pilot coefficient vector.

    d_j = 1 / (|pilot_j| + floor)^power and
    w_l = sqrt(|G_l|) / (||pilot_{G_l}|| + floor)^power,
    so coordinates and groups the pilot found large are penalized less.
    """
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    if floor <= 0:
        raise ValueError(f"floor must be positive, got {floor}")
    pilot = np.asarray(pilot_beta, dtype=float)
    if pilot.shape != (partition.p,):
        raise ValueError(f"pilot has shape {pilot.shape}, expected ({partition.p},)")
    d = 1.0 / (np.abs(pilot) + floor) ** power
    w = np.sqrt(partition.sizes.astype(float)) / (partition.group_norms(pilot) + floor) ** power
    return d, w
