"""Scikit-learn estimator wrapper around the dual ADMM solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .linalg import center_columns
from .model import GroupPartition, QuantileProblem, default_weights, penalty_from_alpha
from .solver import SolverConfig, sgl_dadmm_solve

__all__ = ["SparseGroupLassoQuantileRegressor"]


def _as_partition(groups, p: int) -> GroupPartition:
    if groups is None:
        return GroupPartition.singletons(p)
    if isinstance(groups, GroupPartition):
        if groups.p != p:
            raise ValueError(f"group partition covers {groups.p} columns, X has {p}")
        return groups
    groups = list(groups) if not hasattr(groups, "ndim") else groups
    if isinstance(groups, list) and groups and isinstance(groups[0], (list, tuple, np.ndarray)):
        return GroupPartition.from_groups(groups, p)
    labels = np.asarray(groups)
    if labels.shape != (p,):
        raise ValueError(f"group labels have shape {labels.shape}, expected ({p},)")
    # accept arbitrary hashable labels, relabel to consecutive integers
    _, inverse = np.unique(labels, return_inverse=True)
    return GroupPartition(inverse)


class SparseGroupLassoQuantileRegressor(RegressorMixin, BaseEstimator):
    """Quantile regression with an adaptive sparse group lasso penalty.

    Minimizes the averaged check loss at level ``tau`` plus
    ``lam * [(1 - alpha) sum_j d_j |b_j| + alpha sum_l w_l ||b_{G_l}||]``,
    fit by ADMM on the dual problem. ``alpha=0`` is the pure elementwise
    penalty, ``alpha=1`` the pure group penalty.

    Parameters
    ----------
    tau : float, default=0.5
        Quantile level in (0, 1).
    lam : float, default=1.0
        Common penalty level, split between the two terms by ``alpha``.
    alpha : float, default=0.5
        Mixing weight of the group term, in [0, 1].
    groups : array-like of shape (n_features,), list of lists, or None
        Group labels per column, or explicit per-group index lists.
        ``None`` makes every feature its own group.
    d, w : array-like or None
        Elementwise and groupwise penalty weights; defaults are all-ones
        and sqrt group sizes.
    varpi, gamma, eps1, eps2, max_iters, check_every, strategy :
        Solver controls, see :class:`~sglqr.solver.SolverConfig`.
    center : bool, default=True
        Center the columns of X before solving and fold the shift into
        the intercept. Required for the woodbury linear-system path.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Fitted coefficients with exact zeros.
    intercept_ : float
    report_ : ConvergenceReport
        Residuals, iteration count and objective at exit.
    n_iter_ : int
    """

    def __init__(self, tau=0.5, lam=1.0, alpha=0.5, groups=None, d=None, w=None,
                 varpi=1.0, gamma=1.0, eps1=1e-3, eps2=1e-3, max_iters=20000,
                 check_every=10, strategy=None, center=True):
        self.tau = tau
        self.lam = lam
        self.alpha = alpha
        self.groups = groups
        self.d = d
        self.w = w
        self.varpi = varpi
        self.gamma = gamma
        self.eps1 = eps1
        self.eps2 = eps2
        self.max_iters = max_iters
        self.check_every = check_every
        self.strategy = strategy
        self.center = center

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(varpi=self.varpi, gamma=self.gamma, eps1=self.eps1,
                            eps2=self.eps2, max_iters=self.max_iters,
                            check_every=self.check_every, strategy=self.strategy)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        n, p = X.shape
        partition = _as_partition(self.groups, p)
        d = np.ones(p) if self.d is None else np.asarray(self.d, dtype=float)
        w = (np.sqrt(partition.sizes.astype(float)) if self.w is None
             else np.asarray(self.w, dtype=float))
        penalty = penalty_from_alpha(self.alpha, self.lam, d, w)

        means = None
        if self.center:
            X, means = center_columns(X)
        problem = QuantileProblem(X, y, self.tau, partition)
        model, report, state = sgl_dadmm_solve(problem, penalty, self._solver_config())

        self.coef_ = model.beta
        self.intercept_ = model.beta0 - float(means @ model.beta) if means is not None else model.beta0
        self.report_ = report
        self.n_iter_ = report.iterations
        self.n_features_in_ = p
        self.groups_ = partition
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self.intercept_ + X @ self.coef_

    @property
    def sparsity_(self) -> float:
        """Fraction of exactly-zero coefficients."""
        check_is_fitted(self, "coef_")
        return float(np.mean(self.coef_ == 0.0))

    def nonzero_groups_(self) -> np.ndarray:
        check_is_fitted(self, "coef_")
        norms = self.groups_.group_norms(self.coef_)
        return np.flatnonzero(norms > 0.0)
