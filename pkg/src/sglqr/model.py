"""Problem definition, penalty parameterization, and primal objective.

The estimation target is the penalized quantile regression

    min_{b0, b}  (1/n) sum_i rho_tau(y_i - b0 - x_i'b)
                 + lam * sum_j d_j |b_j|
                 + mu  * sum_l w_l ||b_{G_l}||_2

with rho_tau(u) = u * (tau - 1{u <= 0}) the check loss and {G_l} a
non-overlapping partition of the predictor indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .solver import ConvergenceReport

__all__ = [
    "GroupPartition",
    "QuantileProblem",
    "PenaltySpec",
    "FittedModel",
    "check_loss",
    "primal_objective",
    "penalty_from_alpha",
    "sample_quantile",
    "default_weights",
]


def _as_1d_float(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _require_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")


class GroupPartition:
    """Non-overlapping partition of predictor indices into groups.

    Parameters
    ----------
    labels : array-like of int, shape (p,)
        ``labels[j]`` is the group index of column ``j``. Group indices
        must be exactly ``0 .. g-1`` with every group non-empty.
    """

    def __init__(self, labels):
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-d integer array")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.floor(labels)):
                raise ValueError("group labels must be integers")
            labels = labels.astype(np.intp)
        labels = labels.astype(np.intp)
        count = int(labels.max()) + 1
        if labels.min() < 0:
            raise ValueError("group labels must be non-negative")
        sizes = np.bincount(labels, minlength=count)
        if np.any(sizes == 0):
            missing = np.flatnonzero(sizes == 0)
            raise ValueError(f"group labels must be consecutive; empty groups {missing.tolist()}")
        self.labels = labels
        self.count = count
        self.sizes = sizes
        self._indices = tuple(np.flatnonzero(labels == g) for g in range(count))

    @classmethod
    def from_groups(cls, groups: Iterable[Sequence[int]], p: int) -> "GroupPartition":
        """Build a partition from explicit per-group column index lists."""
        labels = np.full(p, -1, dtype=np.intp)
        for g, idx in enumerate(groups):
            idx = np.asarray(idx, dtype=np.intp)
            if np.any(labels[idx] != -1):
                raise ValueError("groups overlap")
            labels[idx] = g
        if np.any(labels == -1):
            raise ValueError("groups do not cover all columns")
        return cls(labels)

    @classmethod
    def singletons(cls, p: int) -> "GroupPartition":
        return cls(np.arange(p, dtype=np.intp))

    @property
    def p(self) -> int:
        return self.labels.size

    def indices(self, g: int) -> np.ndarray:
        return self._indices[g]

    def group_norms(self, v: np.ndarray) -> np.ndarray:
        """Per-group Euclidean norms of a length-p vector."""
        return np.sqrt(np.bincount(self.labels, weights=v * v, minlength=self.count))

    def expand(self, per_group: np.ndarray) -> np.ndarray:
        """Broadcast a length-g vector to length p via the group labels."""
        return np.asarray(per_group)[self.labels]

    def __eq__(self, other):
        return isinstance(other, GroupPartition) and np.array_equal(self.labels, other.labels)

    def __repr__(self):
        return f"GroupPartition(p={self.p}, count={self.count})"


@dataclass
class QuantileProblem:
    """Design matrix, response, quantile level and group structure."""

    X: np.ndarray
    y: np.ndarray
    tau: float
    groups: GroupPartition

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = _as_1d_float(self.y, "y")
        if self.X.ndim != 2:
            raise ValueError(f"X must be a matrix, got shape {self.X.shape}")
        n, p = self.X.shape
        if n < 1 or p < 1:
            raise ValueError("X must have at least one row and one column")
        if self.y.shape[0] != n:
            raise ValueError(f"y has length {self.y.shape[0]}, expected {n}")
        _require_finite(self.X, "X")
        _require_finite(self.y, "y")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.groups.p != p:
            raise ValueError(
                f"group partition covers {self.groups.p} columns, design has {p}"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def default_weights(partition: GroupPartition) -> tuple[np.ndarray, np.ndarray]:
    """Default penalty weights: d_j = 1 and w_l = sqrt(|G_l|)."""
    return np.ones(partition.p), np.sqrt(partition.sizes.astype(float))


@dataclass
class PenaltySpec:
    """Penalty magnitudes and elementwise/groupwise weights.

    ``lam`` scales the weighted L1 term, ``mu`` the weighted group-L2
    term. A group with w_l = 0 whose members all have d_j = 0 is simply
    unpenalized; this is allowed.
    """

    lam: float
    mu: float
    d: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.d = _as_1d_float(self.d, "d")
        self.w = _as_1d_float(self.w, "w")
        _require_finite(self.d, "d")
        _require_finite(self.w, "w")
        if self.lam < 0 or self.mu < 0:
            raise ValueError("penalty magnitudes must be non-negative")
        if np.any(self.d < 0) or np.any(self.w < 0):
            raise ValueError("penalty weights must be non-negative")

    @classmethod
    def with_defaults(cls, lam: float, mu: float, partition: GroupPartition) -> "PenaltySpec":
        d, w = default_weights(partition)
        return cls(lam, mu, d, w)

    def value(self, beta: np.ndarray, partition: GroupPartition) -> float:
        """h(beta) = lam * ||d o beta||_1 + mu * sum_l w_l ||beta_{G_l}||."""
        l1 = float(self.d @ np.abs(beta))
        grp = float(self.w @ partition.group_norms(beta))
        return self.lam * l1 + self.mu * grp


def penalty_from_alpha(alpha: float, lambda_common: float, d, w) -> PenaltySpec:
    """Split a common penalty level into (lam, mu) = ((1-alpha), alpha) shares."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if lambda_common < 0:
        raise ValueError("lambda_common must be non-negative")
    return PenaltySpec((1.0 - alpha) * lambda_common, alpha * lambda_common, d, w)


@dataclass
class FittedModel:
    """Fitted intercept and coefficients with solver diagnostics.

    ``beta`` carries exact zeros: entries and group blocks removed by the
    proximal update are literal 0.0, so support counts need no threshold.
    """

    beta0: float
    beta: np.ndarray
    diagnostics: "ConvergenceReport"

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.beta0 + np.asarray(X, dtype=float) @ self.beta

    @property
    def nonzero(self) -> np.ndarray:
        return np.flatnonzero(self.beta != 0.0)


def check_loss(u, tau: float) -> float:
    """Averaged quantile check loss (1/n) sum_i u_i (tau - 1{u_i <= 0})."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    _require_finite(u, "u")
    return float(np.mean(u * (tau - (u <= 0))))


def primal_objective(
    problem: QuantileProblem, penalty: PenaltySpec, beta0: float, beta
) -> float:
    """Penalized objective at (beta0, beta)."""
    beta = _as_1d_float(beta, "beta")
    if beta.shape[0] != problem.p:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {problem.p}")
    if penalty.d.shape[0] != problem.p or penalty.w.shape[0] != problem.groups.count:
        raise ValueError("penalty weights do not match problem dimensions")
    resid = problem.y - beta0 - problem.X @ beta
    return check_loss(resid, problem.tau) + penalty.value(beta, problem.groups)


def sample_quantile(y, tau: float) -> float:
    """Type-1 sample quantile (the ceil(n*tau)-th order statistic).

    Always a minimizer of b0 -> check_loss(y - b0, tau).
    """
    y = _as_1d_float(y, "y")
    if y.size == 0:
        raise ValueError("y must be non-empty")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return float(np.quantile(y, tau, method="inverted_cdf"))
