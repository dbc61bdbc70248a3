"""Linear-system strategies for the n x n matrix M = I + X X' + 1 1'.

M is symmetric positive definite for any real X (the identity term
bounds the spectrum below by 1). Three interchangeable ways to apply
its inverse:

* ``direct``   Cholesky factorization of M itself, O(n^3) once.
* ``woodbury`` factor the p x p matrix I + X'X instead; valid when the
  columns of X have zero mean, because then

      M^{-1} = I - X (I + X'X)^{-1} X' - (1 1') / (n + 1).

  If the supplied design is not column-centered the operator centers it
  internally and records the removed means; callers must then run the
  iteration on the centered design (``op.design``) and shift the
  intercept afterwards.
* ``cg``       matrix-free preconditioned conjugate gradient with a
  Jacobi preconditioner built from diag(M) = 2 + ||x_i||^2.

The factorization depends only on X, never on the penalties, so one
operator is shared across all iterations and all path points.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import LinearOperator, cg

__all__ = [
    "SystemOperator",
    "IterativeSolveError",
    "build_system_operator",
    "solve_system",
    "center_columns",
    "N_DIRECT",
    "P_WOODBURY",
    "STRATEGIES",
]

# Dense factorization feasibility cutoffs; overridable via strategy hints.
N_DIRECT = 2000
P_WOODBURY = 2000

STRATEGIES = ("direct", "woodbury", "cg")

_CENTER_RTOL = 1e-12


class IterativeSolveError(RuntimeError):
    """CG failed to reach the requested tolerance; carries the residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def center_columns(X) -> tuple[np.ndarray, np.ndarray]:
    """Remove column means; returns (centered matrix, means)."""
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    return X - means, means


def _is_centered(X: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(X), initial=0.0)))
    return bool(np.max(np.abs(X.mean(axis=0)), initial=0.0) <= _CENTER_RTOL * scale)


class SystemOperator:
    """Applies M^{-1} for M = I + X X' + 1 1' under a fixed strategy.

    Immutable after construction; concurrent solves are safe. ``design``
    is the matrix actually represented by M (equal to the input X except
    on the internally-centered woodbury path, where ``column_means``
    records the shift).
    """

    def __init__(self, X, strategy: str, cg_tol: float = 1e-10,
                 cg_max_iters: int = 10000, preconditioner: str = "diagonal"):
        X = np.asarray(X, dtype=float)
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
        if preconditioner not in ("none", "diagonal"):
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
        self.strategy = strategy
        self.column_means = None
        self.cg_tol = float(cg_tol)
        self.cg_max_iters = int(cg_max_iters)
        self.preconditioner = preconditioner

        if strategy == "woodbury" and not _is_centered(X):
            X, self.column_means = center_columns(X)
        self.design = X
        n, p = X.shape
        self.n = n

        if strategy == "direct":
            M = X @ X.T
            M[np.diag_indices_from(M)] += 1.0
            M += 1.0  # rank-one ones block
            self._factor = cho_factor(M, lower=True)
        elif strategy == "woodbury":
            K = X.T @ X
            K[np.diag_indices_from(K)] += 1.0
            self._factor = cho_factor(K, lower=True)
        else:
            self._row_sq = np.einsum("ij,ij->i", X, X)
            self._matvec_op = LinearOperator(
                (n, n), matvec=lambda v: v + X @ (X.T @ v) + np.sum(v), dtype=float
            )
            if preconditioner == "diagonal":
                inv_diag = 1.0 / (2.0 + self._row_sq)
                self._precond = LinearOperator((n, n), matvec=lambda v: inv_diag * v, dtype=float)
            else:
                self._precond = None

    def apply(self, v) -> np.ndarray:
        """Forward product M v (used by diagnostics and tests)."""
        v = np.asarray(v, dtype=float)
        return v + self.design @ (self.design.T @ v) + np.sum(v)

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.n,):
            raise ValueError(f"rhs has shape {rhs.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(rhs)):
            raise ValueError("rhs contains non-finite entries")
        if self.strategy == "direct":
            return cho_solve(self._factor, rhs)
        if self.strategy == "woodbury":
            X = self.design
            out = rhs - X @ cho_solve(self._factor, X.T @ rhs)
            out -= np.sum(rhs) / (self.n + 1.0)
            return out
        sol, info = cg(self._matvec_op, rhs, rtol=self.cg_tol, atol=0.0,
                       maxiter=self.cg_max_iters, M=self._precond)
        if info != 0:
            resid = float(np.linalg.norm(self.apply(sol) - rhs))
            raise IterativeSolveError(
                f"CG did not converge within {self.cg_max_iters} iterations "
                f"(residual {resid:.3e})", resid)
        return sol


def build_system_operator(X, strategy_hint: str | None = None, cg_tol: float = 1e-10,
                          cg_max_iters: int = 10000,
                          preconditioner: str = "diagonal") -> SystemOperator:
    """Build an operator for M = I + X X' + 1 1'.

    Without a hint the strategy is chosen by size: direct for
    n <= N_DIRECT, else woodbury for p <= P_WOODBURY, else cg.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be a matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    if strategy_hint is None:
        n, p = X.shape
        if n <= N_DIRECT:
            strategy = "direct"
        elif p <= P_WOODBURY:
            strategy = "woodbury"
        else:
            strategy = "cg"
    else:
        strategy = strategy_hint
    return SystemOperator(X, strategy, cg_tol=cg_tol, cg_max_iters=cg_max_iters,
                          preconditioner=preconditioner)


def solve_system(op: SystemOperator, rhs) -> np.ndarray:
    """Solve M s = rhs with the operator's strategy."""
    return op.solve(rhs)
