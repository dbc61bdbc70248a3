"""Independent reference solvers used to pin expected values.

Nothing in here touches the ADMM iteration: the subgradient descent,
the exact-fit vertex enumeration, and the lattice prox search are
straight-line implementations of the definitions, kept deliberately
separate from the code paths they check.

Frozen constants in the test-suite (oracle objectives, the golden
iteration state, the exact saddle point) were produced by running this
module directly::

    python tests/oracles.py

which prints them ready to paste. Regeneration is only needed if the
instance recipes change.
"""

from __future__ import annotations

import numpy as np

from sglqr import (
    GroupPartition,
    PenaltySpec,
    QuantileProblem,
    SolverState,
    check_loss,
    primal_objective,
)


# ---------------------------------------------------------------------------
# projected subgradient descent on the primal objective


def subgradient_solve(problem: QuantileProblem, penalty: PenaltySpec,
                      iters: int = 1_000_000, step0: float | None = None,
                      decay: float = 0.75, stages: int = 40):
    """Diminishing-step subgradient descent with best-iterate tracking.

    The step schedule is piecewise constant and geometrically decaying
    (stage m uses step0 * decay^m), which on these polyhedral-plus-cone
    objectives reaches far tighter accuracy within the iteration budget
    than a 1/sqrt(k) schedule. Returns (beta0, beta, best objective).
    """
    X, y, tau = problem.X, problem.y, problem.tau
    n, p = X.shape
    labels = problem.groups.labels
    g = problem.groups.count
    lam_d = penalty.lam * penalty.d
    mu_w = penalty.mu * penalty.w

    beta = np.zeros(p)
    beta0 = float(np.quantile(y, tau, method="inverted_cdf"))
    if step0 is None:
        step0 = max(1.0, float(np.max(np.abs(y))))

    best_obj = primal_objective(problem, penalty, beta0, beta)
    best = (beta0, beta.copy())

    stage_len = max(1, iters // stages)
    step = step0
    for k in range(iters):
        if k and k % stage_len == 0:
            step *= decay
        r = y - beta0 - X @ beta
        grad_loss = tau - (r <= 0.0)
        gb0 = -float(np.sum(grad_loss)) / n
        gb = -(X.T @ grad_loss) / n + lam_d * np.sign(beta)
        norms = np.sqrt(np.bincount(labels, weights=beta * beta, minlength=g))
        scale = np.where(norms > 0.0, mu_w / np.where(norms > 0.0, norms, 1.0), 0.0)
        gb += beta * scale[labels]

        beta0 -= step * gb0
        beta -= step * gb

        obj = primal_objective(problem, penalty, beta0, beta)
        if obj < best_obj:
            best_obj = obj
            best = (beta0, beta.copy())

    return best[0], best[1], best_obj


# ---------------------------------------------------------------------------
# exact-fit vertex enumeration for unpenalized quantile regression


def quantile_vertex_solve(X: np.ndarray, y: np.ndarray, tau: float):
    """Exact minimizer of the averaged check loss on a tiny instance.

    Some optimum of the (linear-programmable) problem interpolates
    p+1 sample points, so enumerating all exact-fit candidate bases and
    taking the best objective is exhaustive. Returns (beta0, beta, obj).
    """
    from itertools import combinations

    n, p = X.shape
    design = np.column_stack([np.ones(n), X])
    best = (None, None, np.inf)
    for rows in combinations(range(n), p + 1):
        A = design[list(rows)]
        b = y[list(rows)]
        try:
            coef = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        obj = check_loss(y - design @ coef, tau)
        if obj < best[2]:
            best = (float(coef[0]), coef[1:].copy(), float(obj))
    if best[0] is None:
        raise RuntimeError("no nonsingular exact-fit basis found")
    return best


# ---------------------------------------------------------------------------
# lattice search for the combined-penalty prox


def _penalty_on_grid(points: np.ndarray, scaled_d, scaled_w, labels, g) -> np.ndarray:
    val = np.abs(points) @ scaled_d
    sq = points**2
    group_sq = np.zeros((points.shape[0], g))
    for lbl in range(g):
        group_sq[:, lbl] = sq[:, labels == lbl].sum(axis=1)
    return val + np.sqrt(group_sq) @ scaled_w


def prox_grid_oracle(a: np.ndarray, scaled_d, scaled_w, partition: GroupPartition,
                     resolution: float = 1e-3):
    """Brute-force lattice minimizer of h_scaled(u) + 0.5 ||u - a||^2.

    Two-dimensional inputs are searched exhaustively at the requested
    resolution; in three dimensions the lattice is refined around the
    running argmin (safe for this strictly convex objective) until cell
    spacing reaches the resolution. Returns the best lattice point.
    """
    a = np.asarray(a, dtype=float)
    scaled_d = np.asarray(scaled_d, dtype=float)
    scaled_w = np.asarray(scaled_w, dtype=float)
    labels = partition.labels
    g = partition.count
    dim = a.size
    span = float(np.max(np.abs(a))) + 0.5

    def objective(points):
        pen = _penalty_on_grid(points, scaled_d, scaled_w, labels, g)
        return pen + 0.5 * ((points - a) ** 2).sum(axis=1)

    if dim == 2:
        axis = np.arange(-span, span + resolution, resolution)
        best_val, best_pt = np.inf, None
        for x0 in axis:
            pts = np.column_stack([np.full(axis.size, x0), axis])
            vals = objective(pts)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val, best_pt = float(vals[i]), pts[i].copy()
        return best_pt, best_val

    if dim != 3:
        raise ValueError("grid oracle supports 2-d and 3-d inputs")

    lo = a - span
    hi = a + span
    center = a.copy()
    spacing = span / 20.0
    best_pt, best_val = None, np.inf
    while True:
        axes = [np.linspace(c - 21 * spacing, c + 21 * spacing, 43) for c in center]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        np.clip(mesh, lo, hi, out=mesh)
        vals = objective(mesh)
        i = int(np.argmin(vals))
        best_pt, best_val = mesh[i].copy(), float(vals[i])
        center = best_pt
        if spacing <= resolution:
            return best_pt, best_val
        spacing = max(spacing / 10.0, resolution)


# ---------------------------------------------------------------------------
# exact saddle point completion


def complete_saddle_point(problem: QuantileProblem, penalty: PenaltySpec,
                          beta_approx: np.ndarray, beta0_approx: float,
                          support_tol: float = 1e-4, interp_tol: float = 1e-4):
    """Polish an approximate primal solution into an exact saddle point.

    Detects the support and interpolation pattern of the approximate
    solution, then solves the square nonlinear system consisting of the
    interpolation equations, the stationarity equations on the support,
    and the zero-sum constraint on the dual vector. Returns a
    :class:`SolverState` at the saddle, or raises if the pattern checks
    fail (pick a different instance in that case).
    """
    from scipy.optimize import fsolve

    X, y, tau = problem.X, problem.y, problem.tau
    n, p = X.shape
    labels = problem.groups.labels
    nlam_d = problem.n * penalty.lam * penalty.d
    nmu_w = problem.n * penalty.mu * penalty.w

    support = np.flatnonzero(np.abs(beta_approx) > support_tol)
    resid = y - beta0_approx - X @ beta_approx
    interp = np.flatnonzero(np.abs(resid) < interp_tol)
    outside = np.setdiff1d(np.arange(n), interp)
    if interp.size != support.size + 1:
        raise RuntimeError(
            f"degenerate pattern: {interp.size} interpolated rows for "
            f"{support.size} active coefficients")

    theta_fixed = np.where(resid > 0, -tau, 1.0 - tau)

    def residual_fn(vars_):
        beta_s = vars_[: support.size]
        beta0 = vars_[support.size]
        theta_z = vars_[support.size + 1 :]
        beta = np.zeros(p)
        beta[support] = beta_s
        theta = theta_fixed.copy()
        theta[interp] = theta_z
        eq_interp = y[interp] - beta0 - X[interp] @ beta
        norms = np.sqrt(np.bincount(labels, weights=beta * beta, minlength=problem.groups.count))
        grad_pen = nlam_d[support] * np.sign(beta[support])
        grp = labels[support]
        grad_pen = grad_pen + nmu_w[grp] * beta[support] / norms[grp]
        eq_stat = X[:, support].T @ theta + grad_pen
        return np.concatenate([eq_interp, eq_stat, [np.sum(theta)]])

    x0 = np.concatenate([beta_approx[support], [beta0_approx],
                         theta_fixed[interp] * 0.0])
    sol, info, ok, msg = fsolve(residual_fn, x0, full_output=True, xtol=1e-13)
    if ok != 1:
        raise RuntimeError(f"saddle completion failed: {msg}")

    beta = np.zeros(p)
    beta[support] = sol[: support.size]
    beta0 = float(sol[support.size])
    theta = theta_fixed.copy()
    theta[interp] = sol[support.size + 1 :]

    if np.any(theta < -tau - 1e-10) or np.any(theta > 1 - tau + 1e-10):
        raise RuntimeError("dual vector leaves the box; pick another instance")
    u = -(X.T @ theta)
    # zeroed coordinates must sit inside the penalty subdifferential at 0
    support_set = set(support.tolist())
    for lbl in range(problem.groups.count):
        members = np.flatnonzero(labels == lbl)
        zeroed = np.array([j for j in members if j not in support_set])
        if zeroed.size == 0:
            continue
        if any(j in support_set for j in members):
            if np.any(np.abs(u[zeroed]) > nlam_d[zeroed] + 1e-8):
                raise RuntimeError("inactive coordinate violates its dual bound")
        else:
            excess = np.maximum(np.abs(u[members]) - nlam_d[members], 0.0)
            if np.linalg.norm(excess) > nmu_w[lbl] + 1e-8:
                raise RuntimeError("inactive group violates its dual bound")
    z = y - X @ beta - beta0
    return SolverState(theta=theta, u=u, v=theta.copy(), beta=beta, z=z,
                       beta0=beta0, iter=0)
