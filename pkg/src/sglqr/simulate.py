"""Synthetic designs, selection metrics, and the benchmark driver.

Two generators are provided.

``timing`` draws three latent standard normal block factors; the first
twelve covariate columns repeat them in blocks of four plus N(0, 0.1^2)
column noise, and the remaining p - 12 columns are independent standard
normal draws. True coefficients are (3,3,3,3, 2,2,2,2, -1,-1,-1,-1,
0, ...) and groups default to the three signal blocks plus singletons.

``poly`` draws q latent variables with AR(1) correlation 0.5^{|j-k|},
maps the first one through the standard normal CDF so it lies in (0,1),
and expands every variable into a cubic basis {x, x^2, x^3}, giving
p = 3q columns in q groups of three. The response is a fixed cubic in
variables 6, 12, 15, 20 plus noise multiplied by the first covariate.

Each generator draws raw errors and subtracts the error distribution's
tau-quantile, so the noiseless regression surface is the exact
conditional tau-quantile and the true coefficients are the estimand at
every tau (the extra noise factors in the poly design are positive, so
the shift survives them).

Randomness comes from numpy's PCG64 via ``default_rng([seed, substream])``;
substream 0 is the primary sample and substream 1 the validation sample,
with covariates drawn before errors. Identical specs give identical bytes.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy import stats

from .model import (
    GroupPartition,
    QuantileProblem,
    check_loss,
    default_weights,
    penalty_from_alpha,
)
from .path import adaptive_weights, default_min_ratio, lambda_grid, lambda_max, solve_path
from .solver import SolverConfig, sgl_dadmm_solve

__all__ = [
    "SimSpec",
    "MetricReport",
    "DESIGNS",
    "ERROR_DISTS",
    "gen_timing_design",
    "gen_poly_design",
    "generate",
    "compute_metrics",
    "run_benchmark",
    "BenchmarkConfig",
]

DESIGNS = ("timing", "poly")
ERROR_DISTS = ("normal3", "laplace", "t4", "homonormal2", "heteronormal3", "heterochi3")

_TIMING_DISTS = ("normal3", "laplace", "t4")
_POLY_DISTS = ("homonormal2", "heteronormal3", "heterochi3")

VALIDATION_SUBSTREAM = 1


@dataclass(frozen=True)
class SimSpec:
    """One synthetic scenario; the seed fully determines the data."""

    design: str
    n: int
    p_or_q: int
    error_dist: str
    tau: float
    seed: int

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}, expected one of {DESIGNS}")
        if self.error_dist not in ERROR_DISTS:
            raise ValueError(f"unknown error_dist {self.error_dist!r}, expected one of {ERROR_DISTS}")
        if self.design == "timing" and self.error_dist not in _TIMING_DISTS:
            raise ValueError(f"timing design supports {_TIMING_DISTS}, got {self.error_dist!r}")
        if self.design == "poly" and self.error_dist not in _POLY_DISTS:
            raise ValueError(f"poly design supports {_POLY_DISTS}, got {self.error_dist!r}")
        if self.n < 1 or self.p_or_q < 1:
            raise ValueError("n and p_or_q must be positive")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")


@dataclass
class MetricReport:
    """Estimation and selection metrics for one fitted replication."""

    mse: float
    mae: float
    gfp_count: int
    gfp_rate: float
    gfn_count: int
    gfn_rate: float
    wall_time_s: float = 0.0


def _rng(spec: SimSpec, substream: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, substream])


def _shifted(draw: np.ndarray, quantile: float) -> np.ndarray:
    return draw - quantile


def _timing_errors(rng: np.random.Generator, n: int, dist: str, tau: float) -> np.ndarray:
    if dist == "normal3":
        return _shifted(3.0 * rng.standard_normal(n), 3.0 * stats.norm.ppf(tau))
    if dist == "laplace":
        return _shifted(rng.laplace(0.0, 1.0, n), stats.laplace.ppf(tau))
    return _shifted(rng.standard_t(4, n), stats.t.ppf(tau, df=4))


def gen_timing_design(spec: SimSpec, substream: int = 0) -> tuple[QuantileProblem, np.ndarray]:
    """Correlated-blocks design; requires p >= 13."""
    if spec.design != "timing":
        raise ValueError(f"spec.design is {spec.design!r}, expected 'timing'")
    n, p = spec.n, spec.p_or_q
    if p < 13:
        raise ValueError(f"timing design needs p >= 13, got {p}")
    rng = _rng(spec, substream)

    # draw order: block factors, column noise, bulk columns, then errors
    Z = rng.standard_normal((n, 3))
    noise = 0.1 * rng.standard_normal((n, 12))
    X = np.empty((n, p))
    for j in range(12):
        X[:, j] = Z[:, j // 4] + noise[:, j]
    X[:, 12:] = rng.standard_normal((n, p - 12))

    beta_true = np.zeros(p)
    beta_true[0:4] = 3.0
    beta_true[4:8] = 2.0
    beta_true[8:12] = -1.0

    err = _timing_errors(rng, n, spec.error_dist, spec.tau)
    y = X @ beta_true + err

    labels = np.concatenate([np.repeat([0, 1, 2], 4), np.arange(3, 3 + p - 12)])
    problem = QuantileProblem(X, y, spec.tau, GroupPartition(labels))
    return problem, beta_true


_POLY_COEFS = {
    5: (1.0, 1.0, 1.0),
    11: (1.0 / 3.0, -1.0, 2.0 / 3.0),
    14: (0.5, -1.0, 0.5),
    19: (1.0, 1.0, 1.0),
}


def gen_poly_design(spec: SimSpec, substream: int = 0) -> tuple[QuantileProblem, np.ndarray]:
    """Cubic-expansion design with q groups of three; requires q >= 20."""
    if spec.design != "poly":
        raise ValueError(f"spec.design is {spec.design!r}, expected 'poly'")
    n, q = spec.n, spec.p_or_q
    if q < 20:
        raise ValueError(f"poly design needs q >= 20, got {q}")
    rng = _rng(spec, substream)

    # AR(1) recursion gives exactly the 0.5^{|j-k|} covariance
    innov = rng.standard_normal((n, q))
    latent = np.empty((n, q))
    latent[:, 0] = innov[:, 0]
    rho, scale = 0.5, np.sqrt(1.0 - 0.25)
    for j in range(1, q):
        latent[:, j] = rho * latent[:, j - 1] + scale * innov[:, j]

    base = latent.copy()
    base[:, 0] = stats.norm.cdf(latent[:, 0])

    p = 3 * q
    X = np.empty((n, p))
    X[:, 0::3] = base
    X[:, 1::3] = base**2
    X[:, 2::3] = base**3

    beta_true = np.zeros(p)
    for var, coefs in _POLY_COEFS.items():
        beta_true[3 * var : 3 * var + 3] = coefs

    if spec.error_dist == "homonormal2":
        eps = _shifted(2.0 * rng.standard_normal(n), 2.0 * stats.norm.ppf(spec.tau))
    elif spec.error_dist == "heteronormal3":
        eps = base[:, 0] * _shifted(3.0 * rng.standard_normal(n), 3.0 * stats.norm.ppf(spec.tau))
    else:
        eps = base[:, 0] * _shifted(rng.chisquare(3, n), stats.chi2.ppf(spec.tau, df=3))

    y = X @ beta_true + base[:, 0] * eps

    labels = np.repeat(np.arange(q), 3)
    problem = QuantileProblem(X, y, spec.tau, GroupPartition(labels))
    return problem, beta_true


def generate(spec: SimSpec, substream: int = 0) -> tuple[QuantileProblem, np.ndarray]:
    if spec.design == "timing":
        return gen_timing_design(spec, substream)
    return gen_poly_design(spec, substream)


def compute_metrics(beta_hat, beta_true) -> MetricReport:
    """Coefficient error and exact-zero selection counts/rates."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float)
    if beta_hat.shape != beta_true.shape:
        raise ValueError(
            f"length mismatch: estimate {beta_hat.shape}, truth {beta_true.shape}"
        )
    p = beta_hat.size
    diff = beta_hat - beta_true
    mse = float(diff @ diff) / p
    mae = float(np.abs(diff).sum()) / p

    truly_zero = beta_true == 0.0
    gfp = int(np.count_nonzero(beta_hat[truly_zero] != 0.0))
    gfn = int(np.count_nonzero(beta_hat[~truly_zero] == 0.0))
    n_zero = int(truly_zero.sum())
    n_nonzero = p - n_zero
    return MetricReport(
        mse=mse,
        mae=mae,
        gfp_count=gfp,
        gfp_rate=gfp / n_zero if n_zero else 0.0,
        gfn_count=gfn,
        gfn_rate=gfn / n_nonzero if n_nonzero else 0.0,
    )


@dataclass
class BenchmarkConfig:
    """Penalty-selection policy for benchmark replications.

    The common penalty level is tuned on a fixed log grid by check loss
    on an independently generated validation sample of the same size.
    With ``adaptive=True`` a pilot path with default weights picks the
    weights for the final path.
    """

    alpha: float = 1.0
    nlambda: int = 50
    min_ratio: float | None = None
    adaptive: bool = False
    adaptive_power: float = 1.0
    adaptive_floor: float = 1e-4
    solver: SolverConfig | None = None

    def solver_config(self) -> SolverConfig:
        return self.solver if self.solver is not None else SolverConfig()


def _validation_loss(path_models, problem_val: QuantileProblem) -> np.ndarray:
    Xv, yv, tau = problem_val.X, problem_val.y, problem_val.tau
    return np.array([check_loss(yv - m.beta0 - Xv @ m.beta, tau) for m in path_models])


def _fit_tuned(problem, problem_val, bench: BenchmarkConfig):
    """Tune the penalty level by validation loss; returns (model, wall seconds)."""
    cfg = bench.solver_config()
    d, w = default_weights(problem.groups)
    min_ratio = bench.min_ratio if bench.min_ratio is not None else default_min_ratio(problem)

    def tuned_lambda(d, w):
        lmax = lambda_max(problem, bench.alpha, d, w)
        grid = lambda_grid(lmax, bench.nlambda, min_ratio)
        path = solve_path(problem, bench.alpha, d, w, grid, cfg)
        losses = _validation_loss(path.models, problem_val)
        return float(grid[int(np.argmin(losses))])

    if bench.adaptive:
        lam_pilot = tuned_lambda(d, w)
        pilot, _, _ = sgl_dadmm_solve(
            problem, penalty_from_alpha(bench.alpha, lam_pilot, d, w), cfg)
        d, w = adaptive_weights(pilot.beta, problem.groups,
                                power=bench.adaptive_power, floor=bench.adaptive_floor)
    lam_best = tuned_lambda(d, w)

    penalty = penalty_from_alpha(bench.alpha, lam_best, d, w)
    start = time.perf_counter()
    model, _, _ = sgl_dadmm_solve(problem, penalty, cfg)
    elapsed = time.perf_counter() - start
    return model, elapsed


def _benchmark_row(spec: SimSpec, rep: int, bench: BenchmarkConfig) -> dict:
    rspec = replace(spec, seed=spec.seed + rep)
    row = {
        "design": rspec.design,
        "dist": rspec.error_dist,
        "tau": rspec.tau,
        "n": rspec.n,
        "p_or_q": rspec.p_or_q,
        "rep": rep,
        "seed": rspec.seed,
    }
    try:
        problem, beta_true = generate(rspec, substream=0)
        problem_val, _ = generate(rspec, substream=VALIDATION_SUBSTREAM)
        model, elapsed = _fit_tuned(problem, problem_val, bench)
        metrics = compute_metrics(model.beta, beta_true)
        metrics.wall_time_s = elapsed
        row.update(
            mse=metrics.mse, mae=metrics.mae,
            gfp_count=metrics.gfp_count, gfp_rate=metrics.gfp_rate,
            gfn_count=metrics.gfn_count, gfn_rate=metrics.gfn_rate,
            wall_time_s=metrics.wall_time_s, error="",
        )
    except Exception as exc:
        row.update(mse=float("nan"), mae=float("nan"),
                   gfp_count=-1, gfp_rate=float("nan"),
                   gfn_count=-1, gfn_rate=float("nan"),
                   wall_time_s=float("nan"), error=str(exc))
    return row


def run_benchmark(
    specs: Iterable[SimSpec],
    reps: int = 1,
    bench: BenchmarkConfig | None = None,
    max_workers: int = 1,
) -> list[dict]:
    """One row per (spec, replication); per-row errors are recorded, not raised.

    Replication r of a spec reuses the spec with seed + r, so results do
    not depend on execution order or on ``max_workers``. Wall time
    covers only the final single solve at the tuned penalty level.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("spec set must be non-empty")
    if reps < 1:
        raise ValueError(f"reps must be at least 1, got {reps}")
    if bench is None:
        bench = BenchmarkConfig()

    jobs = [(spec, r) for spec in specs for r in range(reps)]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(lambda job: _benchmark_row(job[0], job[1], bench), jobs))
    else:
        rows = [_benchmark_row(spec, r, bench) for spec, r in jobs]
    return rows
