"""Batch command line: fit, path, simulate, bench, verify.

Outputs are deterministic given identical flags and seeds: wall-clock
columns are only written when --timings is passed, and floats are
serialized with shortest round-trip repr. CSV files use the RFC 4180
dialect (header row, comma separator, CRLF line endings, '.' decimal).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .linalg import STRATEGIES, center_columns
from .model import (
    GroupPartition,
    PenaltySpec,
    QuantileProblem,
    penalty_from_alpha,
    primal_objective,
)
from .path import default_min_ratio, lambda_grid, lambda_max, solve_path
from .simulate import (
    DESIGNS,
    ERROR_DISTS,
    BenchmarkConfig,
    SimSpec,
    run_benchmark,
)
from .solver import SolverConfig, sgl_dadmm_solve

__all__ = ["main", "cmd_fit", "cmd_path", "cmd_simulate", "cmd_bench", "cmd_verify"]

FORMAT_VERSION = "1"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAX_ITERS = 2


class InputError(Exception):
    """User-facing input problem; reported with exit code 1."""


def _read_csv(path: str, response: str):
    """Returns (feature_names, X, y); errors name the offending row/column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InputError(f"{path}: empty file, expected a header row")
            rows = list(reader)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}")

    if response not in header:
        raise InputError(f"{path}: response column {response!r} not found in header")
    y_idx = header.index(response)
    feature_names = [name for i, name in enumerate(header) if i != y_idx]
    if not feature_names:
        raise InputError(f"{path}: no feature columns besides the response")
    if not rows:
        raise InputError(f"{path}: no data rows")

    X = np.empty((len(rows), len(feature_names)))
    y = np.empty(len(rows))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise InputError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        k = 0
        for j, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: non-numeric cell at row {i + 2}, column {header[j]!r}: {cell!r}"
                )
            if j == y_idx:
                y[i] = val
            else:
                X[i, k] = val
                k += 1
    return feature_names, X, y


def _read_groups(path: str | None, feature_names: list[str]) -> GroupPartition:
    """Groups file maps column names; unlisted columns become singletons."""
    p = len(feature_names)
    if path is None:
        return GroupPartition.singletons(p)
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read groups file {path}: {exc}")
    if not isinstance(payload, dict) or "groups" not in payload:
        raise InputError(f"{path}: expected an object with a 'groups' key")
    name_to_col = {name: j for j, name in enumerate(feature_names)}
    labels = np.full(p, -1, dtype=np.intp)
    for g, names in enumerate(payload["groups"]):
        if not isinstance(names, list):
            raise InputError(f"{path}: group {g} is not a list of column names")
        for name in names:
            if name not in name_to_col:
                raise InputError(f"{path}: group {g} references unknown column {name!r}")
            j = name_to_col[name]
            if labels[j] != -1:
                raise InputError(f"{path}: column {name!r} appears in more than one group")
            labels[j] = g
    next_label = len(payload["groups"])
    for j in range(p):
        if labels[j] == -1:
            labels[j] = next_label
            next_label += 1
    return GroupPartition(labels)


def _read_weights(path: str | None, partition: GroupPartition):
    d = np.ones(partition.p)
    w = np.sqrt(partition.sizes.astype(float))
    if path is None:
        return d, w
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read weights file {path}: {exc}")
    if "d" in payload:
        d = np.asarray(payload["d"], dtype=float)
        if d.shape != (partition.p,):
            raise InputError(f"{path}: 'd' must have length {partition.p}")
    if "w" in payload:
        w = np.asarray(payload["w"], dtype=float)
        if w.shape != (partition.count,):
            raise InputError(f"{path}: 'w' must have length {partition.count}")
    return d, w


def _penalty_from_args(args, d, w) -> PenaltySpec:
    if args.alpha is not None:
        return penalty_from_alpha(args.alpha, args.lam, d, w)
    mu = args.mu if args.mu is not None else 0.0
    return PenaltySpec(args.lam, mu, d, w)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(varpi=args.varpi, gamma=args.gamma, eps1=args.eps1,
                        eps2=args.eps2, max_iters=args.max_iters,
                        check_every=args.check_every, strategy=args.strategy)


def _manifest(command: str, args, skip=("func",)) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return {"format_version": FORMAT_VERSION, "command": command, "flags": flags}


def _report_dict(report, objective: float) -> dict:
    return {
        "iterations": report.iterations,
        "primal_residual": report.primal_residual,
        "dual_residual": report.dual_residual,
        "eps_pri": report.eps_pri,
        "eps_dual": report.eps_dual,
        "kkt_residual": report.kkt_residual,
        "objective": objective,
        "converged": report.converged,
    }


def _load_fit_inputs(args):
    feature_names, X, y = _read_csv(args.data, args.response)
    partition = _read_groups(args.groups, feature_names)
    d, w = _read_weights(args.weights, partition)
    problem_raw = QuantileProblem(X, y, args.tau, partition)
    if args.center:
        Xc, means = center_columns(X)
        problem = QuantileProblem(Xc, y, args.tau, partition)
    else:
        problem, means = problem_raw, None
    return feature_names, problem_raw, problem, means, d, w


def _uncenter(beta0: float, beta: np.ndarray, means) -> float:
    return beta0 - float(means @ beta) if means is not None else beta0


def cmd_fit(args) -> int:
    feature_names, problem_raw, problem, means, d, w = _load_fit_inputs(args)
    penalty = _penalty_from_args(args, d, w)
    model, report, _ = sgl_dadmm_solve(problem, penalty, _solver_config(args))
    beta0 = _uncenter(model.beta0, model.beta, means)
    objective = primal_objective(problem_raw, penalty, beta0, model.beta)

    out = {
        "format_version": FORMAT_VERSION,
        "manifest": _manifest("fit", args),
        "feature_names": feature_names,
        "groups_labels": problem.groups.labels.tolist(),
        "penalty": {"lam": penalty.lam, "mu": penalty.mu,
                    "d": penalty.d.tolist(), "w": penalty.w.tolist()},
        "tau": args.tau,
        "beta0": beta0,
        "beta": model.beta.tolist(),
        "nonzero_groups": np.flatnonzero(problem.groups.group_norms(model.beta) > 0).tolist(),
        "report": _report_dict(report, objective),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    print(f"fit: {report.iterations} iterations, objective {objective:.6g}, "
          f"converged={report.converged}")
    return EXIT_OK if report.converged else EXIT_MAX_ITERS


def _parse_lambdas(text: str) -> np.ndarray:
    try:
        vals = np.array([float(tok) for tok in text.split(",") if tok.strip() != ""])
    except ValueError:
        raise InputError(f"--lambdas must be a comma-separated list of numbers: {text!r}")
    if vals.size == 0:
        raise InputError("--lambdas is empty")
    if vals.size > 1 and not np.all(np.diff(vals) < 0):
        raise InputError("--lambdas must be strictly decreasing")
    return vals


def cmd_path(args) -> int:
    feature_names, problem_raw, problem, means, d, w = _load_fit_inputs(args)
    alpha = args.alpha if args.alpha is not None else 0.5
    if args.lambdas is not None:
        grid = _parse_lambdas(args.lambdas)
    else:
        lmax = lambda_max(problem, alpha, d, w)
        min_ratio = args.min_ratio if args.min_ratio is not None else default_min_ratio(problem)
        grid = lambda_grid(lmax, args.nlambda, min_ratio)
    path = solve_path(problem, alpha, d, w, grid, _solver_config(args))

    with open(args.out_coefs, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["intercept"] + feature_names)
        for model in path.models:
            beta0 = _uncenter(model.beta0, model.beta, means)
            writer.writerow([repr(beta0)] + [repr(float(b)) for b in model.beta])

    diagnostics = []
    for lam_common, model, report in zip(path.lambdas, path.models, path.reports):
        beta0 = _uncenter(model.beta0, model.beta, means)
        penalty = penalty_from_alpha(alpha, float(lam_common), d, w)
        objective = primal_objective(problem_raw, penalty, beta0, model.beta)
        diagnostics.append({"lambda": float(lam_common),
                            "nonzero": int(np.count_nonzero(model.beta)),
                            **_report_dict(report, objective)})
    out = {
        "format_version": FORMAT_VERSION,
        "manifest": _manifest("path", args),
        "feature_names": feature_names,
        "groups_labels": problem.groups.labels.tolist(),
        "alpha": alpha,
        "d": np.asarray(d, dtype=float).tolist(),
        "w": np.asarray(w, dtype=float).tolist(),
        "tau": args.tau,
        "lambdas": [float(v) for v in path.lambdas],
        "diagnostics": diagnostics,
    }
    with open(args.out_diag, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    n_conv = sum(r.converged for r in path.reports)
    print(f"path: {len(path.models)} fits, {n_conv} converged")
    return EXIT_OK if n_conv == len(path.models) else EXIT_MAX_ITERS


_CSV_FIELDS = ["design", "dist", "tau", "n", "p_or_q", "rep", "seed",
               "mse", "mae", "gfp_count", "gfp_rate", "gfn_count", "gfn_rate", "error"]


def _write_bench_outputs(rows: list[dict], args) -> None:
    fields = list(_CSV_FIELDS)
    if args.timings:
        fields.insert(-1, "wall_time_s")
    if args.out_csv:
        with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for row in rows:
                writer.writerow([repr(row[f]) if isinstance(row[f], float) else row[f]
                                 for f in fields])
    if args.out_json:
        scenarios: dict[tuple, list[dict]] = {}
        for row in rows:
            scenarios.setdefault((row["design"], row["dist"], row["tau"]), []).append(row)
        summary = []
        for (design, dist, tau), group in scenarios.items():
            ok = [r for r in group if not r["error"]]
            entry = {"design": design, "dist": dist, "tau": tau,
                     "rows": len(group), "failed": len(group) - len(ok)}
            if ok:
                entry.update(
                    median_mse=float(np.median([r["mse"] for r in ok])),
                    median_mae=float(np.median([r["mae"] for r in ok])),
                    mean_gfp_rate=float(np.mean([r["gfp_rate"] for r in ok])),
                    mean_gfn_rate=float(np.mean([r["gfn_rate"] for r in ok])),
                )
                if args.timings:
                    entry["median_wall_time_s"] = float(np.median([r["wall_time_s"] for r in ok]))
            summary.append(entry)
        payload = {"format_version": FORMAT_VERSION,
                   "manifest": _manifest(args.command, args),
                   "summary": summary}
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    # one line per scenario on stdout
    seen = []
    for row in rows:
        key = (row["design"], row["dist"], row["tau"])
        if key in seen:
            continue
        seen.append(key)
        group = [r for r in rows
                 if (r["design"], r["dist"], r["tau"]) == key and not r["error"]]
        if group:
            print(f"{key[0]} {key[1]} tau={key[2]}: reps={len(group)} "
                  f"median_mse={np.median([r['mse'] for r in group]):.6g} "
                  f"median_mae={np.median([r['mae'] for r in group]):.6g} "
                  f"gfp_rate={np.mean([r['gfp_rate'] for r in group]):.4g} "
                  f"gfn_rate={np.mean([r['gfn_rate'] for r in group]):.4g}")
        else:
            print(f"{key[0]} {key[1]} tau={key[2]}: all replications failed")


def _bench_config(args) -> BenchmarkConfig:
    return BenchmarkConfig(alpha=args.alpha, nlambda=args.nlambda,
                           min_ratio=args.min_ratio, adaptive=args.adaptive,
                           solver=_solver_config(args))


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("SGLQ_THREADS", "1")))
    except ValueError:
        return 1


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise InputError(f"--reps must be at least 1, got {args.reps}")
    try:
        spec = SimSpec(args.design, args.n, args.p, args.dist, args.tau, args.seed)
    except ValueError as exc:
        raise InputError(str(exc))
    rows = run_benchmark([spec], reps=args.reps, bench=_bench_config(args),
                         max_workers=_max_workers())
    _write_bench_outputs(rows, args)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise InputError(f"--reps must be at least 1, got {args.reps}")
    specs = []
    try:
        for design in args.designs.split(","):
            for dist in args.dists.split(","):
                for tau in (float(t) for t in args.taus.split(",")):
                    specs.append(SimSpec(design.strip(), args.n, args.p,
                                         dist.strip(), tau, args.seed))
    except ValueError as exc:
        raise InputError(f"{exc}; accepted designs {DESIGNS}, distributions {ERROR_DISTS}")
    rows = run_benchmark(specs, reps=args.reps, bench=_bench_config(args),
                         max_workers=_max_workers())
    _write_bench_outputs(rows, args)
    return EXIT_OK


def cmd_verify(args) -> int:
    """Re-ingest a fit or path output and recompute the reported objective."""
    try:
        with open(args.result, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {args.result}: {exc}")

    feature_names, X, y = _read_csv(args.data, args.response)
    if feature_names != payload.get("feature_names"):
        raise InputError("feature columns of the data do not match the stored result")
    partition = GroupPartition(np.asarray(payload["groups_labels"], dtype=np.intp))
    tau = payload["tau"]
    problem = QuantileProblem(X, y, tau, partition)

    failures = 0
    if "beta" in payload:  # fit output
        penalty = PenaltySpec(payload["penalty"]["lam"], payload["penalty"]["mu"],
                              np.asarray(payload["penalty"]["d"]),
                              np.asarray(payload["penalty"]["w"]))
        recomputed = primal_objective(problem, penalty, payload["beta0"],
                                      np.asarray(payload["beta"]))
        stored = payload["report"]["objective"]
        ok = abs(recomputed - stored) <= 1e-10
        print(f"fit objective stored={stored!r} recomputed={recomputed!r} "
              f"{'OK' if ok else 'MISMATCH'}")
        failures += 0 if ok else 1
    elif "diagnostics" in payload:  # path output
        d = np.asarray(payload["d"], dtype=float)
        w = np.asarray(payload["w"], dtype=float)
        alpha = payload["alpha"]
        try:
            with open(args.coefs, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                next(reader)
                coef_rows = [[float(c) for c in row] for row in reader]
        except (OSError, TypeError) as exc:
            raise InputError(f"cannot read path coefficient csv: {exc}")
        if len(coef_rows) != len(payload["diagnostics"]):
            raise InputError("coefficient rows do not match diagnostics entries")
        for row, diag in zip(coef_rows, payload["diagnostics"]):
            penalty = penalty_from_alpha(alpha, diag["lambda"], d, w)
            recomputed = primal_objective(problem, penalty, row[0], np.asarray(row[1:]))
            if abs(recomputed - diag["objective"]) > 1e-10:
                failures += 1
        print(f"path: {len(coef_rows)} rows, {failures} objective mismatches")
    else:
        raise InputError(f"{args.result}: not a fit or path output")
    return EXIT_OK if failures == 0 else EXIT_INPUT


def _add_solver_flags(parser) -> None:
    parser.add_argument("--varpi", type=float, default=1.0, help="augmented Lagrangian parameter")
    parser.add_argument("--gamma", type=float, default=1.0, help="relaxation in (0, 1.618)")
    parser.add_argument("--eps1", type=float, default=1e-3)
    parser.add_argument("--eps2", type=float, default=1e-3)
    parser.add_argument("--max-iters", type=int, default=20000)
    parser.add_argument("--check-every", type=int, default=10)
    parser.add_argument("--strategy", choices=STRATEGIES, default=None,
                        help="linear-system strategy (default: auto by size)")


def _add_data_flags(parser) -> None:
    parser.add_argument("--data", required=True, help="CSV file with a header row")
    parser.add_argument("--response", required=True, help="name of the response column")
    parser.add_argument("--groups", default=None,
                        help="JSON file {'groups': [[column names], ...]}; "
                             "unlisted columns become singleton groups")
    parser.add_argument("--weights", default=None,
                        help="JSON file with optional 'd' and 'w' weight arrays")
    parser.add_argument("--tau", type=float, default=0.5)
    center = parser.add_mutually_exclusive_group()
    center.add_argument("--center", dest="center", action="store_true", default=True,
                        help="center feature columns (default)")
    center.add_argument("--no-center", dest="center", action="store_false")


def _add_bench_flags(parser) -> None:
    parser.add_argument("--reps", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--alpha", type=float, default=1.0,
                        help="group-term share of the penalty")
    parser.add_argument("--nlambda", type=int, default=50)
    parser.add_argument("--min-ratio", type=float, default=None)
    parser.add_argument("--adaptive", action="store_true",
                        help="reweight penalties from a pilot fit")
    parser.add_argument("--timings", action="store_true",
                        help="include wall-clock columns (breaks byte reproducibility)")
    parser.add_argument("--out-csv", default=None)
    parser.add_argument("--out-json", default=None)
    _add_solver_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sglqr",
        description="Sparse group lasso penalized quantile regression (dual ADMM)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model from a CSV file")
    _add_data_flags(p_fit)
    p_fit.add_argument("--lambda", dest="lam", type=float, default=1.0,
                       help="penalty level (common level when --alpha is given)")
    p_fit.add_argument("--mu", type=float, default=None,
                       help="group penalty magnitude (ignored when --alpha is given)")
    p_fit.add_argument("--alpha", type=float, default=None,
                       help="split --lambda into ((1-alpha), alpha) shares")
    p_fit.add_argument("--out", required=True, help="output JSON path")
    _add_solver_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_path = sub.add_parser("path", help="regularization path with warm starts")
    _add_data_flags(p_path)
    p_path.add_argument("--alpha", type=float, default=None)
    p_path.add_argument("--nlambda", type=int, default=100)
    p_path.add_argument("--min-ratio", type=float, default=None)
    p_path.add_argument("--lambdas", default=None,
                        help="explicit comma-separated descending penalty levels")
    p_path.add_argument("--out-coefs", required=True, help="coefficient matrix CSV path")
    p_path.add_argument("--out-diag", required=True, help="diagnostics JSON path")
    _add_solver_flags(p_path)
    p_path.set_defaults(func=cmd_path)

    p_sim = sub.add_parser("simulate", help="run one synthetic scenario")
    p_sim.add_argument("--design", choices=DESIGNS, required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--p", type=int, required=True,
                       help="columns for timing, latent variables for poly")
    p_sim.add_argument("--dist", choices=ERROR_DISTS, required=True)
    p_sim.add_argument("--tau", type=float, default=0.5)
    _add_bench_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="cross designs/distributions/taus")
    p_bench.add_argument("--designs", default="timing")
    p_bench.add_argument("--dists", default="normal3")
    p_bench.add_argument("--taus", default="0.5")
    p_bench.add_argument("--n", type=int, required=True)
    p_bench.add_argument("--p", type=int, required=True)
    _add_bench_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser("verify", help="recompute objectives of a fit/path output")
    p_verify.add_argument("--data", required=True)
    p_verify.add_argument("--response", required=True)
    p_verify.add_argument("--result", required=True, help="fit JSON or path diagnostics JSON")
    p_verify.add_argument("--coefs", default=None, help="path coefficient CSV (path outputs)")
    p_verify.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
