import numpy as np
import pytest

from sglqr import (
    IterativeSolveError,
    build_system_operator,
    center_columns,
    solve_system,
)
from sglqr.linalg import SystemOperator


def assemble_m(X):
    n = X.shape[0]
    return np.eye(n) + X @ X.T + np.ones((n, n))


class TestCenterColumns:
    def test_basic(self):
        Xc, means = center_columns(np.array([[1.0], [2.0], [3.0]]))
        assert np.allclose(Xc.ravel(), [-1.0, 0.0, 1.0])
        assert means[0] == 2.0

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 3))
        Xc, _ = center_columns(X)
        Xcc, means2 = center_columns(Xc)
        assert np.allclose(Xcc, Xc)
        assert np.all(np.abs(means2) <= 1e-12)

    def test_output_means_vanish(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((50, 8)) * 5 + 3
        Xc, _ = center_columns(X)
        assert np.max(np.abs(Xc.mean(axis=0))) <= 1e-12


class TestStrategySelection:
    def test_small_n_direct(self):
        op = build_system_operator(np.zeros((50, 500)))
        assert op.strategy == "direct"

    def test_large_n_small_p_woodbury(self, monkeypatch):
        import sglqr.linalg as la
        monkeypatch.setattr(la, "N_DIRECT", 100)
        X = np.random.default_rng(2).standard_normal((150, 10))
        op = la.build_system_operator(X)
        assert op.strategy == "woodbury"

    def test_both_large_cg(self, monkeypatch):
        import sglqr.linalg as la
        monkeypatch.setattr(la, "N_DIRECT", 100)
        monkeypatch.setattr(la, "P_WOODBURY", 100)
        X = np.random.default_rng(3).standard_normal((150, 150))
        op = la.build_system_operator(X)
        assert op.strategy == "cg"

    def test_hint_overrides(self):
        X = np.random.default_rng(4).standard_normal((20, 3))
        assert build_system_operator(X, "cg").strategy == "cg"

    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="strategy"):
            build_system_operator(np.zeros((3, 2)), "lu")

    def test_nonfinite_rejected(self):
        X = np.zeros((3, 2))
        X[0, 0] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            build_system_operator(X)


class TestSolveSystem:
    def test_known_inverse_zero_design(self):
        # X = 0: M = I + 11', inverse maps ones to ones/(n+1)
        op = build_system_operator(np.zeros((3, 2)), "direct")
        out = solve_system(op, np.ones(3))
        assert np.allclose(out, np.ones(3) / 4.0, atol=1e-12)

    def test_residual_contract(self):
        rng = np.random.default_rng(5)
        for strategy in ("direct", "cg"):
            X = rng.standard_normal((12, 5))
            rhs = rng.standard_normal(12)
            op = build_system_operator(X, strategy)
            sol = op.solve(rhs)
            resid = np.linalg.norm(assemble_m(X) @ sol - rhs)
            assert resid <= max(1e-9, 1e-9 * np.linalg.norm(rhs))

    def test_woodbury_matches_direct_centered(self):
        rng = np.random.default_rng(6)
        X, _ = center_columns(rng.standard_normal((8, 3)))
        rhs = rng.standard_normal(8)
        sd = build_system_operator(X, "direct").solve(rhs)
        sw = build_system_operator(X, "woodbury").solve(rhs)
        assert np.linalg.norm(sw - sd) <= 1e-9 * np.linalg.norm(sd)

    def test_cg_matches_direct(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((8, 3))
        rhs = rng.standard_normal(8)
        sd = build_system_operator(X, "direct").solve(rhs)
        sc = build_system_operator(X, "cg", cg_tol=1e-12).solve(rhs)
        assert np.linalg.norm(sc - sd) <= 1e-8 * np.linalg.norm(sd)

    def test_pairwise_agreement_larger(self):
        rng = np.random.default_rng(8)
        X, _ = center_columns(rng.standard_normal((50, 40)))
        rhs = rng.standard_normal(50)
        sols = [build_system_operator(X, s, cg_tol=1e-12).solve(rhs)
                for s in ("direct", "woodbury", "cg")]
        for i in range(3):
            for j in range(i + 1, 3):
                rel = np.linalg.norm(sols[i] - sols[j]) / np.linalg.norm(sols[i])
                assert rel <= 1e-8

    def test_woodbury_centers_internally(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((10, 4)) + 2.0
        op = build_system_operator(X, "woodbury")
        assert op.column_means is not None
        Xc, means = center_columns(X)
        assert np.allclose(op.column_means, means)
        rhs = rng.standard_normal(10)
        ref = build_system_operator(Xc, "direct").solve(rhs)
        assert np.allclose(op.solve(rhs), ref, atol=1e-10)

    def test_linearity(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((9, 4))
        op = build_system_operator(X, "direct")
        r1, r2 = rng.standard_normal(9), rng.standard_normal(9)
        a = 1.7
        lhs = op.solve(a * r1 + r2)
        rhs = a * op.solve(r1) + op.solve(r2)
        assert np.allclose(lhs, rhs, atol=1e-8)

    def test_cg_failure_carries_residual(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((30, 25)) * 10
        op = build_system_operator(X, "cg", cg_tol=1e-14, cg_max_iters=2)
        with pytest.raises(IterativeSolveError) as err:
            op.solve(rng.standard_normal(30))
        assert err.value.residual > 0

    def test_rhs_shape_checked(self):
        op = build_system_operator(np.zeros((3, 2)), "direct")
        with pytest.raises(ValueError):
            op.solve(np.ones(4))


class TestWoodburyIdentity:
    def test_explicit_inverse_formula(self):
        # I - X (I + X'X)^{-1} X' - 11'/(n+1) must invert M when X is centered
        rng = np.random.default_rng(12)
        for _ in range(5):
            n = int(rng.integers(4, 20))
            p = int(rng.integers(1, 20))
            X, _ = center_columns(rng.standard_normal((n, p)))
            K = np.linalg.inv(np.eye(p) + X.T @ X)
            inv = np.eye(n) - X @ K @ X.T - np.ones((n, n)) / (n + 1)
            prod = inv @ assemble_m(X)
            assert np.max(np.abs(prod - np.eye(n))) <= 1e-8

    def test_positive_definite(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            X = rng.standard_normal((8, 5))
            eigs = np.linalg.eigvalsh(assemble_m(X))
            assert eigs.min() >= 1.0 - 1e-9

    def test_apply_matches_assembled(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((7, 3))
        op = build_system_operator(X, "direct")
        v = rng.standard_normal(7)
        assert np.allclose(op.apply(v), assemble_m(X) @ v, atol=1e-12)


class TestOperatorReuse:
    def test_factor_shared_across_solves(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((10, 6))
        op = build_system_operator(X, "direct")
        factor_before = op._factor
        op.solve(rng.standard_normal(10))
        op.solve(rng.standard_normal(10))
        assert op._factor is factor_before

    def test_diagonal_preconditioner_values(self):
        rng = np.random.default_rng(16)
        X = rng.standard_normal((6, 3))
        op = SystemOperator(X, "cg")
        diag = 2.0 + np.einsum("ij,ij->i", X, X)
        v = rng.standard_normal(6)
        assert np.allclose(op._precond.matvec(v), v / diag)
