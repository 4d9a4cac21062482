import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdmean.exceptions import DegenerateNode
from hdmean.precision import (
    PrecisionEstimate,
    PrecisionSpec,
    centered,
    default_lambda,
    default_lambda_grid,
    diagnostics,
    estimate_precision,
    fit_path,
    fit_supnorm,
    lasso_cd,
    nodewise_lasso,
    sample_gram,
    select_lambda,
    sqrt_lasso_nodewise,
    symmetrize,
)
from hdmean.simlab import ar1_covariance, sample_dataset
from hdmean.core import RngStream


def node_kkt(X, est, lam, weights=None):
    """Largest KKT excess ``|grad_k| - lam_j w_k`` over every node regression of ``est``."""
    S = sample_gram(centered(X))
    p = S.shape[0]
    w = np.ones(p) if weights is None else weights
    worst = -np.inf
    for j in range(p):
        others = np.delete(np.arange(p), j)
        g = -est.gamma_hat[j, others] * est.tau_sq[j]
        grad = S[others, j] - S[np.ix_(others, others)] @ g
        lj = lam[j] if np.ndim(lam) else lam
        worst = max(worst, float(np.max(np.abs(grad) - lj * w[others])))
    return worst


class TestLassoCD:
    def test_single_predictor_soft_threshold(self):
        n = 4
        a = np.array([1.0, -1.0, 1.0, -1.0])  # a'a / n = 1
        # response with a'y / n = 0.5
        y = 0.5 * a + np.array([1.0, 1.0, -1.0, -1.0])
        coef = lasso_cd(a[:, None], y, 0.2)
        assert coef == pytest.approx([0.3], abs=1e-10)

    def test_full_shrinkage(self, rng):
        A = rng.standard_normal((30, 4))
        y = rng.standard_normal(30)
        # a hair above max |A'y/n| absorbs rounding in the Gram products
        lam = np.max(np.abs(A.T @ y / 30)) * (1 + 1e-12)
        np.testing.assert_array_equal(lasso_cd(A, y, lam), np.zeros(4))

    def test_zero_penalty_is_least_squares(self, rng):
        A = rng.standard_normal((50, 3))
        y = A @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.standard_normal(50)
        np.testing.assert_allclose(lasso_cd(A, y, 0.0), np.linalg.lstsq(A, y, rcond=None)[0], atol=1e-7)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    def test_kkt(self, seed, lam):
        g = np.random.default_rng(seed)
        A = g.standard_normal((25, 6))
        y = A[:, 0] - A[:, 3] + g.standard_normal(25)
        coef = lasso_cd(A, y, lam)
        grad = A.T @ (y - A @ coef) / 25
        assert np.all(np.abs(grad) <= lam + 1e-7)
        active = coef != 0
        np.testing.assert_allclose(grad[active], lam * np.sign(coef[active]), atol=1e-7)


class TestNodewise:
    def test_large_penalty_is_diagonal(self, rng):
        X = rng.standard_normal((40, 5))
        est = nodewise_lasso(X, 1e3)
        Xc = X - X.mean(axis=0)
        np.testing.assert_allclose(est.gamma_hat, np.diag(40 / np.sum(Xc**2, axis=0)), rtol=1e-12)

    def test_zero_penalty_inverts(self, rng):
        X = rng.standard_normal((100, 5))
        est = nodewise_lasso(X, 0.0)
        S = sample_gram(centered(X))
        assert np.max(np.abs(est.gamma_hat - np.linalg.inv(S))) < 1e-6

    def test_diagonal_is_inverse_tau(self, rng):
        X = rng.standard_normal((60, 7))
        for est in (nodewise_lasso(X, 0.1), sqrt_lasso_nodewise(X, 0.3)):
            np.testing.assert_array_equal(np.diag(est.gamma_hat), 1.0 / est.tau_sq)

    def test_kkt_all_nodes(self, rng):
        X = rng.standard_normal((60, 8))
        est = nodewise_lasso(X, 0.15)
        assert node_kkt(X, est, 0.15) <= 1e-7

    def test_sqrt_lasso_kkt_uses_effective_penalty(self, rng):
        X = rng.standard_normal((60, 8))
        X[:, 3] *= 4.0
        est = sqrt_lasso_nodewise(X, 0.4)
        sd = np.sqrt(np.diag(sample_gram(centered(X))))
        assert node_kkt(X, est, est.lambdas, sd) <= 1e-7

    def test_sqrt_lasso_noise_fixed_point(self, rng):
        X = rng.standard_normal((80, 6))
        est = sqrt_lasso_nodewise(X, 0.3)
        S = sample_gram(centered(X))
        for j in range(6):
            others = np.delete(np.arange(6), j)
            g = -est.gamma_hat[j, others] * est.tau_sq[j]
            r = S[j, j] - 2 * S[j, others] @ g + g @ S[np.ix_(others, others)] @ g
            assert est.lambdas[j] == pytest.approx(0.3 * np.sqrt(r), rel=1e-5)

    def test_sqrt_lasso_scale_equivariant_support(self, rng):
        X = rng.standard_normal((70, 6))
        X[:, 1] += X[:, 0]
        a = sqrt_lasso_nodewise(X, 0.3)
        b = sqrt_lasso_nodewise(5.0 * X, 0.3)
        np.testing.assert_array_equal(a.gamma_hat != 0, b.gamma_hat != 0)
        np.testing.assert_allclose(b.gamma_hat * 25.0, a.gamma_hat, rtol=1e-5, atol=1e-9)

    def test_sqrt_lasso_large_penalty_diagonal(self, rng):
        X = rng.standard_normal((40, 5))
        est = sqrt_lasso_nodewise(X, 50.0)
        np.testing.assert_array_equal(est.gamma_hat, np.diag(np.diag(est.gamma_hat)))

    def test_permutation_equivariance(self, rng):
        X = rng.standard_normal((60, 6))
        X[:, 2] += 0.7 * X[:, 4]
        perm = rng.permutation(6)
        a = nodewise_lasso(X, 0.1).gamma_hat
        b = nodewise_lasso(X[:, perm], 0.1).gamma_hat
        np.testing.assert_allclose(b, a[np.ix_(perm, perm)], atol=1e-9)

    def test_degenerate_node(self):
        X = np.zeros((10, 3))
        X[:, 0] = np.arange(10.0)
        with pytest.raises(DegenerateNode):
            nodewise_lasso(X, 0.1)

    def test_default_penalty(self, rng):
        X = rng.standard_normal((50, 4))
        assert nodewise_lasso(X).level == pytest.approx(np.sqrt(np.log(4) / 50))


class TestSymmetrize:
    def test_already_symmetric(self, rng):
        A = rng.standard_normal((4, 4))
        A = A + A.T
        np.testing.assert_array_equal(symmetrize(A), A)

    def test_smaller_magnitude_wins(self):
        G = np.array([[1.0, 0.5], [-0.2, 1.0]])
        np.testing.assert_array_equal(symmetrize(G), [[1.0, -0.2], [-0.2, 1.0]])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_idempotent_and_closer_than_average(self, seed):
        G = np.random.default_rng(seed).standard_normal((5, 5))
        T = symmetrize(G)
        np.testing.assert_array_equal(T, T.T)
        np.testing.assert_array_equal(symmetrize(T), T)
        avg = (G + G.T) / 2
        assert np.abs(T - G).sum() <= np.abs(avg - G).sum() + 1e-12


class TestSelection:
    def test_single_element_grid(self, rng):
        assert select_lambda(rng.standard_normal((40, 4)), [0.3]) == 0.3

    def test_zero_wins_when_n_large(self, rng):
        X = rng.standard_normal((160, 10))
        assert select_lambda(X, [0.0, 0.5], method="lasso") == 0.0

    def test_ties_go_to_largest(self, rng):
        X = rng.standard_normal((40, 4))
        # every level beyond full shrinkage gives the same diagonal fit
        assert select_lambda(X, [100.0, 200.0, 300.0], method="lasso") == 300.0

    def test_interior_choice_ar1(self):
        S, _ = ar1_covariance(100, 0.6)
        n = 160
        grid = default_lambda_grid(n, 100)
        interior = 0
        for seed in range(5):
            X = sample_dataset(np.zeros(100), S, n, "gaussian", RngStream(seed).generator())
            lam = select_lambda(X, grid)
            interior += grid[0] < lam < grid[-1]
        assert interior >= 3

    def test_failed_levels_are_skipped(self, rng):
        X = rng.standard_normal((30, 3))
        X[:, 2] = X[:, 0] + X[:, 1]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            lam = select_lambda(X, [0.0, 0.2], method="lasso")
        assert lam == 0.2
        assert any("skipping" in str(w.message) for w in caught)

    def test_fit_path_matches_single_fits(self, rng):
        X = rng.standard_normal((50, 5))
        path = fit_path(X, [0.05, 0.2], method="lasso")
        for level, est in zip([0.05, 0.2], path):
            np.testing.assert_allclose(est.gamma_hat, nodewise_lasso(X, level).gamma_hat, atol=1e-8)


class TestDiagnostics:
    def test_oracle_zero(self, rng):
        S = np.cov(rng.standard_normal((30, 4)), rowvar=False)
        G = np.linalg.inv(S)
        d = diagnostics(PrecisionEstimate.oracle(G), S, G)
        assert d.fit_supnorm == pytest.approx(0.0, abs=1e-10)
        assert d.max_diag_err == 0 and d.max_row_l1_err == 0

    def test_identity_fit(self):
        assert fit_supnorm(np.eye(3), np.eye(3)) == 0.0

    def test_single_perturbation(self):
        G = np.eye(3)
        H = G.copy()
        H[0, 1] += 0.1
        assert diagnostics(H, np.eye(3), G).max_row_l1_err == pytest.approx(0.1)

    def test_error_shrinks_with_n(self):
        S, G = ar1_covariance(50, 0.6)
        errs = []
        for n in (40, 160):
            X = sample_dataset(np.zeros(50), S, n, "gaussian", RngStream(3).generator())
            est = nodewise_lasso(X, np.sqrt(np.log(50) / n))
            errs.append(diagnostics(est, sample_gram(centered(X)), G).max_row_l1_err)
        assert errs[1] < errs[0]


class TestSpec:
    def test_oracle_passthrough(self, rng):
        G = np.eye(3) * 2
        est = estimate_precision(rng.standard_normal((10, 3)), PrecisionSpec("oracle", gamma=G))
        np.testing.assert_array_equal(est.gamma_hat, G)

    def test_fixed_level(self, rng):
        X = rng.standard_normal((40, 5))
        est = estimate_precision(X, PrecisionSpec("lasso", level=0.2))
        np.testing.assert_allclose(est.gamma_hat, nodewise_lasso(X, 0.2).gamma_hat, atol=1e-10)

    def test_default_grid(self):
        grid = default_lambda_grid(100, 50)
        assert len(grid) == 10
        assert grid[0] == pytest.approx(0.1 * default_lambda(100, 50))
        assert grid[-1] == pytest.approx(2.0 * default_lambda(100, 50))
