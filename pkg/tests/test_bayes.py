import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funcreg.arh import ARH1Model, KernelRegressors, SurfaceSeries, simulate_arh1
from funcreg.bayes import (
    BetaHyper,
    CInvCoefficients,
    apply_cinv,
    band_matrix,
    beta_from_moments,
    block_bootstrap_lag1,
    cinv_coefficients,
    fit_bayes_gls,
    fit_beta_hyper,
    gls_solve,
    lag1_autocorrelation,
    log_posterior,
    loocv,
    loocv_targets,
    map_lambda,
    map_lambda_1d,
    ols_fit,
    predict,
    project_residuals,
)
from funcreg.core import EigenSystem, SampledFunction, TimeGrid, inner_product, orthonormalize
from funcreg.exceptions import DataError, NumericalError, SingularSystemError


def random_basis(grid, k, rng):
    return orthonormalize(grid, rng.standard_normal((k, grid.size)))


def random_r0(grid, k, rng):
    vals = np.sort(rng.uniform(0.2, 3.0, k))[::-1]
    return EigenSystem(grid, vals, random_basis(grid, k, rng))


def dense_covariance(r0_vals, lam, n):
    # Cov(<e_s, psi_k>, <e_t, psi_l>) = delta_kl mu_k lam_k^|s-t|
    k = r0_vals.size
    C = np.zeros((n * k, n * k))
    for s in range(n):
        for t in range(n):
            C[s * k:(s + 1) * k, t * k:(t + 1) * k] = np.diag(r0_vals * lam ** abs(s - t))
    return C


def ar1_series(lam, n, rng, sigma=1.0):
    x = np.zeros(n)
    x[0] = rng.standard_normal() * sigma / np.sqrt(1 - lam**2)
    for t in range(1, n):
        x[t] = lam * x[t - 1] + sigma * rng.standard_normal()
    return x


def grid_argmax(col, a, b):
    # exhaustive grid at step 1e-5, refined at step 1e-7 around the best point
    coarse = np.arange(1e-6, 1 - 1e-6, 1e-5)
    best = coarse[np.argmax(log_posterior(coarse, col, a, b))]
    fine = np.arange(max(best - 2e-5, 1e-6), min(best + 2e-5, 1 - 1e-6), 1e-7)
    return fine[np.argmax(log_posterior(fine, col, a, b))]


class TestCInvScalar:
    def test_reference_coefficients(self):
        grid = TimeGrid.cells(1)
        r0 = EigenSystem(grid, np.array([1.0]), np.array([[1.0]]))
        co = cinv_coefficients(r0, [0.5])
        assert co.a[0, 0] == pytest.approx(4 / 3, abs=1e-15)
        assert co.b[0, 0] == pytest.approx(-2 / 3, abs=1e-15)
        assert co.c[0, 0] == pytest.approx(5 / 3, abs=1e-15)
        corr = np.array([[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
        np.testing.assert_allclose(band_matrix(co, 3), np.linalg.inv(corr), atol=1e-14)

    def test_ones_vector_weights(self):
        grid = TimeGrid.cells(1)
        r0 = EigenSystem(grid, np.array([1.0]), np.array([[1.0]]))
        out = apply_cinv(cinv_coefficients(r0, [0.5]), np.ones((3, 1)))
        np.testing.assert_allclose(out[:, 0], [2 / 3, 1 / 3, 2 / 3], atol=1e-14)

    def test_white_noise_limit(self):
        rng = np.random.default_rng(0)
        grid = TimeGrid.uniform(0, 1, 12)
        r0 = random_r0(grid, 3, rng)
        co = cinv_coefficients(r0, np.zeros(3))
        np.testing.assert_array_equal(co.b, 0)
        np.testing.assert_allclose(co.a, np.diag(1 / r0.values), atol=1e-12)
        np.testing.assert_allclose(co.c, co.a, atol=1e-15)
        F = rng.standard_normal((4, 12))
        expected = r0.synthesize(r0.coefficients(F) / r0.values)
        np.testing.assert_allclose(apply_cinv(co, F), expected, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_block_identities(self, seed):
        rng = np.random.default_rng(seed)
        grid = TimeGrid.uniform(0, 1, 9)
        r0 = random_r0(grid, 3, rng)
        lam = rng.uniform(0, 0.99, 3)
        co = cinv_coefficients(r0, lam)
        off = ~np.eye(3, dtype=bool)
        assert np.abs(co.a[off]).max() < 1e-12
        np.testing.assert_allclose(np.diag(co.c), np.diag(co.a) * (1 + lam**2), rtol=1e-14)
        np.testing.assert_allclose(np.diag(co.b), -np.diag(co.a) * lam, rtol=1e-14)

    def test_pole_rejected(self):
        grid = TimeGrid.cells(1)
        r0 = EigenSystem(grid, np.array([1.0]), np.array([[1.0]]))
        with pytest.raises(NumericalError):
            cinv_coefficients(r0, [1.0])


class TestApplyCInvDense:
    @pytest.mark.parametrize("n", range(3, 9))
    @pytest.mark.parametrize("k", range(1, 5))
    def test_matches_dense_inverse(self, n, k):
        rng = np.random.default_rng(100 * n + k)
        grid = TimeGrid.uniform(0, 1, 10)
        for _ in range(50):
            r0 = random_r0(grid, k, rng)
            lam = rng.uniform(0.0, 0.95, k)
            co = cinv_coefficients(r0, lam)
            F = rng.standard_normal((n, grid.size))
            got = r0.coefficients(apply_cinv(co, F)).ravel()
            ref = np.linalg.solve(dense_covariance(r0.values, lam, n), r0.coefficients(F).ravel())
            assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(ref)


class TestPosterior:
    def test_boundaries(self):
        col = np.random.default_rng(0).standard_normal(30)
        assert log_posterior(0.0, col, 1, 1) == -np.inf
        assert log_posterior(1.0, col, 1, 1) == -np.inf
        assert log_posterior(1e-300, col, 2, 1) < log_posterior(1e-3, col, 2, 1) - 500

    def test_empty_data_symmetric_prior(self):
        assert map_lambda_1d(np.zeros(10), 2.0, 2.0) == pytest.approx(0.5, abs=1e-7)

    @pytest.mark.parametrize("seed", range(10))
    def test_flat_prior_is_clipped_cls(self, seed):
        rng = np.random.default_rng(seed)
        lam = rng.uniform(-0.3, 0.95)
        col = ar1_series(lam, 60, rng)
        cls = np.dot(col[1:], col[:-1]) / np.dot(col[:-1], col[:-1])
        expected = np.clip(cls, 1e-6, 1 - 1e-6)
        assert abs(map_lambda_1d(col, 1.0, 1.0) - expected) <= 1e-6

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_grid_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        col = ar1_series(rng.uniform(0.05, 0.95), int(rng.integers(10, 200)), rng)
        a, b = rng.uniform(1, 20, 2)
        assert abs(map_lambda_1d(col, a, b) - grid_argmax(col, a, b)) <= 1e-6

    def test_strong_prior_weak_data(self):
        col = ar1_series(0.2, 10, np.random.default_rng(3))
        assert map_lambda_1d(col, 200.0, 2.0) > 0.9

    def test_monotone_in_a(self):
        col = ar1_series(0.4, 80, np.random.default_rng(4))
        est = [map_lambda_1d(col, a, 3.0) for a in (1, 1.5, 2, 5, 10, 30, 100)]
        assert all(x <= y + 1e-9 for x, y in zip(est, est[1:]))

    def test_factorization_two_dimensional(self):
        rng = np.random.default_rng(5)
        cols = np.stack([ar1_series(0.7, 50, rng), ar1_series(0.3, 50, rng)], axis=1)
        a, b = np.array([2.0, 3.0]), np.array([1.5, 4.0])

        def joint(l1, l2):
            return log_posterior(l1, cols[:, 0], a[0], b[0]) + log_posterior(l2, cols[:, 1], a[1], b[1])

        g = np.linspace(1e-3, 1 - 1e-3, 999)
        L1, L2 = np.meshgrid(g, g, indexing="ij")
        i, j = np.unravel_index(np.argmax(joint(L1, L2)), L1.shape)
        for step in (1e-4, 1e-5, 1e-6):
            g1 = L1[i, j] + step * np.arange(-30, 31)
            g2 = L2[i, j] + step * np.arange(-30, 31)
            L1, L2 = np.meshgrid(g1, g2, indexing="ij")
            i, j = np.unravel_index(np.argmax(joint(L1, L2)), L1.shape)
        scores = project_residuals(cols, EigenSystem(TimeGrid.cells(2), np.ones(2), np.eye(2) * np.sqrt(2)))
        per_k = map_lambda(scores, BetaHyper(a, b))
        # the scores above are scaled by sqrt(2) * 1/2; the posterior is scale-invariant
        np.testing.assert_allclose(per_k, [L1[i, j], L2[i, j]], atol=1e-5)

    def test_non_finite_everywhere(self):
        with pytest.raises(NumericalError):
            map_lambda_1d(np.ones(5), np.nan, 1.0)


class TestBetaHyper:
    def test_concentrated_replicates(self):
        a, b, fallback = beta_from_moments(0.5, 1e-6)
        assert not fallback and a == pytest.approx(b) and a >= 10

    def test_overdispersed_fallback(self):
        assert beta_from_moments(0.5, 0.3) == (1.0, 1.0, True)

    def test_beta_sampling_oracle(self):
        reps = np.random.default_rng(0).beta(4, 2, 2000)
        a, b, _ = beta_from_moments(reps.mean(), reps.var())
        assert abs(a - 4) <= 1.0 and abs(b - 2) <= 0.5

    def test_bootstrap_shape_and_determinism(self):
        x = np.random.default_rng(1).standard_normal((100, 3))
        r1 = block_bootstrap_lag1(x, 50, 5, np.random.default_rng(2))
        r2 = block_bootstrap_lag1(x, 50, 5, np.random.default_rng(2))
        assert r1.shape == (50, 3)
        np.testing.assert_array_equal(r1, r2)

    @pytest.mark.parametrize("n,L", [(100, 5), (101, 5), (37, 37), (50, 7), (23, 1)])
    def test_bootstrap_matches_explicit_resampling(self, n, L):
        x = np.random.default_rng(n).standard_normal((n, 2))
        got = block_bootstrap_lag1(x, 40, L, np.random.default_rng(9))
        # explicit oracle: draw the same block starts, gather, and recompute
        n_blocks = -(-n // L)
        starts = np.random.default_rng(9).integers(0, n - L + 1, size=(40, n_blocks))
        idx = (starts[:, :, None] + np.arange(L)).reshape(40, -1)[:, :n]
        ref = lag1_autocorrelation(x[idx], axis=1)
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_fit_on_ar1_concentrates_near_truth(self):
        rng = np.random.default_rng(6)
        col = ar1_series(0.5, 3000, rng)
        scores = project_residuals(col[:, None], EigenSystem(TimeGrid.cells(1), np.ones(1), np.ones((1, 1))))
        hyper = fit_beta_hyper(scores, n_boot=500, seed=0)
        mode = (hyper.a - 1) / (hyper.a + hyper.b - 2)
        assert hyper.a[0] >= 10 and hyper.b[0] >= 10
        assert abs(mode[0] - 0.5) < 0.1

    def test_too_few(self):
        scores = project_residuals(np.zeros((10, 1)), EigenSystem(TimeGrid.cells(1), np.ones(1), np.ones((1, 1))))
        with pytest.raises(DataError):
            fit_beta_hyper(scores)


def synthetic_regressors(grid, basis, n, p, rng):
    # factors inside span(basis) so the projected model is exact
    k = basis.shape[0]
    left = rng.standard_normal((n, p, k)) @ basis
    right = rng.standard_normal((n, p, k)) @ basis
    return KernelRegressors(grid, left, right, np.arange(n))


def dense_design(X, basis):
    # D[(r, l), (i, k)] = <X_r^i psi_k, psi_l> via explicit operators
    grid = X.grid
    K = basis.shape[0]
    D = np.zeros((len(X) * K, X.p * K))
    for r in range(len(X)):
        for i in range(X.p):
            op = X.operator(r, i)
            for k in range(K):
                img = op(SampledFunction(grid, basis[k]))
                for l in range(K):
                    D[r * K + l, i * K + k] = inner_product(img, SampledFunction(grid, basis[l]))
    return D


class TestGLS:
    grid = TimeGrid.uniform(0, 1, 15)

    def test_exact_model_recovery(self):
        rng = np.random.default_rng(0)
        psi = random_basis(self.grid, 3, rng)
        basis = EigenSystem(self.grid, np.ones(3), psi)
        X = synthetic_regressors(self.grid, psi, 30, 2, rng)
        beta = rng.standard_normal((2, 3)) @ psi
        Y = X.apply(beta)
        for co in (CInvCoefficients.identity(basis), cinv_coefficients(basis, [0.6, 0.2, 0.4])):
            fit = gls_solve(X, Y, co)
            assert np.linalg.norm(fit.beta - beta) <= 1e-8 * np.linalg.norm(beta)
            np.testing.assert_allclose(predict(X, fit), Y, atol=1e-8)

    def test_identity_weighting_equals_ols(self):
        rng = np.random.default_rng(1)
        psi = random_basis(self.grid, 4, rng)
        basis = EigenSystem(self.grid, np.ones(4), psi)
        X = synthetic_regressors(self.grid, psi, 25, 3, rng)
        Y = rng.standard_normal((25, self.grid.size))
        gls = gls_solve(X, Y, CInvCoefficients.identity(basis))
        ols = ols_fit(X, Y, basis)
        assert np.abs(gls.beta - ols.beta).max() <= 1e-12
        # independent least-squares oracle on the stacked dense design
        D = dense_design(X, psi)
        y = basis.coefficients(Y).ravel()
        ref = np.linalg.lstsq(D, y, rcond=None)[0]
        np.testing.assert_allclose(ols.coef.ravel(), ref, atol=1e-10)

    @pytest.mark.parametrize("n,k", [(n, k) for n in (3, 5, 8) for k in (1, 2, 3)])
    def test_matches_dense_gls(self, n, k):
        rng = np.random.default_rng(10 * n + k)
        r0 = random_r0(self.grid, k, rng)
        lam = rng.uniform(0.05, 0.9, k)
        co = cinv_coefficients(r0, lam)
        X = synthetic_regressors(self.grid, r0.functions, n, 2, rng)
        Y = rng.standard_normal((n, self.grid.size))
        fit = gls_solve(X, Y, co)
        D = dense_design(X, r0.functions)
        Hinv = np.linalg.inv(dense_covariance(r0.values, lam, n))
        y = r0.coefficients(Y).ravel()
        ref = np.linalg.solve(D.T @ Hinv @ D, D.T @ Hinv @ y)
        np.testing.assert_allclose(fit.coef.ravel(), ref, rtol=1e-9, atol=1e-9)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(2)
        r0 = random_r0(self.grid, 3, rng)
        co = cinv_coefficients(r0, [0.8, 0.5, 0.1])
        X = synthetic_regressors(self.grid, r0.functions, 20, 2, rng)
        Y = rng.standard_normal((20, self.grid.size))
        fit = gls_solve(X, Y, co)
        D = dense_design(X, r0.functions)
        e = r0.coefficients(fit.residuals).ravel()
        assert np.abs(D.T @ band_matrix(co, 20) @ e).max() <= 1e-8

    def test_fitted_plus_residuals(self):
        rng = np.random.default_rng(3)
        basis = EigenSystem(self.grid, np.ones(2), random_basis(self.grid, 2, rng))
        X = synthetic_regressors(self.grid, basis.functions, 12, 1, rng)
        Y = rng.standard_normal((12, self.grid.size))
        mu = rng.standard_normal(self.grid.size)
        fit = ols_fit(X, Y, basis, intercept=mu)
        np.testing.assert_allclose(fit.fitted + fit.residuals, Y, atol=1e-10)

    def test_zero_regressors_singular(self):
        basis = EigenSystem(self.grid, np.ones(1), random_basis(self.grid, 1, np.random.default_rng(0)))
        X = KernelRegressors(self.grid, np.zeros((5, 1, 15)), np.zeros((5, 1, 15)), np.arange(5))
        with pytest.raises(SingularSystemError) as info:
            ols_fit(X, np.ones((5, 15)), basis)
        assert not np.isfinite(info.value.condition_number) or info.value.condition_number > 1e12

    def test_duplicated_columns_singular(self):
        rng = np.random.default_rng(4)
        psi = random_basis(self.grid, 2, rng)
        X = synthetic_regressors(self.grid, psi, 10, 1, rng)
        dup = KernelRegressors(self.grid, np.repeat(X.left, 2, axis=1), np.repeat(X.right, 2, axis=1), X.rows)
        with pytest.raises(SingularSystemError):
            ols_fit(dup, rng.standard_normal((10, 15)), EigenSystem(self.grid, np.ones(2), psi))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_predict_is_linear(self, seed):
        rng = np.random.default_rng(seed)
        psi = random_basis(self.grid, 2, rng)
        X = synthetic_regressors(self.grid, psi, 6, 2, rng)
        b1, b2 = rng.standard_normal((2, 2, self.grid.size))
        np.testing.assert_allclose(predict(X, b1 + b2), predict(X, b1) + predict(X, b2), atol=1e-12)
        assert np.all(predict(X, np.zeros((2, self.grid.size))) == 0)


def diag_arh_series(grid, lambdas, noise, n, seed):
    t = grid.nodes
    raw = [np.ones_like(t)] + [np.cos(np.pi * j * t) for j in range(1, len(lambdas))]
    psi = orthonormalize(grid, np.array(raw))
    return simulate_arh1(ARH1Model.diagonal(grid, lambdas, psi, noise), n, seed=seed), psi


class TestPipeline:
    def test_map_recovers_diagonal_autocorrelation(self):
        grid = TimeGrid.uniform(0, 1, 25)
        series, _ = diag_arh_series(grid, [0.8, 0.5, 0.3], [1.0, 0.5, 0.25], 500, seed=2024)
        from funcreg.arh import empirical_autocov
        from funcreg.core import eigh

        scores = project_residuals(series.values, eigh(empirical_autocov(series)).truncate(3))
        lam = map_lambda(scores, BetaHyper.flat(3))
        assert np.abs(lam - [0.8, 0.5, 0.3]).max() <= 0.15

    def test_fit_runs_and_is_deterministic(self):
        grid = TimeGrid.uniform(0, 1, 12)
        series, _ = diag_arh_series(grid, [0.6, 0.3], [1.0, 0.4], 120, seed=1)
        f1 = fit_bayes_gls(series, 2, seed=5, n_boot=100)
        f2 = fit_bayes_gls(series, 2, seed=5, n_boot=100)
        np.testing.assert_array_equal(f1.beta, f2.beta)
        assert f1.k == min(5, 2) or f1.k <= 5
        assert np.all((f1.lambda_hat > 0) & (f1.lambda_hat < 1))

    def test_constant_series_zero_fit(self):
        grid = TimeGrid.uniform(0, 1, 6)
        series = SurfaceSeries(grid, np.tile(np.linspace(1, 2, 6), (30, 1)))
        fit = fit_bayes_gls(series, 1)
        assert np.all(fit.beta == 0)


class TestLOOCV:
    def test_reference_iteration_count(self):
        targets, window = loocv_targets(1061, 7)
        assert targets.size == 993
        assert (window.start, window.stop) == (30, 1030)
        assert targets[0] - 7 - 1 == 29  # deepest lag reaches one node into the margin

    def test_no_trim_count(self):
        targets, _ = loocv_targets(50, 3, edge_trim=0)
        assert targets.size == 50 - 3 - 1

    def test_constant_series(self):
        grid = TimeGrid.uniform(0, 1, 5)
        series = SurfaceSeries(grid, np.tile(np.arange(5.0), (40, 1)))
        res = loocv(series, 1, edge_trim=0)
        assert res.errors.max() <= 1e-6
        assert res.mean == pytest.approx(res.errors.mean(), abs=1e-12)

    def test_small_series_deterministic_and_parallel(self):
        grid = TimeGrid.uniform(0, 1, 8)
        series, _ = diag_arh_series(grid, [0.5, 0.2], [1.0, 0.5], 60, seed=3)
        kw = dict(edge_trim=4, seed=11, n_boot=50)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            r1 = loocv(series, 2, **kw)
            r2 = loocv(series, 2, n_jobs=2, **kw)
            r3 = loocv(series, 2, reuse_correlation=True, **kw)
        np.testing.assert_array_equal(r1.errors, r2.errors)
        assert r1.n_iterations == r3.n_iterations == 60 - 4 - 2
        assert np.all(np.isfinite(r3.errors))

    def test_too_short(self):
        grid = TimeGrid.uniform(0, 1, 4)
        series = SurfaceSeries(grid, np.random.default_rng(0).standard_normal((15, 4)))
        with pytest.raises(DataError):
            loocv(series, 2, edge_trim=0)
