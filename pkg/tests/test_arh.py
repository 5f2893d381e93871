import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funcreg.arh import (
    ARH1Model,
    SurfaceSeries,
    build_kernel_regressors,
    empirical_autocov,
    empirical_crosscov,
    simulate_arh1,
    truncation_level,
)
from funcreg.core import KernelOperator, TimeGrid, inner_product, orthonormalize, tensor_product
from funcreg.exceptions import ConfigError, DataError
from funcreg.preprocess import fit_kernel_polynomial


@pytest.fixture(scope="module")
def grid():
    return TimeGrid.uniform(0.0, 1.0, 31)


def fourier_basis(grid, k):
    t = grid.nodes
    raw = [np.ones_like(t)] + [np.sqrt(2) * np.cos(np.pi * j * t) for j in range(1, k)]
    return orthonormalize(grid, np.array(raw))


def smooth_noise(grid, k=4, decay=0.5):
    psi = fourier_basis(grid, k)
    return ARH1Model.diagonal(grid, np.zeros(k), psi, decay ** np.arange(k)).noise_cov


def lag1(x):
    x = x - x.mean()
    return np.dot(x[1:], x[:-1]) / np.dot(x, x)


class TestSimulate:
    def test_zero_rho_is_white(self, grid):
        model = ARH1Model(KernelOperator.zeros(grid), smooth_noise(grid))
        series = simulate_arh1(model, 2000, seed=1)
        r0 = empirical_autocov(series).hs_norm()
        r1 = empirical_crosscov(series).hs_norm()
        assert r1 <= 3 / math.sqrt(2000) * r0

    def test_zero_noise_gives_zero(self, grid):
        psi = fourier_basis(grid, 2)
        model = ARH1Model.diagonal(grid, [0.5, 0.2], psi, 0.0)
        series = simulate_arh1(model, 30, seed=0)
        assert np.all(series.values == 0)

    def test_diagonal_scalar_autocorrelation(self, grid):
        psi = fourier_basis(grid, 1)
        model = ARH1Model.diagonal(grid, [0.8], psi, 1.0)
        series = simulate_arh1(model, 2000, seed=7)
        proj = series.values @ (grid.weights * psi[0])
        assert abs(lag1(proj) - 0.8) <= 0.1

    def test_seed_determinism(self, grid):
        model = ARH1Model(KernelOperator.zeros(grid), smooth_noise(grid))
        a = simulate_arh1(model, 20, seed=3).values
        b = simulate_arh1(model, 20, seed=3).values
        np.testing.assert_array_equal(a, b)

    def test_rejects_explosive(self, grid):
        psi = fourier_basis(grid, 1)
        with pytest.raises(ConfigError):
            simulate_arh1(ARH1Model.diagonal(grid, [1.0], psi, 1.0), 10)

    def test_mean_is_added(self, grid):
        mean = np.sin(grid.nodes)
        from funcreg.core import SampledFunction

        psi = fourier_basis(grid, 1)
        model = ARH1Model.diagonal(grid, [0.0], psi, 0.0, mean=SampledFunction(grid, mean))
        np.testing.assert_array_equal(simulate_arh1(model, 3).values, np.tile(mean, (3, 1)))


class TestCovariances:
    def test_constant_series(self, grid):
        f = np.cos(grid.nodes)
        s = SurfaceSeries(grid, np.tile(f, (5, 1)))
        expected = tensor_product(s[0], s[0]).kernel
        np.testing.assert_allclose(empirical_autocov(s).kernel, expected, atol=1e-14)
        np.testing.assert_allclose(empirical_crosscov(s).kernel, expected, atol=1e-14)

    def test_sign_alternating(self, grid):
        f = np.cos(grid.nodes)
        s = SurfaceSeries(grid, np.array([f, -f] * 4))
        ff = np.outer(f, f)
        np.testing.assert_allclose(empirical_autocov(s).kernel, ff, atol=1e-14)
        np.testing.assert_allclose(empirical_crosscov(s).kernel, -ff, atol=1e-14)

    def test_trace_oracle(self, grid):
        rng = np.random.default_rng(0)
        s = SurfaceSeries(grid, rng.standard_normal((50, grid.size)))
        norms = [inner_product(s[t], s[t]) for t in range(50)]
        assert abs(empirical_autocov(s).trace() - np.mean(norms)) <= 1e-10

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 40))
    def test_autocov_is_psd(self, seed, n):
        g = TimeGrid.uniform(0, 1, 9)
        s = SurfaceSeries(g, np.random.default_rng(seed).standard_normal((n, 9)))
        K = empirical_autocov(s)
        assert K.is_self_adjoint()
        assert np.linalg.eigvalsh(K.weighted_matrix()).min() >= -1e-10

    def test_yule_walker_ratio(self, grid):
        psi = fourier_basis(grid, 1)
        model = ARH1Model.diagonal(grid, [0.5], psi, 1.0)
        s = simulate_arh1(model, 5000, seed=11)
        f = s[0].__class__(grid, psi[0])
        r0 = inner_product(empirical_autocov(s)(f), f)
        r1 = inner_product(empirical_crosscov(s)(f), f)
        assert abs(r1 / r0 - 0.5) <= 0.08

    def test_yule_walker_consistency_improves(self, grid):
        psi = fourier_basis(grid, 3)
        model = ARH1Model.diagonal(grid, [0.7, 0.4, 0.2], psi, [1.0, 0.5, 0.25])
        errs = []
        for n in (200, 2000):
            s = simulate_arh1(model, n, seed=5)
            R0, R1 = empirical_autocov(s), empirical_crosscov(s)
            # rho R0 as an operator product under the quadrature inner product
            rhoR0 = KernelOperator(grid, model.rho.kernel @ (grid.weights[:, None] * R0.kernel))
            errs.append((R1 - rhoR0).hs_norm() / R0.hs_norm())
        assert errs[1] < errs[0]


class TestTruncation:
    def test_reference_values(self):
        assert truncation_level(1061) == 7
        assert truncation_level(3) == 1
        assert truncation_level(55) == 4

    @settings(max_examples=200, deadline=None)
    @given(st.integers(3, 10**6))
    def test_growth(self, n):
        k = truncation_level(n)
        assert 1 <= k < n
        assert k <= math.log(n) + 1
        assert truncation_level(n + 1) >= k


class TestRegressors:
    def test_rows_and_lags(self, grid):
        rng = np.random.default_rng(0)
        s = SurfaceSeries(grid, rng.standard_normal((10, grid.size)))
        X = build_kernel_regressors(s, 2)
        assert X.rows.tolist() == list(range(3, 10))
        c = s.values - s.values.mean(axis=0)
        np.testing.assert_array_equal(X.left[0, 1], c[1])
        np.testing.assert_array_equal(X.right[0, 1], c[0])

    def test_zero_lag_element(self, grid):
        vals = np.zeros((6, grid.size))
        vals[1], vals[3] = 1.0, -1.0
        X = build_kernel_regressors(SurfaceSeries(grid, vals), 1)
        # row for n=3 uses Y_2 = 0 after centring (series mean is zero)
        assert np.all(X.operator(1, 0).kernel == 0)

    def test_pair_plugin(self, grid):
        f, g = np.sin(grid.nodes), np.cos(3 * grid.nodes)
        vals = np.array([g, f, np.zeros(grid.size)])
        vals = np.vstack([vals, vals, vals])
        # explicit zero mean keeps the pair intact
        X = build_kernel_regressors(SurfaceSeries(grid, vals), 1, mean=np.zeros(grid.size), rows=[2])
        np.testing.assert_array_equal(X.operator(0, 0).kernel, np.outer(f, g))

    def test_adjoint_swaps_factors(self, grid):
        rng = np.random.default_rng(1)
        X = build_kernel_regressors(SurfaceSeries(grid, rng.standard_normal((8, grid.size))), 3)
        for r in range(len(X)):
            for i in range(3):
                np.testing.assert_array_equal(
                    X.operator(r, i).adjoint().kernel, X.adjoint().operator(r, i).kernel
                )

    def test_polynomial_smoothing_matches_dense_fit(self, grid):
        rng = np.random.default_rng(2)
        s = SurfaceSeries(grid, rng.standard_normal((8, grid.size)))
        X = build_kernel_regressors(s, 2)
        Xs = build_kernel_regressors(s, 2, poly_degree=2)
        dense = fit_kernel_polynomial(X.operator(1, 1).kernel, grid.nodes, 2)
        np.testing.assert_allclose(Xs.operator(1, 1).kernel, dense, atol=1e-12)

    def test_aic_degree(self, grid):
        t = grid.nodes
        vals = np.array([1 + a * t + b * t**2 for a, b in np.random.default_rng(3).standard_normal((12, 2))])
        X = build_kernel_regressors(SurfaceSeries(grid, vals), 1, poly_degree="aic")
        np.testing.assert_allclose(
            X.left, build_kernel_regressors(SurfaceSeries(grid, vals), 1).left, atol=1e-10
        )

    def test_apply_matches_operator_sum(self, grid):
        rng = np.random.default_rng(4)
        X = build_kernel_regressors(SurfaceSeries(grid, rng.standard_normal((9, grid.size))), 2)
        beta = rng.standard_normal((2, grid.size))
        out = X.apply(beta)
        from funcreg.core import SampledFunction

        for r in range(len(X)):
            ref = sum(X.operator(r, i)(SampledFunction(grid, beta[i])).values for i in range(2))
            np.testing.assert_allclose(out[r], ref, atol=1e-12)

    def test_p_too_large(self, grid):
        s = SurfaceSeries(grid, np.zeros((5, grid.size)))
        with pytest.raises(ConfigError):
            build_kernel_regressors(s, 3)
        with pytest.raises(DataError):
            build_kernel_regressors(s, 1, rows=[1])
