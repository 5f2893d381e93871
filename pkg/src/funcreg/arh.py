"""ARH(1) processes: simulation, empirical covariance operators and the
rank-one kernel regressors of the surface regression model."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from funcreg.core import KernelOperator, SampledFunction, TimeGrid, eigh, svd_op
from funcreg.exceptions import ConfigError, DataError
from funcreg.preprocess import polynomial_projector, select_poly_degree
from funcreg.validation import check_finite_array, check_int

logger = logging.getLogger(__name__)

__all__ = [
    "SurfaceSeries",
    "ARH1Model",
    "KernelRegressors",
    "simulate_arh1",
    "empirical_autocov",
    "empirical_crosscov",
    "truncation_level",
    "build_kernel_regressors",
]


@dataclass(frozen=True, eq=False)
class SurfaceSeries:
    """Functional time series ``Y_1..Y_N`` sampled on one grid.

    Attributes
    ----------
    grid : TimeGrid
    values : ndarray of shape (N, G)
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = check_finite_array(self.values, "series values", ndim=2)
        if values.shape[1] != self.grid.size:
            raise DataError("series values do not match the grid")
        if values.shape[0] < 2:
            raise DataError("a series needs at least two elements")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, t):
        return SampledFunction(self.grid, self.values[t])

    def mean(self):
        return SampledFunction(self.grid, self.values.mean(axis=0))

    def centered(self, mean=None):
        mean = self.values.mean(axis=0) if mean is None else np.asarray(getattr(mean, "values", mean))
        return SurfaceSeries(self.grid, self.values - mean)


@dataclass(frozen=True, eq=False)
class ARH1Model:
    """``Y_n = mu + e_n`` with ``e_n = rho(e_{n-1}) + noise_n``."""

    rho: KernelOperator
    noise_cov: KernelOperator
    mean: SampledFunction = None

    @property
    def grid(self):
        return self.rho.grid

    @classmethod
    def diagonal(cls, grid, lambdas, functions, noise_vars, mean=None):
        """Model with ``rho = sum lambda_k psi_k x psi_k`` and noise
        ``sum s_k psi_k x psi_k`` on orthonormal ``functions`` of shape (K, G)."""
        functions = np.atleast_2d(np.asarray(functions, float))
        lambdas = np.asarray(lambdas, float)
        noise_vars = np.broadcast_to(np.asarray(noise_vars, float), lambdas.shape)
        rho = (functions.T * lambdas) @ functions
        noise = (functions.T * noise_vars) @ functions
        return cls(KernelOperator(grid, rho), KernelOperator(grid, noise), mean)


def simulate_arh1(model, n, burn_in=50, seed=None):
    """Draw ``n`` consecutive elements of a stationary ARH(1) process.

    Innovations are Gaussian with covariance ``model.noise_cov``, drawn via
    its eigen square root. The chain starts at zero and ``burn_in``
    elements are discarded.
    """
    n = check_int(n, "n", minimum=2)
    burn_in = check_int(burn_in, "burn_in", minimum=0)
    grid = model.grid
    _, _, s = svd_op(model.rho)
    if s.size and s[0] >= 1 - 1e-12:
        raise ConfigError(f"autocorrelation operator has norm {s[0]:.4g} >= 1")
    noise = eigh(model.noise_cov)
    if noise.values.size and noise.values[-1] < -1e-8 * max(noise.values[0], 1.0):
        raise ConfigError("noise covariance is not positive semi-definite")
    # square roots of roundoff-level eigenvalues would leak outside the noise range
    cutoff = 1e-12 * max(noise.values[0], 0.0) if noise.values.size else 0.0
    scale = np.sqrt(np.where(noise.values > cutoff, noise.values, 0.0))
    rng = np.random.default_rng(seed)
    # action of rho on a row vector e: (K @ (w * e)) == e @ (K * w).T
    step = (model.rho.kernel * grid.weights).T
    out = np.empty((n, grid.size))
    e = np.zeros(grid.size)
    for t in range(burn_in + n):
        z = rng.standard_normal(scale.size)
        e = e @ step + (z * scale) @ noise.functions
        if t >= burn_in:
            out[t - burn_in] = e
    if model.mean is not None:
        out += model.mean.values
    return SurfaceSeries(grid, out)


def empirical_autocov(series):
    """``(1/N) sum_t Y_t x Y_t``."""
    y = series.values
    return KernelOperator(series.grid, y.T @ y / y.shape[0])


def empirical_crosscov(series):
    """``(1/(N-1)) sum_t Y_{t+1} x Y_t``."""
    y = series.values
    return KernelOperator(series.grid, y[1:].T @ y[:-1] / (y.shape[0] - 1))


def truncation_level(n):
    """``max(1, round(ln n))`` eigen-directions for a sample of size ``n``."""
    n = check_int(n, "n", minimum=3)
    return max(1, int(round(math.log(n))))


@dataclass(frozen=True, eq=False)
class KernelRegressors:
    """Regressor operators ``X_n^i = left[r, i] x right[r, i]``.

    Row ``r`` belongs to response index ``rows[r]`` of the source series;
    lag ``i + 1`` pairs ``Y_{n-i-1} - mu`` (left) with ``Y_{n-i-2} - mu``
    (right).

    Attributes
    ----------
    grid : TimeGrid
    left, right : ndarray of shape (R, p, G)
    rows : ndarray of shape (R,)
    """

    grid: TimeGrid
    left: np.ndarray
    right: np.ndarray
    rows: np.ndarray

    @property
    def p(self):
        return self.left.shape[1]

    def __len__(self):
        return self.left.shape[0]

    def operator(self, r, i):
        return KernelOperator(self.grid, np.outer(self.left[r, i], self.right[r, i]))

    def adjoint(self):
        return KernelRegressors(self.grid, self.right, self.left, self.rows)

    def select(self, mask):
        return KernelRegressors(self.grid, self.left[mask], self.right[mask], self.rows[mask])

    def apply(self, beta):
        """``sum_i X_n^i(beta_i)`` for every row; ``beta`` has shape (p, G)."""
        beta = np.asarray(beta)
        coef = np.einsum("rig,ig->ri", self.right * self.grid.weights, beta)
        return np.einsum("ri,rig->rg", coef, self.left)

    def project(self, functions):
        """Projected regressors ``x[r, i, l, k] = <left, psi_l> <psi_k, right>``.

        ``functions`` are orthonormal basis values of shape (K, G).
        """
        wf = functions * self.grid.weights
        lp = self.left @ wf.T
        rp = self.right @ wf.T
        return lp[..., :, None] * rp[..., None, :]


def build_kernel_regressors(series, p, poly_degree=None, mean=None, rows=None):
    """Plug-in regressors ``(Y_{n-i} - mu) x (Y_{n-i-1} - mu)``, ``i = 1..p``.

    Parameters
    ----------
    series : SurfaceSeries
    p : int
        Number of lags.
    poly_degree : int, "aic" or None
        Replace every kernel by its least-squares tensor-product polynomial
        fit of this degree; ``"aic"`` chooses the degree in 1..5 by AIC.
    mean : array_like of shape (G,), optional
        Centring function; the series mean by default.
    rows : array_like of int, optional
        Zero-based response indices; defaults to every index with all lags
        available, ``p + 1 .. N - 1``.

    Returns
    -------
    KernelRegressors
    """
    N = len(series)
    p = check_int(p, "p", minimum=1)
    if p >= N - 2:
        raise ConfigError(f"p={p} needs more than {p + 2} series elements, got {N}")
    centered = series.centered(mean).values
    if rows is None:
        rows = np.arange(p + 1, N)
    rows = np.asarray(rows, dtype=int)
    if rows.size and (rows.min() < p + 1 or rows.max() >= N):
        raise DataError(f"response rows must lie in [{p + 1}, {N - 1}]")
    lags = np.arange(1, p + 1)
    left = centered[rows[:, None] - lags]
    right = centered[rows[:, None] - lags - 1]
    if poly_degree is not None:
        nodes = series.grid.nodes
        if poly_degree == "aic":
            G = series.grid.size
            poly_degree = select_poly_degree(left.reshape(-1, G), right.reshape(-1, G), nodes)
            logger.info("polynomial smoothing degree %d selected by AIC", poly_degree)
        proj = polynomial_projector(nodes, poly_degree)
        # the tensor fit of a rank-one kernel is the product of the factor fits
        left, right = left @ proj, right @ proj
    return KernelRegressors(series.grid, left, right, rows)
