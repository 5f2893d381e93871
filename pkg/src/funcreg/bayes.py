"""Bayesian plug-in generalized least squares for surface regression with
ARH(1) errors.

The error autocorrelation operator is assumed diagonal in the eigenbasis
``psi_k`` of the error covariance ``R0``, with eigenvalues ``lambda_k``
that receive independent beta priors. Given MAP estimates, the inverse of
the stacked error covariance is block tridiagonal in time::

    H = [[A, B,  0, ...],
         [B', C, B, ...],
         [..., B', C, B],
         [...,  0, B', A]]

with ``A = R0^-1 / (1 - lambda^2)``, ``B = -lambda A`` and
``C = (1 + lambda^2) A`` in the ``psi`` coordinates. Regression
coefficients are then solved for in those coordinates.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from funcreg.arh import SurfaceSeries, build_kernel_regressors, truncation_level
from funcreg.core import EigenSystem, KernelOperator, eigh, stable_rank
from funcreg.exceptions import ConfigError, DataError, NumericalError, SingularSystemError
from funcreg.preprocess import edge_trim_count, split_edge_trim
from funcreg.validation import check_int

logger = logging.getLogger(__name__)

__all__ = [
    "BetaHyper",
    "ProjectedResiduals",
    "CInvCoefficients",
    "GLSFit",
    "BayesFit",
    "LOOCVResult",
    "project_residuals",
    "lag1_autocorrelation",
    "block_bootstrap_lag1",
    "beta_from_moments",
    "fit_beta_hyper",
    "log_posterior",
    "map_lambda_1d",
    "map_lambda",
    "cinv_coefficients",
    "band_matrix",
    "apply_cinv",
    "gls_solve",
    "ols_fit",
    "predict",
    "fit_bayes_gls",
    "loocv",
]

LAMBDA_BOUNDS = (1e-6, 1 - 1e-6)
#: condition number above which a normal system is treated as singular
MAX_CONDITION = 1e12
#: relative eigenvalue floor when truncating the residual covariance
R0_RTOL = 1e-10


@dataclass(frozen=True)
class BetaHyper:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, float))
        b = np.atleast_1d(np.asarray(self.b, float))
        if a.shape != b.shape or np.any(a <= 0) or np.any(b <= 0):
            raise ConfigError("beta shape parameters must be positive and paired")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def flat(cls, k):
        return cls(np.ones(k), np.ones(k))


@dataclass(frozen=True, eq=False)
class ProjectedResiduals:
    """Residual scores ``coeffs[t, k] = <e_t, psi_k>``."""

    coeffs: np.ndarray
    basis: EigenSystem

    @property
    def sigma(self):
        return np.sqrt(np.maximum(np.mean(self.coeffs**2, axis=0), np.finfo(float).tiny))

    @property
    def k(self):
        return self.coeffs.shape[1]


def project_residuals(residuals, basis):
    """Scores of ``residuals`` of shape (N, G) on the orthonormal ``basis``."""
    return ProjectedResiduals(basis.coefficients(residuals), basis)


# ---------------------------------------------------------------- prior fitting


def lag1_autocorrelation(x, axis=-1):
    """Sample lag-1 autocorrelation along ``axis``."""
    x = np.moveaxis(np.asarray(x, float), axis, -1)
    x = x - x.mean(axis=-1, keepdims=True)
    num = np.sum(x[..., 1:] * x[..., :-1], axis=-1)
    den = np.sum(x * x, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, 0.0)


def block_bootstrap_lag1(x, n_boot, block_len, rng):
    """Moving-block bootstrap replicates of the lag-1 autocorrelation.

    Each replicate concatenates ``ceil(N / block_len)`` randomly started
    blocks and truncates to length ``N``. Block sums come from prefix sums,
    so a replicate costs O(number of blocks) rather than O(N).

    Parameters
    ----------
    x : ndarray of shape (N,) or (N, K)
    n_boot, block_len : int
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of shape (n_boot,) or (n_boot, K)
    """
    x = np.asarray(x, float)
    squeeze = x.ndim == 1
    x = x.reshape(x.shape[0], -1)
    n = x.shape[0]
    L = min(block_len, n)
    n_blocks = -(-n // L)
    tail = n - (n_blocks - 1) * L
    starts = rng.integers(0, n - L + 1, size=(n_boot, n_blocks))

    zero = np.zeros((1, x.shape[1]))
    c1 = np.concatenate([zero, np.cumsum(x, axis=0)])
    c2 = np.concatenate([zero, np.cumsum(x * x, axis=0)])
    cp = np.concatenate([zero, np.cumsum(x[:-1] * x[1:], axis=0)])

    lens = np.full(n_blocks, L)
    lens[-1] = tail
    ends = starts + lens
    s1 = (c1[ends] - c1[starts]).sum(axis=1)
    s2 = (c2[ends] - c2[starts]).sum(axis=1)
    # products inside each block, then across block junctions
    prod = (cp[ends - 1] - cp[starts]).sum(axis=1)
    prod += (x[starts[:, :-1] + L - 1] * x[starts[:, 1:]]).sum(axis=1)
    first = x[starts[:, 0]]
    last = x[starts[:, -1] + tail - 1]

    m = s1 / n
    num = prod - m * (2 * s1 - first - last) + (n - 1) * m * m
    den = s2 - n * m * m
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / den, 0.0)
    return out[:, 0] if squeeze else out


def beta_from_moments(mean, var, floor=1.0):
    """Method-of-moments beta shapes, floored at ``floor``.

    Returns ``(a, b, fallback)``; ``fallback`` is True when the variance is
    too large for any beta law and the flat prior ``a = b = 1`` is used.
    """
    var = max(var, 1e-12)
    spread = mean * (1 - mean)
    if var >= spread:
        return 1.0, 1.0, True
    scale = spread / var - 1
    return max(mean * scale, floor), max((1 - mean) * scale, floor), False


def fit_beta_hyper(residuals, n_boot=500, block_len=None, seed=None):
    """Beta prior per direction from bootstrapped lag-1 autocorrelations.

    Replicates are clipped to ``(0.01, 0.99)`` before moment matching.
    """
    coeffs = residuals.coeffs
    n = coeffs.shape[0]
    if n < 20:
        raise DataError(f"prior fitting needs at least 20 residuals, got {n}")
    n_boot = check_int(n_boot, "n_boot", minimum=1)
    block_len = math.ceil(n ** (1 / 3)) if block_len is None else check_int(block_len, "block_len", minimum=1)
    reps = np.clip(block_bootstrap_lag1(coeffs, n_boot, block_len, np.random.default_rng(seed)), 0.01, 0.99)
    a, b = np.empty(coeffs.shape[1]), np.empty(coeffs.shape[1])
    for k in range(coeffs.shape[1]):
        a[k], b[k], fallback = beta_from_moments(reps[:, k].mean(), reps[:, k].var())
        if fallback:
            warnings.warn(
                f"bootstrap spread too wide for a beta prior on direction {k}; using flat prior",
                RuntimeWarning,
                stacklevel=2,
            )
    return BetaHyper(a, b)


# ---------------------------------------------------------------- MAP


def _ar_stats(col):
    col = np.asarray(col, float)
    return np.dot(col[:-1], col[:-1]), np.dot(col[1:], col[:-1]), np.dot(col[1:], col[1:]), col.size


def _posterior_from_stats(lam, stats, a, b):
    sxx, sxy, syy, n = stats
    lam = np.asarray(lam, float)
    inside = (lam > 0) & (lam < 1)
    safe = np.where(inside, lam, 0.5)
    out = (a - 1) * np.log(safe) + (b - 1) * np.log1p(-safe)
    if sxx > 0 or syy > 0:
        q = (sxx * safe**2 - 2 * sxy * safe + syy) / (n - 1)
        out = out - (n - 1) / 2 * np.log(np.maximum(q, np.finfo(float).tiny))
    return np.where(inside, out, -np.inf)


def log_posterior(lam, col, a, b):
    """Profiled log posterior of one autocorrelation eigenvalue.

    ``-((N-1)/2) log s2(lam) + (a-1) log lam + (b-1) log(1-lam)`` where
    ``s2(lam)`` is the mean squared one-step innovation. An all-zero column
    contributes no data term. Values outside ``(0, 1)`` give ``-inf``.
    """
    if len(col) < 3:
        raise DataError("need at least 3 residual scores")
    return _posterior_from_stats(lam, _ar_stats(col), a, b)


def _posterior_derivatives(lam, stats, a, b):
    sxx, sxy, syy, n = stats
    d1 = (a - 1) / lam - (b - 1) / (1 - lam)
    d2 = -(a - 1) / lam**2 - (b - 1) / (1 - lam) ** 2
    if sxx > 0 or syy > 0:
        q = sxx * lam**2 - 2 * sxy * lam + syy
        dq = 2 * sxx * lam - 2 * sxy
        d1 -= (n - 1) / 2 * dq / q
        d2 -= (n - 1) / 2 * (2 * sxx * q - dq**2) / q**2
    return d1, d2


def map_lambda_1d(col, a, b, bounds=LAMBDA_BOUNDS, tol=1e-8, n_coarse=2001):
    """Maximize :func:`log_posterior` on ``bounds``.

    A coarse grid brackets the global maximum, golden section narrows the
    bracket to ``tol``, and a single Newton step is kept if it improves
    the objective.
    """
    stats = _ar_stats(col)
    lo, hi = bounds
    f = lambda x: float(_posterior_from_stats(x, stats, a, b))  # noqa: E731

    grid = np.linspace(lo, hi, n_coarse)
    vals = _posterior_from_stats(grid, stats, a, b)
    if not np.any(np.isfinite(vals)):
        raise NumericalError("log posterior is not finite anywhere on (0, 1)")
    j = int(np.nanargmax(vals))
    left, right = grid[max(j - 1, 0)], grid[min(j + 1, n_coarse - 1)]

    invphi = (math.sqrt(5) - 1) / 2
    c = right - invphi * (right - left)
    d = left + invphi * (right - left)
    fc, fd = f(c), f(d)
    while right - left > tol:
        if fc >= fd:
            right, d, fd = d, c, fc
            c = right - invphi * (right - left)
            fc = f(c)
        else:
            left, c, fc = c, d, fd
            d = left + invphi * (right - left)
            fd = f(d)
    best = (left + right) / 2
    fbest = f(best)
    # the bracket may have collapsed onto a bound
    for edge in (lo, hi):
        if f(edge) > fbest:
            best, fbest = edge, f(edge)

    d1, d2 = _posterior_derivatives(best, stats, a, b)
    if d2 < 0:
        cand = best - d1 / d2
        if lo <= cand <= hi and f(cand) > fbest:
            best = cand
    return float(np.clip(best, lo, hi))


def map_lambda(residuals, hyper):
    """Per-direction MAP estimates; the joint posterior factorizes."""
    if residuals.k != hyper.a.size:
        raise DataError("residual directions and prior dimensions disagree")
    lam = np.array(
        [map_lambda_1d(residuals.coeffs[:, k], hyper.a[k], hyper.b[k]) for k in range(residuals.k)]
    )
    if np.any(lam > 0.999):
        warnings.warn(f"near unit-root autocorrelation estimate {lam.max():.6f}", RuntimeWarning, stacklevel=2)
    return lam


# ---------------------------------------------------------------- inverse covariance


@dataclass(frozen=True, eq=False)
class CInvCoefficients:
    """Block entries of the inverse error covariance in the ``basis`` coordinates.

    Attributes
    ----------
    a, b, c : ndarray of shape (K, K)
        Corner, off-diagonal and interior diagonal blocks.
    lambda_hat : ndarray of shape (K,)
    basis : EigenSystem
        Orthonormal ``psi_k`` used for projection.
    r0_eigs : EigenSystem or None
        Truncated eigen system of the error covariance.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lambda_hat: np.ndarray
    basis: EigenSystem
    r0_eigs: EigenSystem = None

    @property
    def k(self):
        return self.a.shape[0]

    @classmethod
    def identity(cls, basis):
        """Unit weighting; GLS with these coefficients is OLS."""
        k = len(basis)
        eye = np.eye(k)
        return cls(eye, np.zeros((k, k)), eye.copy(), np.zeros(k), basis, None)


def cinv_coefficients(r0, lambda_hat, basis=None):
    """Inverse-covariance blocks from a truncated ``R0`` eigen system.

    ``R0^-1`` is the truncated spectral inverse of ``r0``, evaluated
    bilinearly on ``basis`` (defaults to ``r0`` itself, which makes every
    block diagonal).
    """
    lam = np.atleast_1d(np.asarray(lambda_hat, float))
    basis = r0 if basis is None else basis
    if lam.size != len(basis):
        raise DataError("one autocorrelation eigenvalue is needed per basis function")
    if np.any(lam >= 1) or np.any(lam <= -1):
        raise NumericalError("autocorrelation eigenvalues must lie strictly inside (-1, 1)")
    if np.any(r0.values <= 0):
        raise NumericalError("covariance eigenvalues must be positive to invert")
    cross = basis.grid.weights * basis.functions @ r0.functions.conj().T
    r0inv = (cross / r0.values) @ cross.conj().T
    a = r0inv / (1 - lam**2)
    return CInvCoefficients(a, -lam * a, (1 + lam**2) * a, lam, basis, r0)


def _blocks(coeffs):
    sym = lambda m: (m + m.T) / 2  # noqa: E731
    return sym(coeffs.a), coeffs.b, sym(coeffs.c)


def _mul(M, z):
    # block product M @ z[t] for every t; z has shape (N, K, ...)
    return np.moveaxis(np.tensordot(M, z, axes=([1], [1])), 0, 1)


def _band_apply(coeffs, z):
    """``H z`` for scores ``z`` of shape (N, K, ...)."""
    A, B, C = _blocks(coeffs)
    n = z.shape[0]
    out = _mul(C, z)
    ends = [0, n - 1] if n > 1 else [0]
    out[ends] = _mul(A, z[ends])
    if n > 1:
        out[:-1] += _mul(B, z[1:])
        out[1:] += _mul(B.T, z[:-1])
    return out


def band_matrix(coeffs, n):
    """Dense ``(n K) x (n K)`` banded inverse covariance, for checking."""
    A, B, C = _blocks(coeffs)
    k = A.shape[0]
    H = np.zeros((n * k, n * k))
    for t in range(n):
        H[t * k:(t + 1) * k, t * k:(t + 1) * k] = A if t in (0, n - 1) else C
        if t + 1 < n:
            H[t * k:(t + 1) * k, (t + 1) * k:(t + 2) * k] = B
            H[(t + 1) * k:(t + 2) * k, t * k:(t + 1) * k] = B.T
    return H


def apply_cinv(coeffs, F):
    """Apply the inverse error covariance to a sequence of functions.

    Parameters
    ----------
    coeffs : CInvCoefficients
    F : ndarray of shape (N, G)

    Returns
    -------
    ndarray of shape (N, G)
    """
    F = np.asarray(F)
    if F.ndim != 2 or F.shape[1] != coeffs.basis.grid.size:
        raise DataError("functions do not match the coefficient grid")
    return coeffs.basis.synthesize(_band_apply(coeffs, coeffs.basis.coefficients(F)))


# ---------------------------------------------------------------- GLS


@dataclass(frozen=True, eq=False)
class GLSFit:
    """Result of a projected GLS solve.

    Attributes
    ----------
    beta : ndarray of shape (p, G)
        Coefficient functions.
    coef : ndarray of shape (p, K)
        Their scores on ``basis``.
    fitted, residuals : ndarray of shape (R, G)
        ``fitted`` includes ``intercept``.
    intercept : ndarray of shape (G,)
    objective : float
        Weighted projected residual sum of squares.
    condition_number : float
    """

    beta: np.ndarray
    coef: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    intercept: np.ndarray
    objective: float
    condition_number: float
    basis: EigenSystem


def _design(X, basis):
    # D[r, l, i*K + k] = <left_ri, psi_l> <psi_k, right_ri>
    x = X.project(basis.functions)
    R, p, K, _ = x.shape
    return x.transpose(0, 2, 1, 3).reshape(R, K, p * K)


def gls_solve(X, Y, coeffs, intercept=None):
    """Generalized least squares for ``Y_n - mu = sum_i X_n^i(beta_i) + e_n``.

    Parameters
    ----------
    X : KernelRegressors
    Y : array_like of shape (R, G)
        Responses aligned with the rows of ``X``.
    coeffs : CInvCoefficients
    intercept : array_like of shape (G,), optional

    Returns
    -------
    GLSFit

    Raises
    ------
    SingularSystemError
        If the ``p K`` normal system has condition number above 1e12.
    """
    Y = np.asarray(Y, float)
    grid = X.grid
    if Y.shape != (len(X), grid.size):
        raise DataError(f"responses have shape {Y.shape}, expected {(len(X), grid.size)}")
    intercept = np.zeros(grid.size) if intercept is None else np.asarray(intercept, float)
    basis = coeffs.basis
    K, p = len(basis), X.p
    D = _design(X, basis)
    y = basis.coefficients(Y - intercept)
    HD = _band_apply(coeffs, D)
    flat_D = D.reshape(-1, D.shape[2])
    flat_HD = HD.reshape(-1, D.shape[2])
    M = flat_D.T @ flat_HD
    rhs = flat_HD.T @ y.ravel()
    M = (M + M.T) / 2
    cond = np.linalg.cond(M) if M.size else 1.0
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystemError(
            f"normal system of size {M.shape[0]} is singular (condition number {cond:.3g})",
            condition_number=cond,
        )
    sol = np.linalg.solve(M, rhs)
    coef = sol.reshape(p, K)
    beta = basis.synthesize(coef)
    fitted = intercept + X.apply(beta)
    resid_scores = y - D @ sol
    objective = float(np.sum(resid_scores * _band_apply(coeffs, resid_scores)))
    return GLSFit(beta, coef, fitted, Y - fitted, intercept, objective, float(cond), basis)


def ols_fit(X, Y, basis, intercept=None):
    """Least squares in the projected coordinates of ``basis``."""
    return gls_solve(X, Y, CInvCoefficients.identity(basis), intercept)


def predict(X, fit):
    """``sum_i X_n^i(beta_i)`` for each row of ``X`` (intercept not added)."""
    beta = fit.beta if isinstance(fit, GLSFit) else np.asarray(fit)
    return X.apply(beta)


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True, eq=False)
class BayesFit:
    """Everything estimated by :func:`fit_bayes_gls`."""

    mean: np.ndarray
    k: int
    ols: GLSFit
    gls: GLSFit
    hyper: BetaHyper
    lambda_hat: np.ndarray
    coefficients: CInvCoefficients
    poly_degree: object

    @property
    def beta(self):
        return self.gls.beta


def _truncated_eigen(values, grid, k, rtol, energy):
    # eigenvalues below 1e-24 of the data energy are roundoff from centring
    eig = eigh(KernelOperator(grid, values.T @ values / values.shape[0]))
    rank = stable_rank(eig.values, rtol)
    rank = min(rank, int(np.sum(eig.values > 1e-24 * energy)))
    return eig.truncate(min(k, rank))


def _zero_fit(X, Y, mean, basis):
    p, G = X.p, X.grid.size
    fitted = np.broadcast_to(mean, Y.shape).copy()
    return GLSFit(np.zeros((p, G)), np.zeros((p, len(basis))), fitted, Y - fitted, mean, 0.0, 1.0, basis)


def fit_bayes_gls(
    series,
    p,
    rows=None,
    train=None,
    k=None,
    poly_degree=None,
    n_boot=500,
    block_len=None,
    seed=None,
    coefficients=None,
):
    """Fit the Bayesian plug-in GLS surface regression.

    Parameters
    ----------
    series : SurfaceSeries
    p : int
        Number of regressor lags.
    rows : array_like of int, optional
        Response indices used for estimation (default: all with lags available).
    train : array_like of int, optional
        Indices whose mean defines the intercept (default: the whole series).
    k : int, optional
        Truncation level; ``round(ln N)`` by default.
    poly_degree : int, "aic" or None
        Polynomial smoothing of the regressor kernels.
    n_boot, block_len, seed
        Prior-fitting bootstrap settings.
    coefficients : CInvCoefficients, optional
        Use these inverse-covariance blocks and their basis instead of
        estimating them.

    Returns
    -------
    BayesFit
    """
    N, grid = len(series), series.grid
    values = series.values
    mean = values.mean(axis=0) if train is None else values[np.asarray(train)].mean(axis=0)
    X = build_kernel_regressors(series, p, poly_degree=poly_degree, mean=mean, rows=rows)
    if len(X) < 2:
        raise DataError("need at least two response rows")
    Y = values[X.rows]
    k = truncation_level(N) if k is None else check_int(k, "k", minimum=1)

    if coefficients is not None:
        gls = gls_solve(X, Y, coefficients, mean)
        return BayesFit(mean, coefficients.k, gls, gls, None, coefficients.lambda_hat, coefficients, poly_degree)

    energy = float(np.mean(np.sum(grid.weights * Y**2, axis=1)))
    basis0 = _truncated_eigen(Y - mean, grid, k, 1e-12, energy)
    if len(basis0) == 0:
        logger.info("responses have no variation about the mean; regression coefficients set to zero")
        fit = _zero_fit(X, Y, mean, basis0)
        ident = CInvCoefficients.identity(basis0)
        return BayesFit(mean, 0, fit, fit, None, np.zeros(0), ident, poly_degree)

    ols = ols_fit(X, Y, basis0, mean)
    r0 = _truncated_eigen(ols.residuals, grid, k, R0_RTOL, energy)
    if len(r0) == 0:
        logger.info("OLS residuals vanish; keeping the OLS fit")
        return BayesFit(mean, len(basis0), ols, ols, None, np.zeros(0), CInvCoefficients.identity(basis0), poly_degree)

    scores = project_residuals(ols.residuals, r0)
    if scores.coeffs.shape[0] >= 20:
        hyper = fit_beta_hyper(scores, n_boot=n_boot, block_len=block_len, seed=seed)
    else:
        warnings.warn("fewer than 20 residuals; using flat priors", RuntimeWarning, stacklevel=2)
        hyper = BetaHyper.flat(scores.k)
    lam = map_lambda(scores, hyper)
    coeffs = cinv_coefficients(r0, lam)
    gls = gls_solve(X, Y, coeffs, mean)
    return BayesFit(mean, len(r0), ols, gls, hyper, lam, coeffs, poly_degree)


def predict_rows(series, fit, p, rows):
    """One-step predictions ``mu + sum_i X_n^i(beta_i)`` at ``rows`` of ``series``."""
    X = build_kernel_regressors(series, p, poly_degree=fit.poly_degree, mean=fit.mean, rows=rows)
    return fit.mean + X.apply(fit.beta)


# ---------------------------------------------------------------- LOOCV


@dataclass(frozen=True)
class LOOCVResult:
    """Per-index absolute errors ``sum_g w_g |Y_n - Yhat_n|`` and their mean."""

    indices: np.ndarray
    errors: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.errors))

    @property
    def n_iterations(self):
        return int(self.errors.size)


def loocv_targets(n_raw, p, edge_trim=None):
    """Held-out indices and the kept window after edge trimming.

    Returns ``(targets, window)``; ``window`` is a ``slice`` over the raw
    series. Targets start ``p`` elements into the window; their deepest
    lag may reach one element into the leading trimmed margin.
    """
    n_trim = edge_trim_count(n_raw) if edge_trim is None else check_int(edge_trim, "edge_trim", minimum=0)
    lead, trail = split_edge_trim(n_trim)
    start = max(lead + p, p + 1)
    targets = np.arange(start, n_raw - trail)
    return targets, slice(lead, n_raw - trail)


def _loocv_fold(series, p, targets, window, n, fold_seed, options, shared):
    rows = targets[targets != n]
    train = np.setdiff1d(np.arange(window.start, window.stop), [n])
    fit = fit_bayes_gls(series, p, rows=rows, train=train, seed=fold_seed, coefficients=shared, **options)
    pred = predict_rows(series, fit, p, [n])[0]
    return float(np.sum(series.grid.weights * np.abs(series.values[n] - pred)))


def loocv(series, p, edge_trim=None, reuse_correlation=False, seed=None, n_jobs=1, **options):
    """Leave-one-out cross-validation of the Bayesian GLS predictor.

    For every target index ``n`` the response ``Y_n`` is removed, the
    model is refit on the remaining responses (regressors still use the
    observed neighbours of each row), and ``Y_n`` is predicted.

    Parameters
    ----------
    series : SurfaceSeries
    p : int
    edge_trim : int, optional
        Number of edge elements dropped, split between both ends;
        ``ceil(0.057 N)`` by default.
    reuse_correlation : bool
        Estimate the error correlation structure once on all targets and
        reuse it in every fold instead of refitting it.
    seed : int, optional
        Root seed; fold ``j`` bootstraps with the ``j``-th spawned child.
    n_jobs : int
        joblib workers.
    **options
        Forwarded to :func:`fit_bayes_gls` (``k``, ``poly_degree``,
        ``n_boot``, ``block_len``).

    Returns
    -------
    LOOCVResult
    """
    targets, window = loocv_targets(len(series), p, edge_trim)
    if targets.size < 20:
        raise DataError(f"only {targets.size} LOOCV targets after trimming; need at least 20")
    children = np.random.SeedSequence(seed).spawn(targets.size)
    shared = None
    if reuse_correlation:
        full = fit_bayes_gls(series, p, rows=targets, train=np.arange(window.start, window.stop), seed=seed, **options)
        shared = full.coefficients
    errors = Parallel(n_jobs=n_jobs)(
        delayed(_loocv_fold)(series, p, targets, window, n, child, options, shared)
        for n, child in zip(targets, children)
    )
    return LOOCVResult(targets, np.asarray(errors))
