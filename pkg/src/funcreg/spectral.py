"""Spatial functional regression in the spectral domain.

Curves ``Y_z`` on a regular 2-D lattice are projected onto the leading
right singular functions of the long-run spatial covariance operator.
Regressors are rank-one tensors of neighbouring curves,
``X_z^{ij} = Y_{z-h_i} x Y_{z-h_j}``, and the regression is solved by GLS
with the inverse covariance approximated frequency by frequency from a
window-smoothed periodogram (a Whittle-type block-circulant inverse).

Transforms use lattice index origin 0 and the scaling
``((2 pi)^d N)^(-1/2)``, so the raw periodogram integrates back to the
biased lag covariance ``(1/N) sum_y c_{y+x} c_y^T``.
"""

import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator

from funcreg.core import EigenSystem, KernelOperator, _fix_signs, svd_op
from funcreg.exceptions import ConfigError, DataError, NumericalError
from funcreg.validation import check_int, check_is_fitted, check_lags, check_real

logger = logging.getLogger(__name__)

__all__ = [
    "LongRunCovariance",
    "ProjectedField",
    "SpectralDensityEstimate",
    "SpatialRegressors",
    "SpectralGLSFit",
    "SpatialCVReport",
    "empirical_spatial_cov",
    "long_run_cov",
    "select_components",
    "project_field",
    "sfdft",
    "inverse_sfdft",
    "periodogram",
    "window_weight",
    "periodized_window",
    "default_bandwidth",
    "spectral_density_estimate",
    "frequency_mask",
    "frequencies",
    "lag_pairs",
    "evaluation_bounds",
    "inverse_sfdft_cov",
    "assemble_cov",
    "build_spatial_regressors",
    "spectral_gls",
    "fit_spatial_spectral",
    "spatial_kfold_cv",
    "SpatialSpectralRegressor",
    "SpatialSpectralFit",
    "WINDOWS",
    "DEFAULT_LAGS",
]

D = 2
TWO_PI_D = (2 * np.pi) ** D
DEFAULT_LAGS = ((1, 0), (0, 1), (1, 1))


# ---------------------------------------------------------------- covariance


def empirical_spatial_cov(field, z):
    """``(1 / prod(T_i - z_i)) sum_{y >= z} X_y x X_{y-z}``."""
    z = tuple(int(v) for v in z)
    t1, t2 = field.extent
    if len(z) != 2 or not (0 <= z[0] < t1 and 0 <= z[1] < t2):
        raise DataError(f"lag {z} is outside the lattice {field.extent}")
    a = field.curves[z[0]:, z[1]:].reshape(-1, field.n_times)
    b = field.curves[: t1 - z[0], : t2 - z[1]].reshape(-1, field.n_times)
    return KernelOperator(field.grid, a.T @ b / a.shape[0])


def _lag_weights(extent, max_lag):
    # S[y, y'] = 1 / prod(T - z) for z = y - y' in [0, max_lag]^2
    t1, t2 = extent
    i, j = np.meshgrid(np.arange(t1), np.arange(t2), indexing="ij")
    i, j = i.ravel(), j.ravel()
    z1 = i[:, None] - i[None, :]
    z2 = j[:, None] - j[None, :]
    ok = (z1 >= 0) & (z2 >= 0) & (z1 <= max_lag) & (z2 <= max_lag)
    S = np.zeros(z1.shape)
    S[ok] = 1.0 / ((t1 - z1[ok]) * (t2 - z2[ok]))
    return S


def select_components(singulars, threshold):
    """Smallest ``M`` whose cumulative singular-value share reaches ``threshold``.

    A relative slack of 1e-12 absorbs rounding in the cumulative sum.
    """
    s = np.asarray(singulars, float)
    total = s.sum()
    if total <= 0:
        raise DataError("all singular values are zero")
    share = np.cumsum(s) / total
    return int(np.argmax(share >= threshold - 1e-12)) + 1


@dataclass(frozen=True, eq=False)
class LongRunCovariance:
    """Sum of non-negative-lag spatial covariance operators and its SVD.

    Attributes
    ----------
    right, left : EigenSystem
        Right (``psi_k``) and left singular functions.
    singulars : ndarray
    M : int
        Number of retained components.
    """

    right: EigenSystem
    left: EigenSystem
    singulars: np.ndarray
    M: int
    factors: tuple = None

    @cached_property
    def operator(self):
        X, S = self.factors
        return KernelOperator(self.right.grid, X.T @ (S @ X))

    @property
    def shares(self):
        return self.singulars / self.singulars.sum()

    @property
    def basis(self):
        return self.right.truncate(self.M)


def long_run_cov(field, max_lag=None, threshold=0.99, n_components=None):
    """Long-run covariance ``sum_{z in [0, max_lag]^2} R_z`` and its SVD.

    Parameters
    ----------
    field : LatticeField
    max_lag : int, optional
        Defaults to the largest admissible lag ``min(T) - 1``.
    threshold : float
        Cumulative singular-value share used to choose ``M``.
    n_components : int, optional
        Fix ``M`` instead of choosing it.

    Notes
    -----
    The operator is ``X^T S X`` for the node-by-time matrix ``X`` and a
    sparse lag-weight matrix ``S``. When there are fewer nodes than time
    points the SVD is computed from a thin QR factor of ``X``, which never
    forms the ``G x G`` kernel.
    """
    t1, t2 = field.extent
    max_lag = min(t1, t2) - 1 if max_lag is None else check_int(max_lag, "max_lag", minimum=0)
    if max_lag > min(t1, t2) - 1:
        raise ConfigError(f"max_lag={max_lag} exceeds the lattice")
    threshold = check_real(threshold, "threshold", low=0.0, high=1.0, low_open=True)
    grid = field.grid
    X = field.curves.reshape(-1, field.n_times)
    S = _lag_weights(field.extent, max_lag)
    if not np.any(X):
        raise DataError("cannot decompose the covariance of an all-zero field")

    if X.shape[0] < X.shape[1]:
        sw = grid.sqrt_weights
        q, r = np.linalg.qr((X * sw).T)
        a, s, bh = linalg.svd(r @ S @ r.T)
        v, phase = _fix_signs((q @ bh.T) / sw[:, None])
        u = (q @ a) / sw[:, None] / phase
        right = EigenSystem(grid, s, v.T)
        left = EigenSystem(grid, s, u.T)
    else:
        right, left, s = svd_op(KernelOperator(grid, X.T @ (S @ X)))
    if n_components is None:
        M = select_components(s, threshold)
    else:
        M = check_int(n_components, "n_components", minimum=1, maximum=s.size)
    return LongRunCovariance(right, left, s, M, (X, S))


# ---------------------------------------------------------------- projection and transforms


@dataclass(frozen=True, eq=False)
class ProjectedField:
    """Scores ``coeffs[i, j, k] = <Y_(i,j), psi_k>``."""

    coeffs: np.ndarray
    basis: EigenSystem

    def reconstruct(self):
        return self.basis.synthesize(self.coeffs)


def project_field(field, basis):
    return ProjectedField(basis.coefficients(field.curves), basis)


def _dft_scale(n_nodes):
    return 1.0 / math.sqrt(TWO_PI_D * n_nodes)


def sfdft(coeffs, shape=None):
    """Spatial functional DFT of projected scores.

    Parameters
    ----------
    coeffs : ndarray of shape (T1, T2, M)
    shape : (int, int), optional
        Frequency grid size; larger than the lattice zero-pads (``2T - 1``
        per side removes wrap-around from lag sums).

    Returns
    -------
    ndarray of shape (F1, F2, M), complex
        Value at ``omega = (2 pi a / F1, 2 pi b / F2)`` in entry ``[a, b]``.
    """
    coeffs = np.asarray(coeffs)
    n = coeffs.shape[0] * coeffs.shape[1]
    return np.fft.fft2(coeffs, s=shape, axes=(0, 1)) * _dft_scale(n)


def inverse_sfdft(values, extent):
    """Invert :func:`sfdft` and crop to the lattice ``extent``."""
    n = extent[0] * extent[1]
    out = np.fft.ifft2(values, axes=(0, 1)) / _dft_scale(n)
    return out[: extent[0], : extent[1]]


def periodogram(transform):
    """``I[..., k, l] = X[..., k] conj(X[..., l])``."""
    transform = np.asarray(transform)
    return transform[..., :, None] * np.conj(transform[..., None, :])


def frequencies(n):
    return 2 * np.pi * np.arange(n) / n


# ---------------------------------------------------------------- windows


def _bartlett_hann(x):
    return 0.62 - 0.24 * np.abs(x) + 0.38 * np.cos(np.pi * x)


_BH = (0.35875, 0.48829, 0.14128, 0.01168)


def _blackman_harris(x):
    a0, a1, a2, a3 = _BH
    w = a0 + a1 * np.cos(np.pi * x) + a2 * np.cos(2 * np.pi * x) + a3 * np.cos(3 * np.pi * x)
    # unit integral on [-1, 1]
    return w / (2 * a0)


WINDOWS = {"bartlett-hann": _bartlett_hann, "blackman-harris": _blackman_harris}


def _resolve_window(window):
    if callable(window):
        return window
    try:
        return WINDOWS[window]
    except KeyError:
        raise ConfigError(f"unknown window {window!r}; choose from {sorted(WINDOWS)}") from None


def window_weight(x, window="bartlett-hann"):
    """One-dimensional window on ``[-1, 1]`` with unit integral, zero outside.

    ``window`` is a name from :data:`WINDOWS` or a callable evaluated on
    points inside the support.
    """
    fn = _resolve_window(window)
    x = np.asarray(x, float)
    inside = np.abs(x) < 1
    return np.where(inside, fn(np.where(inside, x, 0.0)), 0.0)


def periodized_window(x, bandwidth, window="bartlett-hann"):
    """``(1/B) sum_{j in {-1,0,1}} W((x + 2 pi j) / B)`` in one dimension."""
    bandwidth = check_real(bandwidth, "bandwidth", low=0.0, high=2 * np.pi, low_open=True)
    # reduce to [-pi, pi) so three shifted copies cover the support
    x = np.mod(np.asarray(x, float) + np.pi, 2 * np.pi) - np.pi
    return sum(window_weight((x + 2 * np.pi * j) / bandwidth, window) for j in (-1, 0, 1)) / bandwidth


def default_bandwidth(extent):
    """``2 pi N^(-1/(5 d))``, i.e. ``2 pi T^(-1/5)`` on a square lattice."""
    n = extent[0] * extent[1]
    return 2 * np.pi * n ** (-1 / (5 * D))


# ---------------------------------------------------------------- spectral density


@dataclass(frozen=True, eq=False)
class SpectralDensityEstimate:
    """Smoothed periodogram on the full frequency grid.

    Attributes
    ----------
    matrices : ndarray of shape (F1, F2, M, M), complex
        Estimate at ``(2 pi a / F1, 2 pi b / F2)``.
    mask : ndarray of shape (F1, F2), bool
        Frequencies in the reported set.
    bandwidth : float
    window_id : str
    n_nodes : int
        Lattice size the transform was scaled by.
    """

    matrices: np.ndarray
    mask: np.ndarray
    bandwidth: float
    window_id: str
    n_nodes: int

    @property
    def shape(self):
        return self.matrices.shape[:2]

    @property
    def freqs(self):
        return frequencies(self.shape[0]), frequencies(self.shape[1])

    def reported(self):
        """``(a, b, matrix)`` for each frequency in the reported set."""
        a, b = np.nonzero(self.mask)
        return a, b, self.matrices[a, b]


def frequency_mask(shape, include_axis=False):
    """Frequencies ``z in [1, F-1]^2``; with ``include_axis`` only DC is dropped."""
    mask = np.ones(shape, bool)
    if include_axis:
        mask[0, 0] = False
    else:
        mask[0, :] = False
        mask[:, 0] = False
    return mask


def spectral_density_estimate(
    periodograms, bandwidth, window="bartlett-hann", include_axis=False, n_nodes=None
):
    """Window-smoothed periodogram.

    ``f(omega) = ((2 pi)^d / F) sum_z W_B(omega - omega_z) I(omega_z)``
    over the frequencies ``omega_z`` in the reported set, with ``F`` the
    number of grid frequencies. The result is evaluated on the full grid
    and symmetrized to be Hermitian.
    """
    I = np.asarray(periodograms)
    F1, F2 = I.shape[:2]
    mask = frequency_mask((F1, F2), include_axis)
    w1 = periodized_window(frequencies(F1)[:, None] - frequencies(F1)[None, :], bandwidth, window)
    w2 = periodized_window(frequencies(F2)[:, None] - frequencies(F2)[None, :], bandwidth, window)
    scale = TWO_PI_D / (F1 * F2)
    masked = I * mask[:, :, None, None]
    est = scale * np.einsum("ab,cd,bd...->ac...", w1, w2, masked)
    total = np.einsum("ab,cd,bd->ac", w1, w2, mask.astype(float))
    empty = total <= 0
    if np.any(empty):
        warnings.warn(
            f"bandwidth {bandwidth:.4g} leaves {int(empty.sum())} frequencies without neighbours; "
            "using the raw periodogram there",
            RuntimeWarning,
            stacklevel=2,
        )
        est[empty] = I[empty]
    est = (est + np.conj(np.swapaxes(est, -1, -2))) / 2
    window_id = window if isinstance(window, str) else getattr(window, "__name__", "custom")
    n_nodes = F1 * F2 if n_nodes is None else n_nodes
    return SpectralDensityEstimate(est, mask, float(bandwidth), window_id, n_nodes)


def inverse_sfdft_cov(matrices, imag_tol=1e-6):
    """Lag covariances ``r_x = ((2 pi)^d / F) sum_omega f(omega) e^{i <omega, x>}``.

    Returns a real array of shape (F1, F2, M, M); entry ``[x1, x2]`` is
    lag ``x`` (negative lags wrap around).

    Raises
    ------
    NumericalError
        If the imaginary residue exceeds ``imag_tol`` relative to the
        largest real entry, which signals a conjugate-symmetry violation.
    """
    if isinstance(matrices, SpectralDensityEstimate):
        matrices = matrices.matrices
    r = TWO_PI_D * np.fft.ifft2(matrices, axes=(0, 1))
    scale = max(np.abs(r.real).max(), np.finfo(float).tiny)
    residue = np.abs(r.imag).max()
    if residue > imag_tol * max(scale, 1.0):
        raise NumericalError(f"inverse transform has imaginary residue {residue:.3g}")
    return r.real


def assemble_cov(lags, extent):
    """Dense block covariance ``C[(y, k), (y', l)] = r_{y - y'}[k, l]``.

    ``lags`` is the output of :func:`inverse_sfdft_cov`; lag differences
    are taken modulo its shape.
    """
    F1, F2, M, _ = lags.shape
    t1, t2 = extent
    i, j = np.meshgrid(np.arange(t1), np.arange(t2), indexing="ij")
    i, j = i.ravel(), j.ravel()
    blocks = lags[(i[:, None] - i[None, :]) % F1, (j[:, None] - j[None, :]) % F2]
    n = i.size
    return blocks.transpose(0, 2, 1, 3).reshape(n * M, n * M)


# ---------------------------------------------------------------- regressors and GLS


def lag_pairs(n_lags):
    return [(i, j) for i in range(n_lags) for j in range(i, n_lags)]


@dataclass(frozen=True, eq=False)
class SpatialRegressors:
    """Projected design on a set of target nodes.

    ``design[n, l, p * M + k] = c_{z_n - h_i}[l] c_{z_n - h_j}[k]`` for pair
    ``p = (i, j)``; this is ``<X_z^{ij} psi_k, psi_l>`` when the neighbour
    curves lie in the span of the basis.
    """

    design: np.ndarray
    nodes: np.ndarray
    lags: tuple
    pairs: list


def evaluation_bounds(lags):
    lags = np.asarray(lags)
    return int(lags[:, 0].max()), int(lags[:, 1].max())


def build_spatial_regressors(coeffs, lags=DEFAULT_LAGS, nodes=None):
    """Rank-one neighbour regressors ``c_{z-h_i} c_{z-h_j}^T`` for ``i <= j``.

    Parameters
    ----------
    coeffs : ndarray of shape (T1, T2, M)
        Projected field.
    lags : sequence of (int, int)
    nodes : ndarray of shape (n, 2), optional
        Target nodes; defaults to every node whose neighbours all lie in
        the lattice. Nodes with a neighbour outside are dropped and logged.

    Returns
    -------
    SpatialRegressors
    """
    lags = check_lags(lags)
    coeffs = np.asarray(coeffs)
    t1, t2, M = coeffs.shape
    r0, c0 = evaluation_bounds(lags)
    if nodes is None:
        nodes = np.array([(i, j) for i in range(r0, t1) for j in range(c0, t2)], dtype=int).reshape(-1, 2)
    nodes = np.asarray(nodes, dtype=int).reshape(-1, 2)
    ok = (nodes[:, 0] >= r0) & (nodes[:, 1] >= c0) & (nodes[:, 0] < t1) & (nodes[:, 1] < t2)
    if not np.all(ok):
        logger.info("dropping %d nodes whose neighbours leave the lattice", int((~ok).sum()))
        nodes = nodes[ok]
    pairs = lag_pairs(len(lags))
    neigh = np.stack([coeffs[nodes[:, 0] - h[0], nodes[:, 1] - h[1]] for h in lags], axis=1)
    blocks = [neigh[:, i, :, None] * neigh[:, j, None, :] for i, j in pairs]
    design = np.concatenate(blocks, axis=2) if blocks else np.zeros((len(nodes), M, 0))
    return SpatialRegressors(design, nodes, lags, pairs)


@dataclass(frozen=True, eq=False)
class SpectralGLSFit:
    coef: np.ndarray
    fitted: np.ndarray
    rank: int
    ridge: float


def spectral_gls(design, response, estimate, ridge=None):
    """Frequency-domain GLS on a rectangular block of nodes.

    Parameters
    ----------
    design : ndarray of shape (E1, E2, M, J)
    response : ndarray of shape (E1, E2, M)
    estimate : SpectralDensityEstimate
        Spectral density on the ``E1 x E2`` frequency grid.
    ridge : float, optional
        Added to ``(2 pi)^d f(omega)`` before inversion; defaults to
        ``1e-6 max_omega |f(omega)|``.

    Returns
    -------
    SpectralGLSFit
        ``fitted`` holds the projected fitted scores (E1, E2, M).
    """
    design = np.asarray(design, float)
    response = np.asarray(response, float)
    E1, E2, M, J = design.shape
    if estimate.shape != (E1, E2) or estimate.matrices.shape[2] != M:
        raise DataError("spectral density grid does not match the design lattice")
    fmat = TWO_PI_D * estimate.matrices
    if ridge is None:
        ridge = 1e-6 * np.linalg.norm(fmat / TWO_PI_D, ord=2, axis=(2, 3)).max()
    ridge = check_real(ridge, "ridge", low=0.0)
    weights = fmat + ridge * np.eye(M)
    Dt = sfdft(design)
    yt = sfdft(response)
    try:
        chol = np.linalg.cholesky(weights)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "spectral density is singular at some frequency; pass a positive ridge"
        ) from None
    # whiten: L^-1 D and L^-1 y, then the normal equations are plain sums
    wD = np.linalg.solve(chol, Dt)
    wy = np.linalg.solve(chol, yt[..., None])[..., 0]
    normal = np.einsum("abmj,abmk->jk", np.conj(wD), wD).real
    rhs = np.einsum("abmj,abm->j", np.conj(wD), wy).real
    coef, _, rank, sv = np.linalg.lstsq(normal, rhs, rcond=1e-12)
    if rank < J:
        warnings.warn(
            f"spectral GLS normal system has rank {rank} < {J}; using the minimum-norm solution",
            RuntimeWarning,
            stacklevel=2,
        )
    fitted = inverse_sfdft(np.einsum("abmj,j->abm", Dt, coef), (E1, E2)).real
    return SpectralGLSFit(coef, fitted, int(rank), float(ridge))


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True, eq=False)
class SpatialSpectralFit:
    """Fitted spatial-spectral model.

    Attributes
    ----------
    covariance : LongRunCovariance
    basis : EigenSystem
        The ``M`` retained right singular functions.
    estimate : SpectralDensityEstimate
    coef : ndarray of shape (n_pairs, M)
        Scores of each ``beta_ij`` on the basis.
    beta : ndarray of shape (n_pairs, G)
    lags, pairs
    """

    covariance: LongRunCovariance
    basis: EigenSystem
    estimate: SpectralDensityEstimate
    coef: np.ndarray
    beta: np.ndarray
    lags: tuple
    pairs: list
    gls: SpectralGLSFit

    @property
    def M(self):
        return len(self.basis)

    def predict_scores(self, coeffs, nodes):
        reg = build_spatial_regressors(coeffs, self.lags, nodes)
        return reg.design @ self.coef.ravel(), reg.nodes

    def predict(self, field, nodes=None):
        """Predicted curves ``sum_l yhat_l psi_l`` at ``nodes``.

        ``field`` supplies the neighbour curves (the covariate field when
        the model was fitted with one).
        """
        coeffs = self.basis.coefficients(field.curves)
        scores, nodes = self.predict_scores(coeffs, nodes)
        return self.basis.synthesize(scores), nodes


def fit_spatial_spectral(
    field,
    rows=None,
    cols=None,
    lags=DEFAULT_LAGS,
    threshold=0.99,
    n_components=None,
    max_lag=None,
    bandwidth=None,
    window="bartlett-hann",
    ridge=None,
    include_axis=False,
    covariates=None,
):
    """Fit the spectral GLS regression on the node block ``rows x cols``.

    The basis and the spectral density come from the training responses,
    arranged as a (possibly collapsed) ``len(rows) x len(cols)`` lattice;
    regressors use each training node's true neighbours in ``field``.

    Parameters
    ----------
    field : LatticeField
        Tapered and detrended curves.
    rows, cols : sequence of int, optional
        Training node indices; default to the evaluation sub-lattice.
    covariates : LatticeField, optional
        Field whose neighbour curves form the regressors; ``field`` itself
        by default.
    """
    lags = check_lags(lags)
    t1, t2 = field.extent
    r0, c0 = evaluation_bounds(lags)
    rows = np.arange(r0, t1) if rows is None else np.asarray(rows, int)
    cols = np.arange(c0, t2) if cols is None else np.asarray(cols, int)
    if rows.size < 2 or cols.size < 2:
        raise DataError("need at least a 2 x 2 block of training nodes")
    if rows.min() < r0 or cols.min() < c0:
        raise DataError("training nodes need all neighbours inside the lattice")
    train = field.with_curves(field.curves[np.ix_(rows, cols)], taper_weights=None, coords=None)
    cov = long_run_cov(train, max_lag=max_lag, threshold=threshold, n_components=n_components)
    basis = cov.basis
    coeffs = basis.coefficients(field.curves)
    source = coeffs
    if covariates is not None:
        if covariates.extent != field.extent or covariates.grid != field.grid:
            raise DataError("covariates must share the lattice and time grid of the field")
        source = basis.coefficients(covariates.curves)
    nodes = np.array(list(itertools.product(rows, cols)), dtype=int)
    reg = build_spatial_regressors(source, lags, nodes)
    E1, E2, M = rows.size, cols.size, len(basis)
    design = reg.design.reshape(E1, E2, M, -1)
    response = coeffs[np.ix_(rows, cols)]
    if bandwidth is None:
        bandwidth = default_bandwidth((E1, E2))
    est = spectral_density_estimate(
        periodogram(sfdft(response)), bandwidth, window, include_axis, n_nodes=E1 * E2
    )
    gls = spectral_gls(design, response, est, ridge)
    coef = gls.coef.reshape(len(reg.pairs), M)
    return SpatialSpectralFit(cov, basis, est, coef, basis.synthesize(coef), lags, reg.pairs, gls)


@dataclass(frozen=True)
class SpatialCVReport:
    """Per-node mean absolute errors on the evaluation lattice.

    ``errors[i, j]`` is the time-averaged absolute error at evaluation node
    ``(i, j)``, averaged over the folds that held it out.
    """

    errors: np.ndarray
    folds: int

    @property
    def grand_mean(self):
        return float(np.mean(self.errors))

    @property
    def n_nodes(self):
        return int(self.errors.size)


def _cv_fold(field, n, eval_rows, eval_cols, options):
    rows = np.delete(eval_rows, n)
    cols = np.delete(eval_cols, n)
    fit = fit_spatial_spectral(field, rows=rows, cols=cols, **options)
    targets = np.array(
        sorted({(eval_rows[n], c) for c in eval_cols} | {(r, eval_cols[n]) for r in eval_rows}),
        dtype=int,
    )
    source = field if options.get("covariates") is None else options["covariates"]
    pred, targets = fit.predict(source, targets)
    err = np.mean(np.abs(field.curves[targets[:, 0], targets[:, 1]] - pred), axis=1)
    return targets, err


def spatial_kfold_cv(field, folds=9, n_jobs=1, **options):
    """Row-and-column hold-out cross-validation.

    The first row(s) and column(s) needed by the lags are kept as initial
    condition. The remaining nodes form the evaluation lattice; fold ``n``
    holds out its ``n``-th row and column, fits on the rest and predicts
    the held-out curves.

    Parameters
    ----------
    field : LatticeField
    folds : int
        Must equal the evaluation lattice side.
    n_jobs : int
        joblib workers.
    **options
        Forwarded to :func:`fit_spatial_spectral`.

    Returns
    -------
    SpatialCVReport
    """
    from joblib import Parallel, delayed

    folds = check_int(folds, "folds", minimum=2)
    lags = check_lags(options.get("lags", DEFAULT_LAGS))
    r0, c0 = evaluation_bounds(lags)
    t1, t2 = field.extent
    eval_rows, eval_cols = np.arange(r0, t1), np.arange(c0, t2)
    if min(t1, t2) < folds + 1 or eval_rows.size < folds or eval_cols.size < folds:
        raise DataError(f"a {folds}-fold spatial CV needs at least a {folds + 1} x {folds + 1} lattice")
    eval_rows, eval_cols = eval_rows[:folds], eval_cols[:folds]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_cv_fold)(field, n, eval_rows, eval_cols, options) for n in range(folds)
    )
    total = np.zeros((folds, folds))
    count = np.zeros((folds, folds))
    for targets, err in results:
        i, j = targets[:, 0] - eval_rows[0], targets[:, 1] - eval_cols[0]
        np.add.at(total, (i, j), err)
        np.add.at(count, (i, j), 1)
    return SpatialCVReport(total / count, folds)


class SpatialSpectralRegressor(BaseEstimator):
    """Spatial functional regression on neighbour tensors, fitted by
    frequency-domain GLS.

    ``fit`` takes a :class:`~funcreg.preprocess.LatticeField` of tapered,
    detrended curves.

    Parameters
    ----------
    lags : sequence of (int, int)
        Neighbour offsets ``h_i``; regressors pair ``h_i`` with ``h_j`` for
        ``i <= j``.
    threshold : float
        Cumulative singular-value share that fixes the number of basis
        functions ``M``.
    n_components : int, optional
        Fix ``M`` directly.
    max_lag : int, optional
        Largest lag in the long-run covariance; all admissible lags by default.
    bandwidth : float, optional
        Window bandwidth in ``(0, 2 pi]``; ``2 pi N^(-1/10)`` by default.
    window : str or callable
    ridge : float, optional
    include_axis_frequencies : bool
        Also smooth over frequencies on the axes (DC is always excluded).

    Attributes
    ----------
    basis_ : EigenSystem
    n_components_ : int
    spectral_density_ : SpectralDensityEstimate
    coef_ : ndarray of shape (n_pairs, M)
    beta_ : ndarray of shape (n_pairs, G)
    fit_ : SpatialSpectralFit
    """

    def __init__(
        self,
        lags=DEFAULT_LAGS,
        threshold=0.99,
        n_components=None,
        max_lag=None,
        bandwidth=None,
        window="bartlett-hann",
        ridge=None,
        include_axis_frequencies=False,
    ):
        self.lags = lags
        self.threshold = threshold
        self.n_components = n_components
        self.max_lag = max_lag
        self.bandwidth = bandwidth
        self.window = window
        self.ridge = ridge
        self.include_axis_frequencies = include_axis_frequencies

    def _options(self):
        return dict(
            lags=self.lags,
            threshold=self.threshold,
            n_components=self.n_components,
            max_lag=self.max_lag,
            bandwidth=self.bandwidth,
            window=self.window,
            ridge=self.ridge,
            include_axis=self.include_axis_frequencies,
        )

    def fit(self, field, y=None, rows=None, cols=None, covariates=None):
        fit = fit_spatial_spectral(
            field, rows=rows, cols=cols, covariates=covariates, **self._options()
        )
        self.fit_ = fit
        self.basis_ = fit.basis
        self.n_components_ = fit.M
        self.spectral_density_ = fit.estimate
        self.coef_ = fit.coef
        self.beta_ = fit.beta
        return self

    def predict(self, field, nodes=None):
        """Predicted curves of shape (n_nodes, G) and the nodes they belong to."""
        check_is_fitted(self, "fit_")
        return self.fit_.predict(field, nodes)

    def cross_validate(self, field, folds=9, n_jobs=1, covariates=None):
        return spatial_kfold_cv(
            field, folds=folds, n_jobs=n_jobs, covariates=covariates, **self._options()
        )
