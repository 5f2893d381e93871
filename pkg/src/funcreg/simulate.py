"""Synthetic data with known ground truth.

Four generators:

``simulate_arh_raster``
    Diagonal ARH(1) surfaces on a ``T x T`` raster of cells.
``simulate_markov_lattice``
    Curves on a lattice driven by the spatial recursion
    ``X_z = a X_{z-(1,0)} + b X_{z-(0,1)} + noise_z``; smooth plus rough
    noise in time, AR(1) roughness along time. Serves both pipelines.
``simulate_regression_lattice``
    Exact neighbour-tensor regression ``Y_z = sum_ij V_{z-h_i} <V_{z-h_j}, beta_ij> + e_z``
    on a Markov driver field ``V``, with spatially correlated noise.
``simulate_sign_lattice``
    Noiseless ``Y_z = s_z f`` with ``s_z = s_{z-(1,0)} s_{z-(0,1)}``, which
    the neighbour regression predicts exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from funcreg.arh import ARH1Model, SurfaceSeries, simulate_arh1
from funcreg.core import TimeGrid, orthonormalize
from funcreg.exceptions import ConfigError
from funcreg.preprocess import LatticeField
from funcreg.spectral import DEFAULT_LAGS, lag_pairs
from funcreg.validation import check_int, check_lags, check_real

__all__ = [
    "SyntheticDataset",
    "cosine_basis",
    "raster_basis",
    "simulate_arh_raster",
    "simulate_markov_lattice",
    "simulate_regression_lattice",
    "simulate_sign_lattice",
    "lattice_to_series",
    "default_regression_beta",
    "series_to_lattice",
    "markov_transfer_gain",
]


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """A simulated lattice of curves and the parameters that produced it.

    Attributes
    ----------
    field : LatticeField
        Curves indexed ``[row, col, tau]``.
    truth : dict
        JSON-serializable ground truth.
    covariates : LatticeField or None
        Field the regressors are built from, when it is not ``field``.
    """

    field: LatticeField
    truth: dict = field(default_factory=dict)
    covariates: LatticeField = None


def cosine_basis(grid, k):
    """First ``k`` cosine functions, orthonormalized on ``grid``."""
    t = (grid.nodes - grid.nodes[0]) / (grid.nodes[-1] - grid.nodes[0])
    raw = np.array([np.cos(np.pi * j * t) for j in range(k)])
    return orthonormalize(grid, raw)


def raster_basis(t, k):
    """``k`` separable cosine patterns on a ``t x t`` raster, ordered by
    total frequency, orthonormal for equal cell weights ``1/t^2``."""
    centres = (np.arange(t) + 0.5) / t
    orders = sorted(((p, q) for p in range(t) for q in range(t)), key=lambda pq: (pq[0] + pq[1], pq))
    out = []
    for p, q in orders[:k]:
        u = np.cos(np.pi * p * centres) * (np.sqrt(2) if p else 1.0)
        v = np.cos(np.pi * q * centres) * (np.sqrt(2) if q else 1.0)
        out.append(np.outer(u, v).ravel())
    return np.array(out)


def lattice_to_series(field):
    """Read a lattice as a time series of spatial surfaces.

    Surface ``tau`` holds the values of every node at time ``tau``; nodes
    are flattened row-major onto an equal-weight cell grid.
    """
    t1, t2, G = field.curves.shape
    return SurfaceSeries(TimeGrid.cells(t1 * t2), field.curves.reshape(t1 * t2, G).T)


def series_to_lattice(series, extent, time_grid=None):
    """Inverse of :func:`lattice_to_series`."""
    t1, t2 = extent
    values = np.asarray(series.values)
    N = values.shape[0]
    time_grid = TimeGrid.cells(N) if time_grid is None else time_grid
    return LatticeField(time_grid, values.T.reshape(t1, t2, N))


def simulate_arh_raster(
    n=500,
    t=10,
    lambdas=(0.8, 0.5, 0.3),
    noise_vars=(1.0, 0.5, 0.25),
    burn_in=50,
    seed=None,
):
    """Diagonal ARH(1) on a ``t x t`` raster of cells.

    The autocorrelation operator has eigenvalues ``lambdas`` on the
    leading :func:`raster_basis` patterns and innovations with variances
    ``noise_vars`` on the same patterns.
    """
    n = check_int(n, "n", minimum=3)
    t = check_int(t, "t", minimum=2)
    lambdas = np.asarray(lambdas, float)
    noise_vars = np.broadcast_to(np.asarray(noise_vars, float), lambdas.shape)
    if lambdas.ndim != 1 or lambdas.size == 0 or lambdas.size > t * t:
        raise ConfigError(f"need between 1 and {t * t} eigenvalues")
    if np.any(np.abs(lambdas) >= 1):
        raise ConfigError("ARH(1) eigenvalues must lie in (-1, 1)")
    if np.any(noise_vars < 0):
        raise ConfigError("noise variances must be non-negative")
    grid = TimeGrid.cells(t * t)
    functions = raster_basis(t, lambdas.size)
    model = ARH1Model.diagonal(grid, lambdas, functions, noise_vars)
    series = simulate_arh1(model, n, burn_in=burn_in, seed=seed)
    truth = {
        "kind": "arh1",
        "seed": seed,
        "n": n,
        "t": t,
        "lambdas": lambdas.tolist(),
        "noise_vars": noise_vars.tolist(),
    }
    return SyntheticDataset(series_to_lattice(series, (t, t)), truth)


def markov_transfer_gain(a, b, shape):
    """``|1 - a e^{-i w1} - b e^{-i w2}|^{-2}`` on the ``2 pi z / T`` grid.

    The spectral density of the Markov lattice is this gain times the
    noise covariance divided by ``(2 pi)^2``.
    """
    w1 = 2 * np.pi * np.arange(shape[0]) / shape[0]
    w2 = 2 * np.pi * np.arange(shape[1]) / shape[1]
    h = 1 - a * np.exp(-1j * w1)[:, None] - b * np.exp(-1j * w2)[None, :]
    return 1.0 / np.abs(h) ** 2


def _ar1_rows(rng, shape, phi):
    # stationary AR(1) along the last axis, unit marginal variance
    z = rng.standard_normal(shape)
    out = np.empty(shape)
    out[..., 0] = z[..., 0]
    scale = np.sqrt(1 - phi**2)
    for g in range(1, shape[-1]):
        out[..., g] = phi * out[..., g - 1] + scale * z[..., g]
    return out


def simulate_markov_lattice(
    t=10,
    n_times=1061,
    a=0.4,
    b=0.4,
    smooth_vars=(1.0, 0.5, 0.25, 0.12, 0.06),
    rough_var=0.01,
    rough_phi=0.95,
    margin=20,
    seed=None,
):
    """Spatially Markov lattice of curves.

    ``X_z = a X_{z-(1,0)} + b X_{z-(0,1)} + e_z`` where each ``e_z`` is a
    random combination of cosine curves with variances ``smooth_vars``
    plus an AR(1)-in-time perturbation of variance ``rough_var``. The
    recursion starts from zero on a lattice enlarged by ``margin`` rows
    and columns, which are then discarded.
    """
    t = check_int(t, "t", minimum=2)
    n_times = check_int(n_times, "n_times", minimum=2)
    a = check_real(a, "a")
    b = check_real(b, "b")
    if abs(a) + abs(b) >= 1:
        raise ConfigError("the lattice recursion needs |a| + |b| < 1")
    margin = check_int(margin, "margin", minimum=0)
    smooth_vars = np.asarray(smooth_vars, float)
    rough_var = check_real(rough_var, "rough_var", low=0.0)
    rough_phi = check_real(rough_phi, "rough_phi", low=-1.0, high=1.0, low_open=True, high_open=True)
    rng = np.random.default_rng(seed)
    grid = TimeGrid.uniform(0.0, 1.0, n_times)
    basis = cosine_basis(grid, smooth_vars.size)
    size = t + margin
    xi = rng.standard_normal((size, size, smooth_vars.size)) * np.sqrt(smooth_vars)
    noise = xi @ basis + np.sqrt(rough_var) * _ar1_rows(rng, (size, size, n_times), rough_phi)
    x = np.zeros_like(noise)
    for i in range(size):
        for j in range(size):
            up = x[i - 1, j] if i else 0.0
            left = x[i, j - 1] if j else 0.0
            x[i, j] = a * up + b * left + noise[i, j]
    curves = x[margin:, margin:]
    truth = {
        "kind": "lattice",
        "seed": seed,
        "t": t,
        "n_times": n_times,
        "a": a,
        "b": b,
        "smooth_vars": smooth_vars.tolist(),
        "rough_var": rough_var,
        "rough_phi": rough_phi,
        "transfer_gain": markov_transfer_gain(a, b, (t, t)).tolist(),
    }
    return SyntheticDataset(LatticeField(grid, curves), truth)


def default_regression_beta(n_pairs, m):
    """Fixed coefficient table used by :func:`simulate_regression_lattice`.

    Entries cycle through ``{0.2, 0.3, 0.4, 0.5}`` in magnitude with
    alternating signs.
    """
    k = np.arange(n_pairs * m).reshape(n_pairs, m)
    return (0.2 + 0.1 * (k % 4)) * np.where(k % 2, -1.0, 1.0)


def _markov_scores(rng, size, sd, a, b):
    u = rng.standard_normal((size, size, sd.size)) * sd
    x = np.zeros_like(u)
    for i in range(size):
        for j in range(size):
            up = x[i - 1, j] if i else 0.0
            left = x[i, j - 1] if j else 0.0
            x[i, j] = a * up + b * left + u[i, j]
    return x


def simulate_regression_lattice(
    t=16,
    n_times=101,
    lags=DEFAULT_LAGS,
    beta_coef=None,
    driver_sd=(1.0, 0.8, 0.6),
    noise_sd=(0.5, 0.4, 0.3),
    correlation=0.5,
    driver_ab=(0.4, 0.4),
    margin=20,
    seed=None,
):
    """Exact neighbour-tensor regression with known coefficients.

    A driver field ``V`` follows the Markov recursion
    ``V_z = a V_{z-(1,0)} + b V_{z-(0,1)} + u_z`` in the span of ``M``
    orthonormal cosine curves, and the response is

    ``Y_z = sum_(i<=j) V_{z-h_i} <V_{z-h_j}, beta_ij> + e_z``

    with spatially correlated noise ``e_z = w_z + correlation * w_{z-(1,0)}``
    drawn independently of ``V``. The driver is returned as
    ``covariates``; fitting with it recovers ``beta``.

    Parameters
    ----------
    beta_coef : ndarray of shape (n_pairs, M), optional
        Scores of the true ``beta_ij``; :func:`default_regression_beta`
        when omitted.
    driver_sd, noise_sd : sequence of float
        Per-function standard deviations of ``u_z`` and ``w_z``; their
        common length sets ``M``.
    """
    t = check_int(t, "t", minimum=3)
    lags = check_lags(lags)
    driver_sd = np.asarray(driver_sd, float)
    noise_sd = np.asarray(noise_sd, float)
    if driver_sd.shape != noise_sd.shape or driver_sd.ndim != 1:
        raise ConfigError("driver_sd and noise_sd must be sequences of equal length")
    m = driver_sd.size
    pairs = lag_pairs(len(lags))
    beta_coef = default_regression_beta(len(pairs), m) if beta_coef is None else np.asarray(beta_coef, float)
    if beta_coef.shape != (len(pairs), m):
        raise ConfigError(f"beta_coef must have shape {(len(pairs), m)}")
    correlation = check_real(correlation, "correlation")
    a, b = (check_real(v, "driver_ab") for v in driver_ab)
    if abs(a) + abs(b) >= 1:
        raise ConfigError("the driver recursion needs |a| + |b| < 1")
    margin = check_int(margin, "margin", minimum=0)
    rng = np.random.default_rng(seed)
    grid = TimeGrid.uniform(0.0, 1.0, n_times)
    basis = cosine_basis(grid, m)
    v = _markov_scores(rng, t + margin, driver_sd, a, b)[margin:, margin:]
    w = rng.standard_normal((t + 1, t, m)) * noise_sd
    e = w[1:] + correlation * w[:-1]
    y = e.copy()
    r0 = max(h[0] for h in lags)
    c0 = max(h[1] for h in lags)
    for p, (i, j) in enumerate(pairs):
        hi, hj = lags[i], lags[j]
        vi = v[r0 - hi[0] : t - hi[0], c0 - hi[1] : t - hi[1]]
        vj = v[r0 - hj[0] : t - hj[0], c0 - hj[1] : t - hj[1]]
        y[r0:, c0:] += vi * (vj @ beta_coef[p])[..., None]
    truth = {
        "kind": "regression",
        "seed": seed,
        "t": t,
        "n_times": n_times,
        "lags": [list(h) for h in lags],
        "pairs": [list(p) for p in pairs],
        "beta_coef": beta_coef.tolist(),
        "beta": (beta_coef @ basis).tolist(),
        "driver_sd": driver_sd.tolist(),
        "noise_sd": noise_sd.tolist(),
        "correlation": correlation,
    }
    return SyntheticDataset(
        LatticeField(grid, y @ basis), truth, covariates=LatticeField(grid, v @ basis)
    )


def simulate_sign_lattice(t=10, n_times=101, seed=None):
    """Noiseless ``Y_z = s_z f`` with ``s_z = s_{z-(1,0)} s_{z-(0,1)}``.

    The first row and column carry random signs. ``Y_z`` equals
    ``Y_{z-(1,0)} <Y_{z-(0,1)}, f / |f|^2>`` exactly.
    """
    t = check_int(t, "t", minimum=2)
    rng = np.random.default_rng(seed)
    grid = TimeGrid.uniform(0.0, 1.0, n_times)
    f = 1.0 + np.sin(2 * np.pi * grid.nodes)
    s = np.ones((t, t))
    s[0, :] = rng.choice([-1.0, 1.0], t)
    s[:, 0] = rng.choice([-1.0, 1.0], t)
    for i in range(1, t):
        for j in range(1, t):
            s[i, j] = s[i - 1, j] * s[i, j - 1]
    norm2 = float(np.sum(grid.weights * f**2))
    truth = {
        "kind": "exact",
        "seed": seed,
        "t": t,
        "n_times": n_times,
        "pair": [0, 1],
        "beta": (f / norm2).tolist(),
    }
    return SyntheticDataset(LatticeField(grid, s[:, :, None] * f), truth)
