"""Raw case records to a tapered, detrended lattice of log-intensity curves.

The fixed pipeline order is::

    ingest -> smooth_log_intensity -> spatial_interpolate -> taper -> detrend

Each step is a pure function; :class:`LatticeTaper` and
:class:`LatticeDetrender` wrap the last two as scikit-learn transformers.
"""

import csv
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import BSpline, make_lsq_spline
from sklearn.base import BaseEstimator, TransformerMixin

from funcreg.core import SampledFunction, TimeGrid
from funcreg.exceptions import DataError
from funcreg.validation import check_finite_array, check_int, check_real

logger = logging.getLogger(__name__)

__all__ = [
    "StepCurveRecord",
    "LatticeField",
    "ingest_csv",
    "group_by_region",
    "smooth_log_intensity",
    "spatial_interpolate",
    "taper",
    "tukey_weights",
    "detrend",
    "edge_trim_count",
    "split_edge_trim",
    "polynomial_projector",
    "fit_kernel_polynomial",
    "select_poly_degree",
    "LatticeTaper",
    "LatticeDetrender",
    "records_to_lattice",
]

RECORD_HEADER = ("region_id", "x", "y", "day", "cumulative")


@dataclass(frozen=True)
class StepCurveRecord:
    region_id: str
    x: float
    y: float
    day: int
    cumulative: float

    @property
    def coord(self):
        return (self.x, self.y)


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Curves on a regular ``T1 x T2`` lattice sharing one :class:`TimeGrid`.

    Attributes
    ----------
    grid : TimeGrid
    curves : ndarray of shape (T1, T2, G)
    taper_weights : ndarray of shape (T1, T2)
        Spatial weights already applied to ``curves``; ones when untapered.
    coords : ndarray of shape (T1, T2, 2) or None
        Physical node positions, when known.
    """

    grid: TimeGrid
    curves: np.ndarray
    taper_weights: np.ndarray = None
    coords: np.ndarray = field(default=None)

    def __post_init__(self):
        curves = check_finite_array(self.curves, "lattice curves", ndim=3)
        if curves.shape[2] != self.grid.size:
            raise DataError(
                f"curves have {curves.shape[2]} time nodes, grid has {self.grid.size}"
            )
        weights = self.taper_weights
        weights = np.ones(curves.shape[:2]) if weights is None else np.asarray(weights, float)
        if weights.shape != curves.shape[:2]:
            raise DataError("taper_weights must have one entry per lattice node")
        if np.any(weights < 0) or np.any(weights > 1):
            raise DataError("taper_weights must lie in [0, 1]")
        curves.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "taper_weights", weights)
        if self.coords is not None:
            coords = np.asarray(self.coords, float)
            if coords.shape != curves.shape[:2] + (2,):
                raise DataError("coords must have shape (T1, T2, 2)")
            object.__setattr__(self, "coords", coords)

    @property
    def extent(self):
        return self.curves.shape[:2]

    @property
    def n_times(self):
        return self.curves.shape[2]

    def curve(self, i, j):
        return SampledFunction(self.grid, self.curves[i, j])

    def with_curves(self, curves, **changes):
        return replace(self, curves=curves, **changes)


# ---------------------------------------------------------------- ingest


def ingest_csv(path):
    """Read ``region_id,x,y,day,cumulative`` records.

    Decreasing cumulative counts within a region (registry revisions) are
    clamped to the running maximum and logged.

    Returns
    -------
    records : list of StepCurveRecord
        Sorted by region (first appearance) and day.
    repairs : list of dict
        One entry per clamped row with ``region_id``, ``day``, ``original``
        and ``repaired``.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no records")
        if tuple(h.strip() for h in header) != RECORD_HEADER:
            raise DataError(
                f"{path}: line 1: expected header {','.join(RECORD_HEADER)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise DataError(f"{path}: line {lineno}: expected 5 fields, got {len(row)}")
            try:
                rec = StepCurveRecord(
                    region_id=row[0].strip(),
                    x=float(row[1]),
                    y=float(row[2]),
                    day=int(row[3]),
                    cumulative=float(row[4]),
                )
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            if not rec.region_id:
                raise DataError(f"{path}: line {lineno}: empty region_id")
            if not (np.isfinite(rec.x) and np.isfinite(rec.y) and np.isfinite(rec.cumulative)):
                raise DataError(f"{path}: line {lineno}: non-finite value")
            if rec.cumulative < 0:
                raise DataError(f"{path}: line {lineno}: negative cumulative count")
            rows.append((lineno, rec))
    if not rows:
        raise DataError(f"{path}: no records")

    by_region = OrderedDict()
    for lineno, rec in rows:
        by_region.setdefault(rec.region_id, []).append((lineno, rec))

    records, repairs = [], []
    for region, items in by_region.items():
        items.sort(key=lambda item: item[1].day)
        days = [rec.day for _, rec in items]
        if len(set(days)) != len(days):
            raise DataError(f"{path}: region {region!r} has duplicate days")
        coords = {(rec.x, rec.y) for _, rec in items}
        if len(coords) != 1:
            raise DataError(f"{path}: region {region!r} has inconsistent coordinates")
        running = -np.inf
        for lineno, rec in items:
            if rec.cumulative < running:
                repairs.append(
                    {"region_id": region, "day": rec.day, "line": lineno,
                     "original": rec.cumulative, "repaired": running}
                )
                logger.warning(
                    "line %d: region %s day %d cumulative %g < %g; clamped",
                    lineno, region, rec.day, rec.cumulative, running,
                )
                rec = replace(rec, cumulative=running)
            running = rec.cumulative
            records.append(rec)
    return records, repairs


def group_by_region(records):
    """Map ``region_id -> (coord, days, cumulative)`` preserving order."""
    out = OrderedDict()
    for rec in records:
        coord, days, values = out.setdefault(rec.region_id, (rec.coord, [], []))
        days.append(rec.day)
        values.append(rec.cumulative)
    return OrderedDict(
        (k, (coord, np.asarray(d, float), np.asarray(v, float))) for k, (coord, d, v) in out.items()
    )


# ---------------------------------------------------------------- smoothing


def smooth_log_intensity(days, cumulative, grid, n_basis=None, floor=1e-3):
    """Log of the derivative of a least-squares cubic B-spline fit.

    Parameters
    ----------
    days, cumulative : array_like
        Observed step curve; ``days`` strictly increasing after sorting.
    grid : TimeGrid
        Evaluation nodes, inside ``[min(days), max(days)]``.
    n_basis : int, optional
        Number of cubic B-spline basis functions, with uniform interior
        knots. Defaults to ``max(4, ceil(n_days / 7))``.
    floor : float
        Lower clamp applied to the derivative before the logarithm.

    Returns
    -------
    SampledFunction
    """
    days = check_finite_array(days, "days", ndim=1)
    values = check_finite_array(cumulative, "cumulative", ndim=1)
    if days.shape != values.shape:
        raise DataError("days and cumulative must have equal length")
    floor = check_real(floor, "floor", low=0.0, low_open=True)
    order = np.argsort(days, kind="stable")
    days, values = days[order], values[order]
    if np.any(np.diff(days) <= 0):
        raise DataError("days must be distinct")
    if n_basis is None:
        n_basis = max(4, math.ceil(days.size / 7))
    n_basis = check_int(n_basis, "n_basis", minimum=4)
    if days.size < n_basis + 4:
        raise DataError(
            f"{days.size} observations are too few for {n_basis} basis functions "
            f"(need {n_basis + 4})"
        )
    lo, hi = days[0], days[-1]
    if grid.nodes[0] < lo - 1e-9 or grid.nodes[-1] > hi + 1e-9:
        raise DataError("grid extends outside the observed day range")

    k = 3
    interior = np.linspace(lo, hi, n_basis - k + 1)[1:-1]
    knots = np.concatenate([np.full(k + 1, lo), interior, np.full(k + 1, hi)])
    design = BSpline.design_matrix(days, knots, k).toarray()
    if np.linalg.matrix_rank(design) < n_basis:
        raise DataError("B-spline design matrix is rank-deficient for these knots")
    # center the counts; the derivative does not see the shift
    offset = values.mean()
    try:
        spline = make_lsq_spline(days, values - offset, knots, k=k)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DataError(f"B-spline fit failed: {exc}") from None
    deriv = spline.derivative()(np.clip(grid.nodes, lo, hi))
    return SampledFunction(grid, np.log(np.maximum(deriv, floor)))


# ---------------------------------------------------------------- interpolation


def _lattice_coords(extent, bounds):
    (x0, x1), (y0, y1) = bounds
    xs = np.linspace(x0, x1, extent[0])
    ys = np.linspace(y0, y1, extent[1])
    return np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)


def spatial_interpolate(sites, curves, grid, extent, bounds=None, power=2.0, node_coords=None):
    """Inverse-distance-weighted interpolation of site curves to a lattice.

    Parameters
    ----------
    sites : array_like of shape (S, 2)
    curves : array_like of shape (S, G)
    grid : TimeGrid
    extent : (int, int)
        Lattice side lengths.
    bounds : ((x0, x1), (y0, y1)), optional
        Lattice corner positions. Defaults to the sites' bounding box.
    power : float
        Distance exponent.
    node_coords : array_like of shape (T1, T2, 2), optional
        Explicit node positions; overrides ``bounds``.

    Returns
    -------
    LatticeField
    """
    sites = check_finite_array(sites, "site coordinates", ndim=2)
    curves = check_finite_array(curves, "site curves", ndim=2)
    if sites.shape[1] != 2 or curves.shape[0] != sites.shape[0]:
        raise DataError("need one (x, y) coordinate per site curve")
    if curves.shape[1] != grid.size:
        raise DataError("site curves do not match the grid")
    if sites.shape[0] < 3:
        raise DataError("spatial interpolation needs at least 3 sites")
    extent = tuple(check_int(t, "lattice extent", minimum=2) for t in extent)
    if len(extent) != 2:
        raise DataError("lattice extent must have two sides")
    if np.unique(sites, axis=0).shape[0] != sites.shape[0]:
        raise DataError("duplicate site coordinates")

    if node_coords is None:
        if bounds is None:
            bounds = tuple(zip(sites.min(axis=0), sites.max(axis=0)))
        node_coords = _lattice_coords(extent, bounds)
    node_coords = np.asarray(node_coords, float)
    nodes = node_coords.reshape(-1, 2)
    dist = np.linalg.norm(nodes[:, None, :] - sites[None, :, :], axis=-1)
    weights = np.zeros_like(dist)
    hit = dist < 1e-9
    on_site = hit.any(axis=1)
    weights[on_site] = hit[on_site] / hit[on_site].sum(axis=1, keepdims=True)
    far = ~on_site
    inv = dist[far] ** -power
    weights[far] = inv / inv.sum(axis=1, keepdims=True)
    out = (weights @ curves).reshape(extent + (grid.size,))
    return LatticeField(grid, out, coords=node_coords)


# ---------------------------------------------------------------- taper / detrend


def tukey_weights(size, fraction=0.2):
    """Split-cosine weights evaluated at cell-centre positions ``(i + 1/2) / size``."""
    size = check_int(size, "size", minimum=1)
    fraction = check_real(fraction, "taper fraction", low=0.0, high=1.0)
    u = (np.arange(size) + 0.5) / size
    w = np.ones(size)
    if fraction == 0:
        return w
    half = fraction / 2
    lo = u < half
    hi = u > 1 - half
    w[lo] = 0.5 * (1 - np.cos(2 * np.pi * u[lo] / fraction))
    w[hi] = 0.5 * (1 - np.cos(2 * np.pi * (1 - u[hi]) / fraction))
    return w


def taper(field, fraction=0.2):
    """Multiply node curves by a separable Tukey spatial weight.

    The recorded ``taper_weights`` compose multiplicatively with any taper
    already applied.
    """
    t1, t2 = field.extent
    if min(t1, t2) < 3:
        raise DataError("tapering needs at least 3 nodes per dimension")
    w = np.outer(tukey_weights(t1, fraction), tukey_weights(t2, fraction))
    return field.with_curves(field.curves * w[:, :, None], taper_weights=field.taper_weights * w)


def detrend(field):
    """Subtract the node-average curve.

    Returns
    -------
    field : LatticeField
    mean_curve : SampledFunction
    """
    mean = field.curves.mean(axis=(0, 1))
    return field.with_curves(field.curves - mean), SampledFunction(field.grid, mean)


class LatticeTaper(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`taper`."""

    def __init__(self, fraction=0.2):
        self.fraction = fraction

    def fit(self, X, y=None):
        check_real(self.fraction, "fraction", low=0.0, high=1.0)
        return self

    def transform(self, X):
        return taper(X, self.fraction)


class LatticeDetrender(TransformerMixin, BaseEstimator):
    """Remove the node-average curve learned at fit time.

    ``transform`` subtracts the stored ``mean_curve_``, so a held-out field
    is centred with the training mean; ``inverse_transform`` adds it back.
    """

    def fit(self, X, y=None):
        self.mean_curve_ = X.curves.mean(axis=(0, 1))
        return self

    def transform(self, X):
        return X.with_curves(X.curves - self.mean_curve_)

    def inverse_transform(self, X):
        return X.with_curves(X.curves + self.mean_curve_)


def records_to_lattice(
    records,
    extent=(10, 10),
    grid=None,
    n_basis=None,
    floor=1e-3,
    taper_fraction=0.2,
    detrend_curves=True,
):
    """Run the full pipeline from case records to a lattice field.

    Parameters
    ----------
    records : list of StepCurveRecord
    extent : (int, int)
    grid : TimeGrid, optional
        Time nodes; one per day over the days shared by every region by
        default.
    taper_fraction : float or None
        ``None`` skips tapering.
    detrend_curves : bool

    Returns
    -------
    field : LatticeField
    mean_curve : SampledFunction or None
        The subtracted node-average curve.
    """
    regions = group_by_region(records)
    if grid is None:
        start = max(days.min() for _, days, _ in regions.values())
        stop = min(days.max() for _, days, _ in regions.values())
        if stop - start < 1:
            raise DataError("regions share fewer than two observed days")
        grid = TimeGrid.trapezoid(np.arange(start, stop + 1, dtype=float))
    sites, curves = [], []
    for coord, days, values in regions.values():
        sites.append(coord)
        curves.append(smooth_log_intensity(days, values, grid, n_basis=n_basis, floor=floor).values)
    field = spatial_interpolate(np.array(sites), np.array(curves), grid, extent)
    if taper_fraction is not None:
        field = taper(field, taper_fraction)
    mean = None
    if detrend_curves:
        field, mean = detrend(field)
    return field, mean


# ---------------------------------------------------------------- edge trim


def edge_trim_count(n_raw, fraction=0.057):
    """Number of edge time nodes to drop, ``ceil(fraction * n_raw)``."""
    n_raw = check_int(n_raw, "n_raw", minimum=1)
    # round first so 0.057 * 1061 = 60.477 is not pushed up by representation error
    return int(math.ceil(round(fraction * n_raw, 9)))


def split_edge_trim(n_trim):
    """Split a trim count into leading and trailing parts (trailing gets the extra)."""
    lead = n_trim // 2
    return lead, n_trim - lead


# ---------------------------------------------------------------- polynomial smoothing


def polynomial_projector(nodes, degree):
    """Least-squares projector onto polynomials of ``degree`` sampled at ``nodes``.

    Uses a Legendre basis on the nodes mapped to ``[-1, 1]``.
    """
    degree = check_int(degree, "poly_degree", minimum=0, maximum=5)
    nodes = np.asarray(nodes, float)
    span = nodes[-1] - nodes[0]
    x = 2 * (nodes - nodes[0]) / span - 1 if span > 0 else np.zeros_like(nodes)
    P = np.polynomial.legendre.legvander(x, degree)
    q, _ = np.linalg.qr(P)
    return q @ q.T


def fit_kernel_polynomial(kernel, nodes, degree):
    """Tensor-product polynomial least-squares fit of a sampled kernel."""
    proj = polynomial_projector(nodes, degree)
    return proj @ np.asarray(kernel) @ proj.T


def select_poly_degree(left, right, nodes, degrees=range(1, 6)):
    """Degree with minimum AIC for smoothing rank-one kernels ``left x right``.

    Parameters
    ----------
    left, right : ndarray of shape (n_kernels, G)
        Factors; kernel ``k`` is ``outer(left[k], right[k])``.
    nodes : ndarray of shape (G,)
    degrees : iterable of int

    Notes
    -----
    Each kernel carries its own ``(d + 1)**2`` coefficients, so the penalty
    is ``2 * n_kernels * (d + 1)**2``. Residuals are computed without
    forming the ``G x G`` kernels, using
    ``|A - PAP|^2 = |A|^2 - |PAP|^2`` for an orthogonal projector ``P``.
    """
    left = np.atleast_2d(np.asarray(left, float))
    right = np.atleast_2d(np.asarray(right, float))
    n_k, G = left.shape
    n_obs = n_k * G * G
    total = np.sum(np.sum(left**2, axis=1) * np.sum(right**2, axis=1))
    best, best_aic = None, np.inf
    for d in degrees:
        proj = polynomial_projector(nodes, d)
        fitted = np.sum(np.sum((left @ proj) ** 2, axis=1) * np.sum((right @ proj) ** 2, axis=1))
        # floor at roundoff so exact fits of several degrees tie and the penalty decides
        rss = max(total - fitted, 1e-14 * total, 1e-300)
        aic = n_obs * np.log(rss / n_obs) + 2 * n_k * (d + 1) ** 2
        if aic < best_aic:
            best, best_aic = d, aic
    return best
