"""CSV and JSON tables, panel files and SVG figures.

Floats are written with ``%.17g`` (round-trip exact) except the spatial
cross-validation table, which uses fixed scientific notation. Figures are
rendered with the Agg backend and a fixed SVG hash salt and no date, so
identical inputs give identical files.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from funcreg.core import TimeGrid
from funcreg.exceptions import DataError
from funcreg.preprocess import RECORD_HEADER, LatticeField

__all__ = [
    "PANEL_HEADER",
    "sniff_input",
    "read_panel",
    "read_panel_entries",
    "write_panel",
    "panel_rows",
    "write_json",
    "write_table",
    "read_table",
    "write_loocv",
    "write_spatial_cv",
    "read_spatial_cv",
    "write_spectral_density",
    "plot_curve_overlay",
    "plot_spectral_diagonal",
    "plot_cv_errors",
]

PANEL_HEADER = ("node_row", "node_col", "tau", "value")
FLOAT = "%.17g"
CV_FLOAT = "%.10e"


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return FLOAT % float(value)


def sniff_input(path):
    """``"panel"`` or ``"records"`` from the CSV header."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    header = tuple(h.strip() for h in header or ())
    if header == PANEL_HEADER:
        return "panel"
    if header == RECORD_HEADER:
        return "records"
    raise DataError(
        f"{path}: unrecognized header {','.join(header)!r}; expected "
        f"{','.join(PANEL_HEADER)} or {','.join(RECORD_HEADER)}"
    )


def read_panel(path):
    """Read a ``node_row,node_col,tau,value`` panel into a :class:`LatticeField`.

    Every (node, tau) pair must appear exactly once; rows and columns are
    numbered from 0. The time grid uses trapezoid weights on the distinct
    ``tau`` values.
    """
    data = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader, ()))
        if header != PANEL_HEADER:
            raise DataError(f"{path}: line 1: expected header {','.join(PANEL_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                data.append((int(row[0]), int(row[1]), float(row[2]), float(row[3])))
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    if not data:
        raise DataError(f"{path}: empty panel")
    arr = np.array(data)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    rows, cols = arr[:, 0].astype(int), arr[:, 1].astype(int)
    if rows.min() < 0 or cols.min() < 0:
        raise DataError(f"{path}: negative node index")
    taus, t_idx = np.unique(arr[:, 2], return_inverse=True)
    t1, t2 = rows.max() + 1, cols.max() + 1
    expected = t1 * t2 * taus.size
    if len(arr) != expected:
        raise DataError(f"{path}: panel has {len(arr)} rows, a complete {t1}x{t2}x{taus.size} panel needs {expected}")
    curves = np.full((t1, t2, taus.size), np.nan)
    seen = np.zeros(curves.shape, bool)
    if np.any(np.bincount(np.ravel_multi_index((rows, cols, t_idx), curves.shape), minlength=expected) > 1):
        raise DataError(f"{path}: duplicate (node, tau) entries")
    curves[rows, cols, t_idx] = arr[:, 3]
    seen[rows, cols, t_idx] = True
    if not seen.all():
        raise DataError(f"{path}: panel is incomplete")
    if taus.size < 2:
        raise DataError(f"{path}: need at least two tau values")
    return LatticeField(TimeGrid.trapezoid(taus), curves)


def read_panel_entries(path):
    """Panel rows as ``(keys, values)`` without requiring a full lattice.

    ``keys`` has shape (n, 3) holding ``node_row, node_col, tau``; rows are
    sorted by key.
    """
    header, rows = read_table(path)
    if tuple(h.strip() for h in header) != PANEL_HEADER:
        raise DataError(f"{path}: line 1: expected header {','.join(PANEL_HEADER)}")
    try:
        arr = np.array([[float(v) for v in r] for r in rows]).reshape(-1, 4)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
    return arr[order, :3], arr[order, 3]


def panel_rows(nodes, taus, values):
    """Yield ``(row, col, tau, value)`` for curves ``values[n]`` at ``nodes[n]``."""
    for (i, j), curve in zip(nodes, values):
        for tau, v in zip(taus, curve):
            yield int(i), int(j), tau, v


def write_panel(path, field_or_rows):
    """Write a lattice field, or ``(row, col, tau, value)`` tuples, as a panel."""
    if isinstance(field_or_rows, LatticeField):
        f = field_or_rows
        nodes = [(i, j) for i in range(f.extent[0]) for j in range(f.extent[1])]
        rows = panel_rows(nodes, f.grid.nodes, f.curves.reshape(-1, f.n_times))
    else:
        rows = field_or_rows
    write_table(path, PANEL_HEADER, rows)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path):
    """``(header, rows)`` with every cell as a string."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        return header, [r for r in reader if r]


def write_json(path, obj):
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(f"cannot serialize {type(o).__name__}")

    text = json.dumps(obj, indent=2, sort_keys=True, default=default, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_loocv(path, result):
    """``index,l1_error`` rows followed by ``mean,<value>``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "l1_error"])
        for n, e in zip(result.indices, result.errors):
            w.writerow([int(n), FLOAT % e])
        w.writerow(["mean", FLOAT % result.mean])


def write_spatial_cv(path, report):
    """Grid of per-node errors with ``R``/``C`` labels and a grand-mean line."""
    rows, cols = report.errors.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + [f"C{j + 1}" for j in range(cols)])
        for i in range(rows):
            w.writerow([f"R{i + 1}"] + [CV_FLOAT % v for v in report.errors[i]])
        w.writerow(["grand_mean", CV_FLOAT % report.grand_mean])


def read_spatial_cv(path):
    """``(errors, grand_mean)`` from :func:`write_spatial_cv` output."""
    _, rows = read_table(path)
    if not rows or rows[-1][0] != "grand_mean":
        raise DataError(f"{path}: missing grand_mean line")
    errors = np.array([[float(v) for v in r[1:]] for r in rows[:-1]])
    return errors, float(rows[-1][1])


def write_spectral_density(path, estimate):
    """``omega_row,omega_col,k,l,re,im`` for every reported frequency, 1-based ``k, l``."""
    w1, w2 = estimate.freqs
    a, b, mats = estimate.reported()
    M = mats.shape[-1]

    def rows():
        for ai, bi, m in zip(a, b, mats):
            for k in range(M):
                for l in range(M):
                    yield w1[ai], w2[bi], k + 1, l + 1, m[k, l].real, m[k, l].imag

    write_table(path, ("omega_row", "omega_col", "k", "l", "re", "im"), rows())


# ---------------------------------------------------------------- figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "funcreg"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    fig.clear()
    import matplotlib.pyplot as plt

    plt.close(fig)


def plot_curve_overlay(path, taus, observed, predicted, labels, xlabel="tau"):
    """Observed (solid) against predicted (dashed) curves, one panel each."""
    plt = _pyplot()
    n = len(labels)
    cols = min(n, 3)
    rows = math.ceil(n / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 2.8 * rows), squeeze=False)
    for ax, obs, pred, label in zip(axes.flat, observed, predicted, labels):
        ax.plot(taus, obs, color="black", lw=1.0, label="observed")
        ax.plot(taus, pred, color="tab:red", lw=1.0, ls="--", label="predicted")
        ax.set_title(label, fontsize=9)
        ax.set_xlabel(xlabel, fontsize=8)
    for ax in list(axes.flat)[n:]:
        ax.set_visible(False)
    axes.flat[0].legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_spectral_diagonal(path, estimate, max_components=4):
    """Heatmaps of ``f(omega)[k, k]`` over the frequency grid."""
    plt = _pyplot()
    M = min(estimate.matrices.shape[-1], max_components)
    fig, axes = plt.subplots(1, M, figsize=(3.4 * M, 3.0), squeeze=False)
    w1, w2 = estimate.freqs
    for k, ax in enumerate(axes.flat):
        values = np.where(estimate.mask, estimate.matrices[..., k, k].real, np.nan)
        im = ax.pcolormesh(w2, w1, values, shading="nearest", cmap="viridis")
        ax.set_title(f"component {k + 1}", fontsize=9)
        ax.set_xlabel("omega_col", fontsize=8)
        ax.set_ylabel("omega_row", fontsize=8)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path)


def plot_cv_errors(path, errors, title):
    plt = _pyplot()
    errors = np.asarray(errors)
    fig, ax = plt.subplots(figsize=(4.5, 3.6))
    if errors.ndim == 2:
        im = ax.imshow(errors, cmap="magma", origin="upper")
        ax.set_xticks(range(errors.shape[1]), [f"C{j + 1}" for j in range(errors.shape[1])], fontsize=7)
        ax.set_yticks(range(errors.shape[0]), [f"R{i + 1}" for i in range(errors.shape[0])], fontsize=7)
        fig.colorbar(im, ax=ax)
    else:
        ax.plot(errors, lw=0.8)
        ax.set_xlabel("fold", fontsize=8)
        ax.set_ylabel("absolute error", fontsize=8)
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    _save(fig, path)
