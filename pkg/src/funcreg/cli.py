"""Command-line entry point: ``funcreg {simulate,fit,cv,report}``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from funcreg import reporting
from funcreg.bayes import fit_bayes_gls, loocv
from funcreg.exceptions import ConfigError, DataError, FuncRegError, NumericalError
from funcreg.preprocess import ingest_csv, records_to_lattice, taper
from funcreg.simulate import (
    lattice_to_series,
    simulate_arh_raster,
    simulate_markov_lattice,
    simulate_regression_lattice,
    simulate_sign_lattice,
)
from funcreg.spectral import DEFAULT_LAGS, fit_spatial_spectral, spatial_kfold_cv

logger = logging.getLogger("funcreg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
PIPELINES = ("bayes-surface", "spatial-spectral")
KINDS = ("arh1", "lattice", "regression", "exact")
WINDOW_CHOICES = ("bartlett-hann", "blackman-harris")


# ---------------------------------------------------------------- argument types


def _lags(text):
    try:
        out = tuple(tuple(int(v) for v in part.split(",")) for part in text.split(";") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"lags must look like '1,0;0,1;1,1', got {text!r}") from None
    if not out or any(len(h) != 2 for h in out):
        raise argparse.ArgumentTypeError(f"lags must look like '1,0;0,1;1,1', got {text!r}")
    return out


def _poly_degree(text):
    if text == "aic":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"poly degree must be an integer or 'aic', got {text!r}") from None


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _detrend_choice(text):
    if text not in ("auto", "yes", "no"):
        raise argparse.ArgumentTypeError("detrend must be auto, yes or no")
    return text


def build_parser():
    parser = argparse.ArgumentParser(prog="funcreg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; command-line flags take precedence")
    common.add_argument("--out", required=False, help="output directory")
    common.add_argument("--seed", type=int, default=0)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--pipeline", choices=PIPELINES, default="spatial-spectral")
    model.add_argument("--input", help="panel CSV (node_row,node_col,tau,value) or case records CSV")
    model.add_argument("--covariates", help="panel CSV whose neighbours form the spatial regressors")
    model.add_argument("--jobs", type=int, default=1, help="worker processes")
    model.add_argument("--p", type=int, default=7, help="number of temporal lags")
    model.add_argument("--m", type=int, default=None, help="truncation: k for bayes-surface, M for spatial-spectral")
    model.add_argument("--threshold", type=float, default=0.99, help="singular-value share that selects M")
    model.add_argument("--max-lag", type=int, default=None)
    model.add_argument("--lags", type=_lags, default=DEFAULT_LAGS, help="spatial lags, e.g. '1,0;0,1;1,1'")
    model.add_argument("--bandwidth", type=float, default=None)
    model.add_argument("--window", choices=WINDOW_CHOICES, default="bartlett-hann")
    model.add_argument("--ridge", type=float, default=None)
    model.add_argument("--include-axis-frequencies", action="store_true")
    model.add_argument("--reuse-correlation", action="store_true")
    model.add_argument("--poly-degree", type=_poly_degree, default=None)
    model.add_argument("--n-boot", type=int, default=500)
    model.add_argument("--block-len", type=int, default=None)
    model.add_argument("--edge-trim", type=int, default=None)
    model.add_argument("--folds", type=int, default=9)
    model.add_argument("--taper", type=float, default=None,
                       help="Tukey taper fraction; 0.2 for records input, none for panels by default")
    model.add_argument("--detrend", type=_detrend_choice, default="auto",
                       help="auto: yes for records input, no for panels")
    model.add_argument("--t", type=int, default=10, help="lattice side for records input")
    model.add_argument("--n-basis", type=int, default=None, help="B-spline basis size for records input")

    p_sim = sub.add_parser("simulate", parents=[common], help="write a synthetic panel and its ground truth")
    p_sim.add_argument("--kind", choices=KINDS, default="lattice")
    p_sim.add_argument("--n", type=int, default=500, help="series length for arh1")
    p_sim.add_argument("--t", type=int, default=None, help="lattice side")
    p_sim.add_argument("--n-times", type=int, default=None, help="time nodes per curve")

    sub.add_parser("fit", parents=[common, model], help="fit a pipeline and write estimates and figures")
    sub.add_parser("cv", parents=[common, model], help="cross-validate a pipeline")

    p_rep = sub.add_parser("report", parents=[common], help="redraw figures and summarize an output directory")
    p_rep.add_argument("--input", help="directory written by fit or cv")
    return parser, sub


def read_config(path):
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _config_defaults(subparser, values):
    actions = {a.dest: a for a in subparser._actions}
    out = {}
    for dest, raw in values.items():
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise ConfigError(f"unknown configuration key {dest!r}")
        if action.nargs == 0:
            value = _bool(raw)
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"configuration key {dest!r}: {exc}") from None
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"configuration key {dest!r} must be one of {sorted(action.choices)}")
        out[dest] = value
    return out


def parse_args(argv):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparser = sub.choices[args.command]
        subparser.set_defaults(**_config_defaults(subparser, read_config(args.config)))
        args = parser.parse_args(argv)
    return parser, sub, args


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    out = _out_dir(args)
    if args.kind == "arh1":
        data = simulate_arh_raster(n=args.n, t=args.t or 10, seed=args.seed)
    elif args.kind == "lattice":
        data = simulate_markov_lattice(t=args.t or 10, n_times=args.n_times or 1061, seed=args.seed)
    elif args.kind == "regression":
        data = simulate_regression_lattice(t=args.t or 16, n_times=args.n_times or 101, seed=args.seed)
    else:
        data = simulate_sign_lattice(t=args.t or 10, n_times=args.n_times or 101, seed=args.seed)
    reporting.write_panel(out / "panel.csv", data.field)
    if data.covariates is not None:
        reporting.write_panel(out / "covariates.csv", data.covariates)
    reporting.write_json(out / "truth.json", data.truth)
    t1, t2 = data.field.extent
    print(f"simulated {args.kind}: {t1 * t2} nodes x {data.field.n_times} time points -> {out / 'panel.csv'}")
    return EXIT_OK


def load_field(args):
    """Lattice field from ``--input`` after the configured taper and detrend."""
    kind = reporting.sniff_input(args.input)
    if kind == "records":
        records, repairs = ingest_csv(args.input)
        if repairs:
            logger.warning("%d cumulative counts clamped during ingest", len(repairs))
        fraction = 0.2 if args.taper is None else args.taper
        field, _ = records_to_lattice(
            records,
            extent=(args.t, args.t),
            n_basis=args.n_basis,
            taper_fraction=fraction if fraction > 0 else None,
            detrend_curves=args.detrend != "no",
        )
        return field, kind
    field = reporting.read_panel(args.input)
    if args.taper:
        field = taper(field, args.taper)
    if args.detrend == "yes":
        field = field.with_curves(field.curves - field.curves.mean(axis=(0, 1)))
    return field, kind


def _covariates(args, field):
    if not getattr(args, "covariates", None):
        return None
    cov = reporting.read_panel(args.covariates)
    if cov.extent != field.extent or cov.grid != field.grid:
        raise DataError("covariates panel must match the input lattice and time points")
    return cov


def _spatial_options(args):
    return dict(
        lags=args.lags,
        threshold=args.threshold,
        n_components=args.m,
        max_lag=args.max_lag,
        bandwidth=args.bandwidth,
        window=args.window,
        ridge=args.ridge,
        include_axis=args.include_axis_frequencies,
    )


def _bayes_options(args):
    return dict(k=args.m, poly_degree=args.poly_degree, n_boot=args.n_boot, block_len=args.block_len)


def _overlay_nodes(nodes, count=6):
    idx = np.linspace(0, len(nodes) - 1, min(count, len(nodes))).round().astype(int)
    return np.unique(idx)


def fit_spatial(args, field, out):
    fit = fit_spatial_spectral(field, covariates=_covariates(args, field), **_spatial_options(args))
    grid = field.grid
    rows, cols = np.arange(field.extent[0]), np.arange(field.extent[1])
    r0 = max(h[0] for h in fit.lags)
    c0 = max(h[1] for h in fit.lags)
    nodes = np.array([(i, j) for i in rows[r0:] for j in cols[c0:]])
    fitted = fit.basis.synthesize(fit.gls.fitted).reshape(len(nodes), -1)
    observed = field.curves[nodes[:, 0], nodes[:, 1]]
    names = [f"beta_h{i + 1}_h{j + 1}" for i, j in fit.pairs]
    reporting.write_table(out / "beta.csv", ["tau"] + names, zip(grid.nodes, *fit.beta))
    reporting.write_table(
        out / "basis.csv", ["tau"] + [f"psi_{k + 1}" for k in range(fit.M)], zip(grid.nodes, *fit.basis.functions)
    )
    reporting.write_panel(out / "predictor.csv", reporting.panel_rows(nodes, grid.nodes, fitted))
    reporting.write_panel(out / "response.csv", reporting.panel_rows(nodes, grid.nodes, observed))
    reporting.write_spectral_density(out / "spectral_density.csv", fit.estimate)
    summary = {
        "pipeline": "spatial-spectral",
        "M": fit.M,
        "singular_shares": fit.covariance.shares[: max(fit.M, 5)],
        "bandwidth": fit.estimate.bandwidth,
        "window": fit.estimate.window_id,
        "ridge": fit.gls.ridge,
        "rank": fit.gls.rank,
        "lags": [list(h) for h in fit.lags],
        "n_nodes": len(nodes),
        "max_abs_fit_error": float(np.abs(fitted - observed).max()),
    }
    pick = _overlay_nodes(nodes)
    reporting.plot_curve_overlay(
        out / "curves.svg", grid.nodes, observed[pick], fitted[pick],
        [f"node ({nodes[i][0]}, {nodes[i][1]})" for i in pick],
    )
    reporting.plot_spectral_diagonal(out / "spectral_density.svg", fit.estimate)
    return summary


def fit_bayes(args, field, out):
    series = lattice_to_series(field)
    fit = fit_bayes_gls(series, args.p, seed=args.seed, **_bayes_options(args))
    t1, t2 = field.extent
    cells = np.array([(i, j) for i in range(t1) for j in range(t2)])
    rows = np.arange(args.p + 1, len(series))
    taus = field.grid.nodes
    names = [f"beta_{i + 1}" for i in range(args.p)]
    reporting.write_table(out / "beta.csv", ["node_row", "node_col"] + names, zip(cells[:, 0], cells[:, 1], *fit.beta))
    hyper = fit.hyper
    reporting.write_table(
        out / "lambda.csv",
        ["k", "lambda_hat", "prior_a", "prior_b"],
        (
            (k + 1, lam, hyper.a[k] if hyper else 1.0, hyper.b[k] if hyper else 1.0)
            for k, lam in enumerate(fit.lambda_hat)
        ),
    )

    def panel(values):
        for r, n in enumerate(rows):
            for c, (i, j) in enumerate(cells):
                yield int(i), int(j), taus[n], values[r, c]

    reporting.write_panel(out / "predictor.csv", panel(fit.gls.fitted))
    reporting.write_panel(out / "response.csv", panel(series.values[rows]))
    summary = {
        "pipeline": "bayes-surface",
        "p": args.p,
        "k": fit.k,
        "lambda_hat": fit.lambda_hat,
        "n_rows": len(rows),
        "condition_number": fit.gls.condition_number,
        "poly_degree": fit.poly_degree,
    }
    pick = _overlay_nodes(cells)
    reporting.plot_curve_overlay(
        out / "curves.svg", taus[rows], series.values[rows][:, pick].T, fit.gls.fitted[:, pick].T,
        [f"node ({cells[i][0]}, {cells[i][1]})" for i in pick],
    )
    return summary


def cmd_fit(args):
    out = _out_dir(args)
    field, kind = load_field(args)
    summary = fit_spatial(args, field, out) if args.pipeline == "spatial-spectral" else fit_bayes(args, field, out)
    summary.update(input_kind=kind, seed=args.seed)
    reporting.write_json(out / "summary.json", summary)
    print(f"{args.pipeline} fit written to {out}")
    return EXIT_OK


def cmd_cv(args):
    out = _out_dir(args)
    field, kind = load_field(args)
    if args.pipeline == "spatial-spectral":
        report = spatial_kfold_cv(
            field, folds=args.folds, n_jobs=args.jobs, covariates=_covariates(args, field), **_spatial_options(args)
        )
        reporting.write_spatial_cv(out / "spatial_cv.csv", report)
        reporting.plot_cv_errors(out / "spatial_cv.svg", report.errors, "spatial CV absolute error")
        summary = {"pipeline": args.pipeline, "n_nodes": report.n_nodes, "grand_mean": report.grand_mean}
        line = f"spatial CV over {report.n_nodes} nodes: grand mean {report.grand_mean:.10e}"
    else:
        result = loocv(
            lattice_to_series(field), args.p, edge_trim=args.edge_trim, reuse_correlation=args.reuse_correlation,
            seed=args.seed, n_jobs=args.jobs, **_bayes_options(args),
        )
        reporting.write_loocv(out / "loocv.csv", result)
        reporting.plot_cv_errors(out / "loocv.svg", result.errors, "LOOCV absolute error")
        summary = {"pipeline": args.pipeline, "n_iterations": result.n_iterations, "mean": result.mean}
        line = f"LOOCV over {result.n_iterations} iterations: mean {result.mean:.10e}"
    summary.update(input_kind=kind, seed=args.seed)
    reporting.write_json(out / "summary.json", summary)
    logger.info(line)
    print(line)
    return EXIT_OK


def cmd_report(args):
    src = Path(args.input)
    if not src.is_dir():
        raise DataError(f"{src}: not a directory")
    out = _out_dir(args) if args.out else src
    lines = []
    if (src / "spatial_cv.csv").exists():
        errors, grand = reporting.read_spatial_cv(src / "spatial_cv.csv")
        reporting.plot_cv_errors(out / "spatial_cv.svg", errors, "spatial CV absolute error")
        lines.append(f"spatial CV: {errors.size} nodes, grand mean {grand:.10e}")
    if (src / "loocv.csv").exists():
        _, rows = reporting.read_table(src / "loocv.csv")
        errors = np.array([float(r[1]) for r in rows[:-1]])
        reporting.plot_cv_errors(out / "loocv.svg", errors, "LOOCV absolute error")
        lines.append(f"LOOCV: {errors.size} iterations, mean {float(rows[-1][1]):.10e}")
    if (src / "predictor.csv").exists() and (src / "response.csv").exists():
        pkeys, pred = reporting.read_panel_entries(src / "predictor.csv")
        okeys, obs = reporting.read_panel_entries(src / "response.csv")
        if pkeys.shape != okeys.shape or np.any(pkeys != okeys):
            raise DataError(f"{src}: predictor and response panels cover different entries")
        diff = np.abs(pred - obs)
        lines.append(f"fit: max absolute error {diff.max():.6e}, mean {diff.mean():.6e}")
    if not lines:
        raise DataError(f"{src}: no fit or cv outputs found")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _out_dir(args):
    if not args.out:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv, "report": cmd_report}


def main(argv=None):
    try:
        parser, sub, args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"funcreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command in ("fit", "cv", "report"):
        if not args.input or not Path(args.input).exists():
            sub.choices[args.command].print_usage(sys.stderr)
            print(f"funcreg {args.command}: error: input path {args.input!r} does not exist", file=sys.stderr)
            return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"funcreg: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"funcreg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"funcreg: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FuncRegError as exc:
        print(f"funcreg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
