"""Command line entry point: ``hierprox {fit,predict,simulate,evaluate}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from hierprox import datagen, io, metrics
from hierprox.path import FitPath, PathConfig, PathEntry, fit_path
from hierprox.problem import DesignData

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4

_DEFAULTS = PathConfig()


class UsageError(ValueError):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _snr(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("snr must be positive (use 'inf' for noiseless data)")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hierprox", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more logging")
    sub = ap.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a regularization path to a CSV dataset")
    fit.add_argument("data", help="CSV file with a header row")
    fit.add_argument("--response", default="y", help="response column name or 0-based index (default: y)")
    fit.add_argument("-o", "--output", required=True, help="model file to write")
    fit.add_argument("--diagnostics", help="per-entry diagnostics CSV (default: <output>.diag.csv)")
    fit.add_argument("--lambda-count", "--n-lambda", dest="n_lambda", type=_positive_int,
                     default=_DEFAULTS.n_lambda)
    fit.add_argument("--lambda-min-ratio", type=float, default=_DEFAULTS.lambda_min_ratio)
    fit.add_argument("--lambda2-ratio", type=float, default=_DEFAULTS.lambda2_ratio)
    fit.add_argument("--tol", type=float, default=_DEFAULTS.tol)
    fit.add_argument("--max-support", type=int, default=None)
    fit.add_argument("--step", choices=("backtracking", "exact"), default=_DEFAULTS.step_mode)
    fit.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    fit.add_argument("--seed", type=int, default=0, help="seeds numpy's global generator")
    fit.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    fit.add_argument("--report-time", action="store_true", help="add wall time to the diagnostics CSV")

    pred = sub.add_parser("predict", help="apply one path entry to new data")
    pred.add_argument("model")
    pred.add_argument("data")
    pred.add_argument("--response", default="y",
                      help="column to drop before predicting if present (default: y)")
    pred.add_argument("--entry", type=int, default=-1, help="path entry index (default: last)")
    pred.add_argument("-o", "--output", help="predictions CSV (default: stdout)")

    sim = sub.add_parser("simulate", help="write a synthetic dataset and its truth file")
    sim.add_argument("--setting", default="main", help="main | hier | anti")
    sim.add_argument("--n", type=_positive_int, required=True)
    sim.add_argument("--p", type=_positive_int, required=True)
    sim.add_argument("--k-main", type=int, required=True)
    sim.add_argument("--snr", type=_snr, default=10.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("-o", "--output", required=True, help="dataset CSV")
    sim.add_argument("--truth", required=True, help="truth coefficients (model file format)")

    ev = sub.add_parser("evaluate", help="FDR, prediction error and hierarchy audit against a truth file")
    ev.add_argument("model")
    ev.add_argument("data")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--response", default="y")
    ev.add_argument("--entry", type=int, default=None, help="single entry index (default: every entry)")
    ev.add_argument("-o", "--output", help="report CSV (default: stdout)")
    return ap


def _check_fit_args(args):
    try:
        return PathConfig(n_lambda=args.n_lambda, lambda_min_ratio=args.lambda_min_ratio,
                          lambda2_ratio=args.lambda2_ratio, tol=args.tol, max_support=args.max_support,
                          step_mode=args.step)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _response_arg(text):
    return int(text) if text.lstrip("-").isdigit() else text


def cmd_fit(args):
    config = _check_fit_args(args)
    np.random.seed(args.seed)
    X, y, _ = io.load_arrays(args.data, _response_arg(args.response))
    data = DesignData.prepare(X, y, standardize=args.standardize)
    path = fit_path(data, config, thread_budget=args.threads)
    io.save_model(args.output, path, io.Preprocessing.from_data(data))
    diag = args.diagnostics or f"{args.output}.diag.csv"
    io.write_diagnostics(diag, path, include_time=args.report_time)
    if path.entries:
        last = path.entries[-1]
        logging.getLogger("hierprox").info("%d entries; last support %d main + %d interactions",
                                           len(path.entries), last.n_main, last.n_inter)
    return EXIT_OK


def _select(path: FitPath, k) -> tuple[int, PathEntry]:
    if not path.entries:
        raise UsageError("model has no path entries")
    if not -len(path.entries) <= k < len(path.entries):
        raise UsageError(f"entry {k} out of range for a path of {len(path.entries)} entries")
    return k % len(path.entries), path.entries[k]


def _features(data_path, response, p):
    header, table = io.read_table(data_path)
    y = None
    key = _response_arg(response)
    if isinstance(key, int) or key in header:
        k = io._response_index(header, key)
        y = table[:, k]
        table = np.delete(table, k, axis=1)
    if table.shape[1] != p:
        raise io.ParseError(f"expected {p} feature columns, found {table.shape[1]}")
    return table, y


def _write_rows(dest, header, rows):
    fh = open(dest, "w", newline="") if dest else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if dest:
            fh.close()


def cmd_predict(args):
    path, prep = io.load_model(args.model)
    _, entry = _select(path, args.entry)
    X, y = _features(args.data, args.response, prep.p)
    data = prep.apply(X, y)
    yhat = metrics.predict(entry.coef, data)
    _write_rows(args.output, ["prediction"], [[repr(float(v))] for v in yhat])
    if y is not None:
        print(f"mse={metrics.prediction_error(entry.coef, data)!r}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args):
    try:
        spec = datagen.TruthSpec(args.setting, args.n, args.p, args.k_main, seed=args.seed, snr=args.snr)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data, truth = datagen.generate(spec)
    io.save_csv(args.output, data.X, data.y)
    io.save_model(args.truth, FitPath([PathEntry(0.0, 0.0, truth, math.nan)]), io.Preprocessing(spec.p))
    return EXIT_OK


def cmd_evaluate(args):
    path, prep = io.load_model(args.model)
    tpath, tprep = io.load_model(args.truth)
    if not tpath.entries:
        raise UsageError("truth file has no entry")
    if tprep.p != prep.p:
        raise UsageError(f"truth has p={tprep.p} but model has p={prep.p}")
    truth = tpath.entries[0].coef
    X, y = _features(args.data, args.response, prep.p)
    if y is None:
        raise UsageError(f"response column {args.response!r} not found in {args.data}")
    data = prep.apply(X, y)
    picks = range(len(path.entries)) if args.entry is None else [_select(path, args.entry)[0]]
    rows = []
    for k in picks:
        e = path.entries[k]
        mse = metrics.prediction_error(e.coef, data)
        rows.append([k, repr(e.lambda1), e.n_main, e.n_inter, repr(metrics.fdr(e.coef, truth)),
                     repr(metrics.interaction_fdr_share(e.coef, truth)), repr(mse), repr(math.sqrt(mse)),
                     len(metrics.audit_strong_hierarchy(e.coef))])
    _write_rows(args.output, ["index", "lambda1", "n_main", "n_inter", "fdr", "interaction_fdr", "mse",
                              "rmse", "sh_violations"], rows)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "simulate": cmd_simulate, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (io.ParseError, io.ModelFormatError, UsageError, FileNotFoundError) as exc:
        print(f"hierprox: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"hierprox: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MemoryError, OSError) as exc:
        print(f"hierprox: resource failure: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
