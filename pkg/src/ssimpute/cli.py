"""Command-line entry point: ``ssimpute {impute,tune,fit,simulate,bench}``.

Exit codes: 0 success, 1 usage, 2 bad data or I/O, 3 numerical failure. On
failure one JSON object describing the error is written to stderr.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bench import METHODS, run_bench
from .data import ImputationResult, MissingDataset, validate
from .exceptions import DataError, IoError, NumericError
from .impute import impute_all, impute_sssi
from .io import (CsvSpec, format_schema, load_csv, save_result, to_jsonable,
                 write_csv)
from .kernel import ScaleParams
from .regression import add_intercept, fit_ols
from .simulation import MECHANISMS, SimScenario, draw
from .tuning import TauGrid, tune_cv, tune_interchangeable

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COEF_VERSION = "ssimpute coefficients v1"
TRUTH_VERSION = "ssimpute truth v1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _grid(text):
    try:
        return TauGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_input(p):
    p.add_argument("input", help="CSV file with a header row")
    p.add_argument("--schema", required=True, help="schema file (name,kind[,classes])")
    p.add_argument("--response", default="y", help="response column name")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--na", action="append", metavar="TOKEN",
                   help="missing-value marker (repeatable; default NA and empty)")


def _add_scale(p, tuning_default="interchangeable"):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, help="fixed normalized scale")
    g.add_argument("--lambda1", type=float, help="fixed response scale")
    g.add_argument("--tune", choices=("interchangeable", "cv"),
                   default=tuning_default, help="grid criterion when no scale is fixed")
    p.add_argument("--lambda2", type=float, help="fixed covariate scale")
    p.add_argument("--grid", type=_grid, default=TauGrid(), metavar="LO:HI:STEPS")
    p.add_argument("--swap-keep-column", action="store_true",
                   help="keep column j in the swap-step distances")
    p.add_argument("--intercept", action="store_true",
                   help="include an intercept in the OLS fit")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--sort-by-pattern", action="store_true",
                   help="compute d0 with subjects ordered by pattern")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssimpute", description="Semi-supervised imputation of "
                     "partially observed covariates.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("impute", help="impute missing covariates")
    _add_input(p)
    _add_scale(p)
    _add_common(p)
    p.add_argument("--sssi-sweeps", type=int, default=0, metavar="M")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("tune", help="report the tuning curve")
    _add_input(p)
    p.add_argument("--criterion", choices=("interchangeable", "cv"),
                   default="interchangeable")
    p.add_argument("--grid", type=_grid, default=TauGrid(), metavar="LO:HI:STEPS")
    p.add_argument("--swap-keep-column", action="store_true")
    p.add_argument("--intercept", action="store_true")
    _add_common(p)
    p.add_argument("-o", "--output", help="TSV path (default stdout)")

    p = sub.add_parser("fit", help="impute, then fit OLS")
    _add_input(p)
    _add_scale(p)
    _add_common(p)
    p.add_argument("--sssi-sweeps", type=int, default=0, metavar="M")
    p.add_argument("-o", "--output", help="TSV path (default stdout)")

    p = sub.add_parser("simulate", help="draw one simulated dataset")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--cov-structure", choices=("exchangeable", "ar1"),
                   default="exchangeable")
    p.add_argument("--covariate-law", choices=("normal", "exponential"),
                   default="normal")
    p.add_argument("--r2", type=float, default=0.6)
    p.add_argument("--mechanism", choices=MECHANISMS, default="MCAR")
    p.add_argument("--pattern-family", choices=("blockwise7", "none"),
                   default="blockwise7")
    p.add_argument("--missing-rate", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("-o", "--output", required=True,
                   help="CSV path; PATH.truth.json and PATH.schema are written too")

    p = sub.add_parser("bench", help="run a scenario matrix")
    p.add_argument("scenarios", help="JSON list of scenarios, or {base, grid}")
    p.add_argument("--methods", default="SSI1,SSI2,mean,knn",
                   help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--grid", type=_grid, default=TauGrid(), metavar="LO:HI:STEPS")
    p.add_argument("--sssi-sweeps", type=int, default=10, metavar="M")
    p.add_argument("--k", type=int, default=5, help="KNN neighbours")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for scenarios that do not set one")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("-o", "--output", required=True, help="BenchTable TSV path")
    p.add_argument("--hide-test-response", action="store_true",
                   help="impute test rows without their responses")
    p.add_argument("--plot-data", help="long-format CSV path")
    p.add_argument("--jsonl", help="BenchTable JSON-lines path")
    return parser


def _check_readable(*paths):
    for path in paths:
        if path is not None and not os.path.isfile(path):
            raise IoError(f"cannot read {path}: no such file")


def _check_writable(*paths):
    for path in paths:
        if path is None:
            continue
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
            raise IoError(f"cannot write {path}: directory missing or read-only")


def _load(args) -> MissingDataset:
    markers = frozenset(args.na) if args.na else frozenset({"NA", ""})
    return load_csv(CsvSpec(args.input, args.delimiter, markers,
                            schema_path=args.schema, response=args.response))


def _pattern_order(dataset):
    keys = [dataset.mask[:, j] for j in reversed(range(dataset.p))]
    return np.lexsort(keys)


def _resolve(args, dataset):
    if args.lambda1 is not None or args.lambda2 is not None:
        l1 = args.lambda1 if args.lambda1 is not None else args.lambda2
        l2 = args.lambda2 if args.lambda2 is not None else l1
        return ScaleParams(l1, l2), None
    index = validate(dataset)
    if args.tau is not None:
        return ScaleParams.from_tau(args.tau, dataset.n, index.d0), None
    report = _tune(dataset, args.tune, args)
    return report.params(), report


def _tune(dataset, criterion, args):
    if criterion == "cv":
        return tune_cv(dataset, args.grid, intercept=args.intercept,
                       n_jobs=args.threads)
    return tune_interchangeable(dataset, args.grid,
                                swap_keep_column=args.swap_keep_column,
                                n_jobs=args.threads)


def _impute(args, dataset):
    order = _pattern_order(dataset) if args.sort_by_pattern else None
    work = dataset.subset(order) if order is not None else dataset
    params, report = _resolve(args, work)
    if args.sssi_sweeps:
        result = impute_sssi(work, params, args.sssi_sweeps, n_jobs=args.threads)
    else:
        result = impute_all(work, params, n_jobs=args.threads)
    if order is not None:
        inverse = np.argsort(order)
        result = ImputationResult(
            result.x_hat[inverse], result.imputed_mask[inverse],
            result.diagnostics, result.params_used, {}, result.info)
    return result, report


def cmd_impute(args):
    _check_readable(args.input, args.schema)
    _check_writable(args.output)
    dataset = _load(args)
    result, report = _impute(args, dataset)
    save_result(result, args.output, dataset, args.response)
    if report is not None:
        _write_text(args.output + ".tune.tsv", report.to_tsv())
    return EXIT_OK


def cmd_tune(args):
    _check_readable(args.input, args.schema)
    _check_writable(args.output)
    dataset = _load(args)
    if args.sort_by_pattern:
        dataset = dataset.subset(_pattern_order(dataset))
    report = _tune(dataset, args.criterion, args)
    _emit(args.output, report.to_tsv())
    return EXIT_OK


def cmd_fit(args):
    _check_readable(args.input, args.schema)
    _check_writable(args.output)
    dataset = _load(args)
    if dataset.y_mask is not None:
        raise DataError("fit needs a fully observed response")
    result, _ = _impute(args, dataset)
    design = dataset.to_numeric(result.x_hat)
    names = [c.name for c in dataset.schema]
    if args.intercept:
        design = add_intercept(design)
        names = ["(intercept)"] + names
    fit = fit_ols(design, dataset.y)
    lines = [f"# {COEF_VERSION}", f"# sigma2_hat={fit.sigma2_hat!r}", "term\tcoef"]
    lines += [f"{nm}\t{float(b)!r}" for nm, b in zip(names, fit.beta_hat)]
    _emit(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(args):
    _check_writable(args.output)
    scenario = SimScenario(
        n=args.n, p=args.p, rho=args.rho, cov_structure=args.cov_structure,
        covariate_law=args.covariate_law, r2=args.r2, mechanism=args.mechanism,
        pattern_family=args.pattern_family, target_missing_rate=args.missing_rate,
        seed=args.seed)
    d = draw(scenario, args.replication)
    ds = d.dataset
    write_csv(args.output, ds, ds.x, comment=f"ssimpute simulated v1 seed={args.seed} "
              f"replication={args.replication}", observed=ds.mask)
    truth = {
        "format": TRUTH_VERSION,
        "scenario": scenario.to_dict(),
        "replication": args.replication,
        "beta": d.beta_true,
        "sigma2": d.sigma2,
        "alpha": d.alpha,
        "missing_rate": d.missing_rate,
        "train_idx": d.train_idx,
        "test_idx": d.test_idx,
        "x_true": d.x_true,
        "epsilons": d.epsilons,
    }
    _write_text(args.output + ".truth.json", json.dumps(to_jsonable(truth)) + "\n")
    _write_text(args.output + ".schema", format_schema(ds.schema))
    return EXIT_OK


def expand_scenarios(spec, default_seed: Optional[int] = None) -> list:
    """Scenarios from a JSON list, or from ``{"base": {...}, "grid": {...}}``
    taking the Cartesian product of the grid values over the base."""
    if isinstance(spec, dict):
        base = dict(spec.get("base", {}))
        grid = spec.get("grid", {})
        keys = list(grid)
        items = [dict(base, **dict(zip(keys, combo)))
                 for combo in itertools.product(*(grid[k] for k in keys))]
    elif isinstance(spec, list):
        items = spec
    else:
        raise DataError("scenario file must hold a list or a {base, grid} object")
    out = []
    for item in items:
        if not isinstance(item, dict):
            raise DataError(f"scenario entry must be an object, got {item!r}")
        item = dict(item)
        if default_seed is not None:
            item.setdefault("seed", default_seed)
        try:
            out.append(SimScenario(**item))
        except TypeError as exc:
            raise DataError(f"bad scenario {item}: {exc}") from None
    if not out:
        raise DataError("scenario file lists no scenarios")
    return out


def cmd_bench(args):
    _check_readable(args.scenarios)
    _check_writable(args.output, args.plot_data, args.jsonl)
    try:
        with open(args.scenarios) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.scenarios}: invalid JSON ({exc})") from None
    scenarios = expand_scenarios(spec, args.seed)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m.partition(":")[0] not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    table = run_bench(scenarios, methods, args.reps, grid=args.grid,
                      sweeps=args.sssi_sweeps, k=args.k, n_jobs=args.threads,
                      hide_test_response=args.hide_test_response)
    _write_text(args.output, table.to_tsv())
    if args.plot_data:
        _write_text(args.plot_data, table.plot_data_csv())
    if args.jsonl:
        _write_text(args.jsonl, table.to_jsonl())
    return EXIT_OK


def _write_text(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc


def _emit(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        _write_text(path, text)


COMMANDS = {"impute": cmd_impute, "tune": cmd_tune, "fit": cmd_fit,
            "simulate": cmd_simulate, "bench": cmd_bench}


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except DataError as exc:
        return _fail(EXIT_DATA, exc)
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _fail(EXIT_USAGE, exc)
    except OSError as exc:
        return _fail(EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())
