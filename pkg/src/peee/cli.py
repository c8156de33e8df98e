"""Command-line interface: ``peee fit | simulate | bench``.

Machine-readable reports are JSON documents written with sorted keys. Wall
clock measurements go to a ``<output>.timing.json`` sidecar so the main
document is byte-identical across runs with the same configuration.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import bootstrap_variance
from .core import IncompleteSpec, peee_fit, variance
from .exceptions import ConfigurationError, DataError, NumericalError, PeeeError
from .formula import Categorical, parse_formula
from .rng import stream
from .simstudy import StudyConfig, run_bench, run_study
from .tabular import Schema, load_csv, missingness_summary

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _environment():
    return {"package": __version__, "python": platform.python_version(),
            "numpy": np.__version__}


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _sidecar(path):
    return None if path is None else Path(str(path) + ".timing.json")


def build_parser():
    parser = _Parser(prog="peee", description="Regression with one incomplete covariate.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit an analysis model to a delimited data file")
    fit.add_argument("--data", required=True, help="input file (header row required)")
    fit.add_argument("--formula", required=True, help='analysis model, e.g. "y ~ x + cat(z)"')
    fit.add_argument("--incomplete-formula", required=True,
                     help='model for the incomplete column, e.g. "z ~ x + y + a"')
    fit.add_argument("--family", choices=("logistic", "linear"), default="logistic")
    fit.add_argument("--kind", choices=("multinomial", "linear-mean", "linear-mean+variance"),
                     default="multinomial")
    fit.add_argument("--regime", choices=("discrete", "linear-moment", "monte-carlo"),
                     default="discrete")
    fit.add_argument("--S", type=int, default=None, help="draws per incomplete subject")
    fit.add_argument("--variance", choices=("closed-form", "bootstrap"), default="closed-form")
    fit.add_argument("--B", type=int, default=100, help="bootstrap replicates")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--id", default=None, help="subject id column (default: row number)")
    fit.add_argument("--auxiliary", type=_csv_list, default=[])
    fit.add_argument("--categorical", type=_csv_list, default=[])
    fit.add_argument("--delimiter", default=",")
    fit.add_argument("--na", action="append", default=None,
                     help="token read as missing (repeatable; default: empty and NA)")
    fit.add_argument("--threads", type=int, default=1)
    fit.add_argument("--output", default=None, help="JSON report path (default: stdout)")

    sim = sub.add_parser("simulate", help="run a Monte Carlo simulation study")
    sim.add_argument("--config", default=None, help="INI file with a [study] section")
    sim.add_argument("--design", choices=("sim1", "sim2"), default=None)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--eta", type=float, default=None)
    sim.add_argument("--scenario", default=None)
    sim.add_argument("--methods", type=_csv_list, default=None)
    sim.add_argument("--replications", type=int, default=None)
    sim.add_argument("--full-scale", action="store_true", help="1000 replications")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--bootstrap-B", type=int, default=None)
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--output", default=None, help="JSON report path (default: stdout)")
    sim.add_argument("--table", default=None, help="text table path")

    bench = sub.add_parser("bench", help="time closed-form variance against the bootstrap")
    bench.add_argument("--grid", type=lambda s: [int(v) for v in _csv_list(s)],
                       default=[1000, 5000, 10000])
    bench.add_argument("--eta", type=float, default=-1.1)
    bench.add_argument("--trials", type=int, default=3)
    bench.add_argument("--B", type=int, default=100)
    bench.add_argument("--seed", type=int, default=1)
    bench.add_argument("--threads", type=int, default=1)
    bench.add_argument("--output", default=None, help="JSON report path (default: stdout)")
    bench.add_argument("--table", default=None, help="text table path")
    return parser


# --------------------------------------------------------------------------- fit

def _schema(args, formula, inc_formula):
    analysis_vars = [formula.response, *formula.variables]
    categorical = {t.name for t in formula.terms if isinstance(t, Categorical)}
    categorical |= {t.name for t in inc_formula.terms if isinstance(t, Categorical)}
    categorical |= set(args.categorical)
    if args.kind == "multinomial":
        categorical.add(inc_formula.response)
    auxiliary = [v for v in inc_formula.variables if v not in analysis_vars]
    auxiliary += [a for a in args.auxiliary if a not in auxiliary]
    return Schema(
        id=args.id,
        response=formula.response,
        covariates=tuple(v for v in formula.variables),
        auxiliary=tuple(auxiliary),
        categorical=tuple(sorted(categorical)),
        incomplete=inc_formula.response,
    )


def _formula_arg(text, flag):
    try:
        return parse_formula(text)
    except DataError as exc:
        raise ConfigurationError(f"{flag}: {exc}") from exc


def cmd_fit(args):
    formula = _formula_arg(args.formula, "--formula")
    inc_formula = _formula_arg(args.incomplete_formula, "--incomplete-formula")
    if args.regime == "monte-carlo" and args.seed is None:
        raise ConfigurationError("--seed is required for the monte-carlo regime")
    if args.variance == "bootstrap" and args.seed is None:
        raise ConfigurationError("--seed is required for bootstrap variance")
    na = tuple(args.na) if args.na is not None else ("", "NA")
    table = load_csv(args.data, _schema(args, formula, inc_formula),
                     delimiter=args.delimiter, na_values=na)
    summary = missingness_summary(table)
    spec = IncompleteSpec(args.incomplete_formula, args.kind, args.regime, S=args.S)

    t0 = time.perf_counter()
    fit = peee_fit(table, formula, args.family, spec,
                   rng=stream(args.seed, "fit") if args.seed is not None else None)
    t_fit = time.perf_counter() - t0
    t0 = time.perf_counter()
    if args.variance == "closed-form":
        cov = variance(fit)
        boot = None
    else:
        def estimator(tbl, rng):
            return peee_fit(tbl, formula, args.family, spec, rng=rng).theta_hat
        boot = bootstrap_variance(table, estimator, args.B, stream(args.seed, "bootstrap"),
                                  threads=args.threads, pass_rng=True)
        cov = np.cov(boot.replicate_estimates, rowvar=False)
    t_var = time.perf_counter() - t0

    from scipy import stats
    se = np.sqrt(np.diag(cov))
    theta = fit.theta_hat
    rows = []
    for j, name in enumerate(fit.column_names):
        lo, hi = theta[j] - 1.959963984540054 * se[j], theta[j] + 1.959963984540054 * se[j]
        row = {"term": name, "estimate": float(theta[j]), "se": float(se[j]),
               "ci_lower": float(lo), "ci_upper": float(hi),
               "p_value": float(2 * stats.norm.sf(abs(theta[j] / se[j])))}
        if args.family == "logistic":
            row.update(odds_ratio=float(np.exp(theta[j])), or_ci_lower=float(np.exp(lo)),
                       or_ci_upper=float(np.exp(hi)))
        rows.append(row)

    g = fit.gamma_fit
    gse = np.sqrt(np.clip(np.diag(g.vcov), 0, None))
    augmentation = ("none (complete data)" if summary.m == 0 else
                    f"{fit.regime}: {fit.augmented.n_rows} pseudo-records for "
                    f"{summary.n} subjects")
    doc = {
        "command": "fit",
        "config": {k: v for k, v in vars(args).items() if k != "output"},
        "missingness": {"n": summary.n, "m": summary.m, "rate": summary.rate},
        "augmentation": augmentation,
        "analysis_model": str(formula),
        "family": args.family,
        "variance": args.variance,
        "coefficients": rows,
        "covariance": cov.tolist(),
        "incomplete_model": {
            "formula": str(g.formula), "kind": g.kind,
            "coefficients": [float(v) for v in g.coefficients],
            "se": [float(v) for v in gse],
            "design_columns": list(g.design.column_names),
        },
        "bootstrap_failures": None if boot is None else boot.failures,
        "environment": _environment(),
    }
    _write_json(args.output, doc)
    timing = {"fit_seconds": t_fit, "variance_seconds": t_var}
    side = _sidecar(args.output)
    if side is not None:
        _write_json(side, timing)
    print(_fit_text(rows, summary, augmentation, args.family), file=sys.stderr)
    return EXIT_OK


def _fit_text(rows, summary, augmentation, family):
    lines = [f"n = {summary.n}, incomplete = {summary.m} ({100 * summary.rate:.1f}%)",
             f"augmentation: {augmentation}"]
    if family == "logistic":
        lines.append(f"{'term':<22}{'OR':>9}{'95% CI':>22}{'p-value':>10}")
        for r in rows:
            ci = f"({r['or_ci_lower']:.3f}, {r['or_ci_upper']:.3f})"
            lines.append(f"{r['term']:<22}{r['odds_ratio']:>9.3f}{ci:>22}{r['p_value']:>10.4f}")
    else:
        lines.append(f"{'term':<22}{'estimate':>10}{'SE':>9}{'p-value':>10}")
        for r in rows:
            lines.append(f"{r['term']:<22}{r['estimate']:>10.4f}{r['se']:>9.4f}{r['p_value']:>10.4f}")
    return "\n".join(lines)


# --------------------------------------------------------------------------- simulate

_STUDY_KEYS = {"design": str, "n": int, "eta": float, "scenario": str, "methods": _csv_list,
               "replications": int, "seed": int, "bootstrap_B": int, "threads": int}


def _study_config(args):
    values = {}
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config, encoding="utf-8"):
            raise FileNotFoundError(args.config)
        if "study" not in cp:
            raise ConfigurationError(f"{args.config}: missing [study] section")
        for key, raw in cp["study"].items():
            if key not in _STUDY_KEYS:
                raise ConfigurationError(f"{args.config}: unknown key {key!r}")
            values[key] = _STUDY_KEYS[key](raw)
    for key in _STUDY_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if args.full_scale:
        values["replications"] = 1000
    if "methods" in values:
        values["methods"] = tuple(values["methods"])
    elif values.get("design", "sim1") == "sim2":
        values["methods"] = ("CC", "MIB", "PEEE", "MIB-flex", "PEEE-flex")
    else:
        values["methods"] = ("PEEE",)
    return StudyConfig(**values)


def cmd_simulate(args):
    config = _study_config(args)
    report = run_study(config)
    doc = {"command": "simulate", "environment": _environment(), **report.to_dict()}
    _write_json(args.output, doc)
    side = _sidecar(args.output)
    if side is not None:
        _write_json(side, report.timing_dict())
    text = report.format_table() + "\n\n" + report.format_timing() + "\n"
    if args.table:
        Path(args.table).write_text(text, encoding="utf-8")
    print(text, file=sys.stderr)
    return EXIT_OK


def cmd_bench(args):
    report = run_bench(grid=tuple(args.grid), eta=args.eta, trials=args.trials, B=args.B,
                       seed=args.seed, threads=args.threads)
    doc = {"command": "bench", "environment": _environment(), **report.to_dict()}
    _write_json(args.output, doc)
    side = _sidecar(args.output)
    if side is not None:
        _write_json(side, report.timing_dict())
    text = report.format_table() + "\n"
    if args.table:
        Path(args.table).write_text(text, encoding="utf-8")
    print(text, file=sys.stderr)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"peee: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"peee: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, PeeeError, np.linalg.LinAlgError) as exc:
        print(f"peee: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
