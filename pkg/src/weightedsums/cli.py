"""Command-line interface: ``weightedsums <subcommand> [flags]``.

Exit codes: 0 on success, 1 when ``validate`` finds a failing check, 2 on usage
or configuration errors.
"""
import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .charfn import cf_profile, default_t_grid, lemma61_T0
from .exceptions import WeightedSumsError
from .experiments import (ExperimentConfig, RateTable, all_models, avg_kolmogorov,
                          fit_exponent, invariant_suite, rate_sweep)
from .functionals import check_bounds, estimate_functionals
from .svg import emit_svg
from .zoo import FAMILIES, DistributionModel, enumerate_support, exact_metadata, sample_batch

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
DEFAULT_M = 10000


class UsageError(Exception):
    pass


# --- flag value parsers -----------------------------------------------------------

def parse_params(text):
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"parameter {key!r} is not a number: {val!r}")
    return out


def parse_int_list(text):
    try:
        vals = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return vals


def parse_t_grid(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:count, got {text!r}")
    if not 0 < lo < hi or count < 2:
        raise argparse.ArgumentTypeError("t grid needs 0 < lo < hi and count >= 2")
    return lo, hi, count


def parse_seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError("expected a nonnegative integer")
    return v


# --- parser ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add(p, suppress, *names, **kw):
    if suppress:
        kw["default"] = argparse.SUPPRESS
    p.add_argument(*names, **kw)


def _model_flags(p, suppress):
    _add(p, suppress, "--model", choices=FAMILIES, default="rademacher",
         help="distribution family")
    _add(p, suppress, "--params", type=parse_params, default={}, metavar="K=V,...",
         help="family parameters (scale_mixture: r1,r2,w)")


def _experiment_flags(p, suppress, n_default, n_help):
    _model_flags(p, suppress)
    _add(p, suppress, "--n", type=parse_int_list, default=n_default, metavar="N[,N...]",
         help=n_help)
    _add(p, suppress, "--m", type=nonneg_int, default=DEFAULT_M,
         help="batch size for the empirical path (ignored in exact mode)")
    _add(p, suppress, "--dirs", type=positive_int, default=300, help="number of directions")
    _add(p, suppress, "--seed", type=parse_seed, default=None,
         help="random seed (required unless --config supplies one)")
    _add(p, suppress, "--mode", choices=("auto", "exact", "empirical"), default="auto",
         help="exact enumeration or empirical batch; auto picks exact for finite laws")
    _add(p, suppress, "--config", default=None, metavar="FILE",
         help="JSON experiment config; explicit flags take precedence")


def _output_flags(p, suppress, formats=("csv", "json")):
    _add(p, suppress, "--out", default=None, metavar="PATH", help="output file (stdout if omitted)")
    _add(p, suppress, "--format", choices=formats + ("auto",), default="auto",
         help="output format; auto follows the --out extension")


def build_parser(suppress=False):
    """Argument parser; ``suppress=True`` drops defaults to detect explicit flags."""
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="weightedsums", formatter_class=fmt,
                     description="Distances of weighted sums <X, theta> to the normal law.")
    if not suppress:
        parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("functionals", formatter_class=fmt,
                       help="estimate Lambda, sigma_4^2, M_2, M_4, V and check the inequalities")
    _experiment_flags(p, suppress, [8], "dimension")
    _add(p, suppress, "--threads", type=positive_int, default=1, help="worker threads")
    _output_flags(p, suppress, ("json",))

    p = sub.add_parser("clt-avg", formatter_class=fmt,
                       help="per-direction Kolmogorov distances to Phi and to F")
    _experiment_flags(p, suppress, [10], "dimension")
    _add(p, suppress, "--target", choices=("phi", "avg_F", "both"), default="both",
         help="reference laws")
    _add(p, suppress, "--threads", type=positive_int, default=1, help="worker threads")
    _output_flags(p, suppress)

    p = sub.add_parser("rate-sweep", formatter_class=fmt,
                       help="mean distances and functionals across a grid of dimensions")
    _experiment_flags(p, suppress, [6, 8, 10, 12, 14, 16], "ascending dimension grid")
    _add(p, suppress, "--t-grid", type=parse_t_grid, default=None, metavar="LO:HI:COUNT",
         help="geometric t grid for the cf profile; unset means 0.05 to n^(1/6), "
              "then on to 5 sqrt(log n)")
    _add(p, suppress, "--fit", choices=("power", "power_times_log"), default=None,
         help="fit an exponent and embed it in JSON output")
    _add(p, suppress, "--plot", default=None, metavar="SVG", help="write a log-log plot")
    _add(p, suppress, "--threads", type=positive_int, default=1, help="worker threads")
    _output_flags(p, suppress)

    p = sub.add_parser("cf-profile", formatter_class=fmt,
                       help="direction spread of the weighted-sum characteristic function")
    _experiment_flags(p, suppress, [16], "dimension")
    _add(p, suppress, "--t-grid", type=parse_t_grid, default=None, metavar="LO:HI:COUNT",
         help="geometric t grid; unset means 0.05 to n^(1/6), then on to 5 sqrt(log n)")
    _add(p, suppress, "--cf-mode", choices=("shared", "independent", "exact"),
         default="shared",
         help="one shared batch, one batch per direction, or the closed-form cf")
    _add(p, suppress, "--threads", type=positive_int, default=1, help="worker threads")
    _output_flags(p, suppress, ("csv",))

    p = sub.add_parser("validate", formatter_class=fmt,
                       help="run every invariant check; exit 1 if any fails")
    _add(p, suppress, "--models", default="all", metavar="all|NAME[,NAME...]",
         help="models to check")
    _add(p, suppress, "--n", type=parse_int_list, default=[4, 8, 16], metavar="N[,N...]",
         help="dimensions")
    _add(p, suppress, "--m", type=positive_int, default=20000,
         help="batch size for models checked by sampling")
    _add(p, suppress, "--seed", type=parse_seed, default=None, help="random seed (required)")
    _add(p, suppress, "--out", default=None, metavar="PATH", help="JSON report path")

    p = sub.add_parser("report", formatter_class=fmt,
                       help="fit an exponent to a saved rate table and optionally plot it")
    _add(p, suppress, "--in", dest="inp", required=True, metavar="PATH",
         help="rate table (.csv or .json)")
    _add(p, suppress, "--fit", choices=("power", "power_times_log"), default="power",
         help="fit form")
    _add(p, suppress, "--column", choices=("mean_rho_phi", "mean_rho_F"),
         default="mean_rho_phi", help="column to fit")
    _add(p, suppress, "--plot", default=None, metavar="SVG", help="write a log-log plot")
    return parser


# --- helpers ----------------------------------------------------------------------

def _resolve_format(args, default="csv"):
    fmt = getattr(args, "format", "auto")
    if fmt != "auto":
        return fmt
    out = getattr(args, "out", None)
    if out:
        ext = os.path.splitext(out)[1].lower().lstrip(".")
        if ext in ("csv", "json"):
            return ext
    return default


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _load_config_dict(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"threads"}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise UsageError(f"{path}: unknown key(s): {', '.join(unknown)}")
    return obj


def _merge_config(args, explicit):
    """Config-file values overlaid by explicitly given flags."""
    base = _load_config_dict(args.config) if args.config else {}
    model_obj = base.get("model", {"family": "rademacher", "params": {}})
    if not isinstance(model_obj, dict):
        raise UsageError(f"{args.config}: key 'model' must be an object")
    family = args.model if "model" in explicit else model_obj.get("family", args.model)
    params = args.params if "params" in explicit else model_obj.get("params", {})
    if "params" in explicit and "model" not in explicit and "family" in model_obj:
        family = model_obj["family"]
    model = DistributionModel(family, params)

    def pick(flag, key, default):
        if flag in explicit:
            return getattr(args, flag)
        return base.get(key, default)

    n_grid = pick("n", "n_grid", args.n)
    seed = pick("seed", "seed", None)
    if seed is None:
        raise UsageError("--seed is required (or a config file with a seed)")
    mode = pick("mode", "mode", "auto")
    if mode == "auto":
        mode = "exact" if model.finite_support else "empirical"
    m = pick("m", "m", DEFAULT_M)
    if mode == "exact":
        if "m" in explicit and m != 0:
            raise UsageError("--m conflicts with --mode exact (the exact path uses no batch)")
        m = 0
    t_lo, t_hi, t_count = base.get("t_lo"), base.get("t_hi"), base.get("t_count")
    if "t_grid" in explicit:
        t_lo, t_hi, t_count = args.t_grid
    return ExperimentConfig(
        model=model, n_grid=tuple(n_grid) if isinstance(n_grid, list) else n_grid, seed=seed,
        n_theta=pick("dirs", "n_theta", args.dirs), m=m, mode=mode,
        target=pick("target", "target", getattr(args, "target", "both")),
        t_lo=t_lo, t_hi=t_hi, t_count=t_count,
        antithetic=base.get("antithetic", True),
        cf_source=base.get("cf_source", "closed_form"),
        output=pick("out", "output", getattr(args, "out", None)),
        threads=getattr(args, "threads", 1))


def _single_n(config, flag="--n"):
    if len(config.n_grid) != 1:
        raise UsageError(f"{flag} takes a single dimension for this subcommand")
    return config.n_grid[0]


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# --- subcommands ---------------------------------------------------------------------

def cmd_functionals(args, explicit):
    config = _merge_config(args, explicit)
    n = _single_n(config)
    if config.mode == "exact":
        law = enumerate_support(config.model, n)
        est = estimate_functionals(law.points, seed=config.seed, sample_weight=law.probs)
    else:
        est = estimate_functionals(sample_batch(config.model, n, config.m, config.seed),
                                   seed=config.seed)
    report = check_bounds(est, exact_metadata(config.model, n), n, model=config.model)
    doc = {"version": __version__, "config": config.to_dict(), "estimates": est.to_dict(),
           "checks": [c.to_dict() for c in report.checks]}
    _write(_dump(doc), config.output)
    if config.output is not None:
        print(f"lambda_hat={est.lambda_hat:.6g} stderr={est.lambda_stderr:.3g} "
              f"sigma4sq_hat={est.sigma4sq_hat:.6g} m4=[{est.m4_lower:.6g}, {est.m4_upper:.6g}]")
    return EXIT_OK


def cmd_clt_avg(args, explicit):
    config = _merge_config(args, explicit)
    n = _single_n(config)
    summary = avg_kolmogorov(config, n)
    if _resolve_format(args, "json") == "json":
        text = _dump({"version": __version__, "config": config.to_dict(),
                      "result": summary.to_dict()})
    else:
        lines = ["direction,rho_phi,rho_F"]
        rho_F = summary.rho_F if summary.rho_F is not None else [float("nan")] * len(
            summary.rho_phi)
        for i, (a, b) in enumerate(zip(summary.rho_phi, rho_F)):
            lines.append(f"{i},{float(a)!r},{float(b)!r}")
        text = "\n".join(lines) + "\n"
    _write(text, config.output)
    if config.output is not None:
        print(f"n={n} mean_rho_phi={summary.mean_phi:.6g} (stderr {summary.stderr_phi:.3g}) "
              f"mean_rho_F={summary.mean_F:.6g} (stderr {summary.stderr_F:.3g})")
    return EXIT_OK


def cmd_rate_sweep(args, explicit):
    config = _merge_config(args, explicit)
    table = rate_sweep(config)
    if args.fit:
        table.fit = fit_exponent(table, args.fit)
    if _resolve_format(args, "csv") == "json":
        text = table.to_json()
    else:
        text = table.to_csv()
    _write(text, config.output)
    if args.plot:
        emit_svg(table, args.plot, fit=table.fit)
    if table.fit is not None:
        print(f"alpha={table.fit.alpha:.6g} C={table.fit.C:.6g} "
              f"r_squared={table.fit.r_squared:.6g} form={table.fit.form}",
              file=sys.stdout if config.output else sys.stderr)
    return EXIT_OK


def cmd_cf_profile(args, explicit):
    config = _merge_config(args, explicit)
    n = _single_n(config)
    if config.t_lo is None:
        grid = default_t_grid(n, lemma61_T0(n))
    else:
        grid = np.geomspace(config.t_lo, config.t_hi, config.t_count)
    cf_mode = args.cf_mode
    m = config.m
    if config.mode == "exact" or cf_mode == "exact":
        m, cf_mode = 0, "exact"
    prof = cf_profile(config.model, n, grid, config.n_theta, m, config.seed,
                      antithetic=config.antithetic, mode=cf_mode, threads=config.threads)
    _write(prof.to_csv(), config.output)
    return EXIT_OK


def cmd_validate(args, explicit):
    if "seed" not in explicit:
        raise UsageError("--seed is required")
    if args.models == "all":
        models = all_models()
    else:
        names = [s.strip() for s in args.models.split(",") if s.strip()]
        bad = [s for s in names if s not in FAMILIES]
        if bad:
            raise UsageError(f"unknown model(s): {', '.join(bad)}")
        models = [DistributionModel(s) for s in names]
    report = invariant_suite(models, args.n, args.seed, m=args.m)
    for e in report.entries:
        print(e.line())
    fails = report.failures()
    print(f"{len(report.entries) - len(fails)}/{len(report.entries)} checks passed")
    for e in fails:
        which = e.model if e.model in FAMILIES else "all"
        print(f"reproduce: weightedsums validate --models {which} --n {e.n} --seed {e.seed}")
    if args.out:
        _write(_dump(report.to_dict()), args.out)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_report(args, explicit):
    path = args.inp
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    if path.lower().endswith(".json"):
        with open(path) as fh:
            table = RateTable.from_json(fh.read())
    else:
        table = RateTable.from_csv(path)
    fit = fit_exponent(table, args.fit, column=args.column)
    print(f"alpha={fit.alpha:.6g} C={fit.C:.6g} r_squared={fit.r_squared:.6g} "
          f"form={fit.form}" + (f" excluded_n={list(fit.excluded_n)}" if fit.excluded_n else ""))
    if args.plot:
        col = args.column
        emit_svg(table, args.plot, fit=fit, column=col,
                 stderr_column="stderr_phi" if col == "mean_rho_phi" else "stderr_F")
    return EXIT_OK


COMMANDS = {"functionals": cmd_functionals, "clt-avg": cmd_clt_avg,
            "rate-sweep": cmd_rate_sweep, "cf-profile": cmd_cf_profile,
            "validate": cmd_validate, "report": cmd_report}


def run(argv=None):
    """Parse ``argv`` and dispatch; returns the exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args, extra = parser.parse_known_args(argv)
        if extra:
            # report against the subcommand so its own help is shown
            sub = next(a for a in parser._actions if a.dest == "command").choices[args.command]
            sub.error(f"unrecognized arguments: {' '.join(extra)}")
        explicit = set(vars(build_parser(suppress=True).parse_args(argv)))
        return COMMANDS[args.command](args, explicit)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    except (WeightedSumsError, ValueError) as exc:
        print(f"weightedsums: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())
