"""Command-line interface: ``ctrlrate {test,confint,simulate,re-example}``.

Results go to stdout; warnings and progress go to stderr so stdout stays
parseable. Exit status is 0 on success, 2 for bad arguments or data and 3
when a fit did not converge (the report is still printed).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings

import numpy as np

from . import __version__
from .data import DataError, load_csv
from .estimation import DegenerateDesignError
from .optimize import OptimizationError, OptimizerConfig
from .re_oracle import REData, re_skovgaard
from .simulation import SimulationConfig, Scenario, grid_runner, write_coverage_csv
from .skovgaard import ProfileAnalysis, confint_beta1, parse_alternative, test_beta1

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 2, 3

log = logging.getLogger("ctrlrate")

OPTIMIZERS = {
    "reference": OptimizerConfig,
    "tight": OptimizerConfig.tight,
    "precise": OptimizerConfig.precise,
}


class UsageError(Exception):
    pass


def _g7(x) -> str:
    x = float(x) + 0.0  # no "-0"
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.7g}"


def _common_decimals(values, digits=4) -> int:
    """Decimals needed so that every finite value shows ``digits`` significant digits."""
    decimals = 0
    for v in values:
        if math.isfinite(v) and v != 0:
            decimals = max(decimals, digits - 1 - math.floor(math.log10(abs(v))))
    return min(decimals, 15)


def format_table(row_names, col_names, rows, digits=4, gap=2) -> str:
    """Numbers share one decimal count and one right-justified width, then sit in
    left-justified columns: the layout R prints for a formatted numeric matrix."""
    flat = [v for row in rows for v in row]
    dec = _common_decimals(flat, digits)
    cells = [["NA" if not math.isfinite(v) else f"{v:.{dec}f}" for v in row] for row in rows]
    width = max(len(c) for row in cells for c in row)
    cells = [[c.rjust(width) for c in row] for row in cells]
    name_w = max(len(r) for r in row_names)
    widths = [max([len(c)] + [len(row[j]) for row in cells]) for j, c in enumerate(col_names)]
    pad = " " * gap
    lines = [" " * name_w + "".join(pad + c.ljust(w) for c, w in zip(col_names, widths))]
    for name, row in zip(row_names, cells):
        lines.append(name.ljust(name_w) + "".join(pad + c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def _parse_list(text: str, name: str, kind=float):
    try:
        values = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name} must be a comma-separated list of numbers") from None
    if not values:
        raise UsageError(f"--{name} is empty")
    return values


def _optimizer(args) -> OptimizerConfig:
    cfg = OPTIMIZERS[args.optimizer]()
    if args.maxit is not None:
        if args.maxit < 1:
            raise UsageError("--maxit must be positive")
        cfg = OptimizerConfig(**{**cfg.__dict__, "max_iterations": args.maxit})
    return cfg


def _warn(flags, stream):
    for flag in sorted(flags):
        print(f"warning: {flag}", file=stream)


def cmd_test(args, out, err) -> int:
    if not math.isfinite(args.beta1_null):
        raise UsageError("--beta1-null must be finite")
    alternative = parse_alternative(args.alternative)
    data = load_csv(args.data)
    report = test_beta1(data, args.beta1_null, alternative, config=_optimizer(args))
    mle_se = float("nan") if report.mle.std_errs is None else report.mle.std_errs[1]
    _warn(report.diagnostics, err)
    if args.json:
        payload = {
            "converged": report.converged,
            "estimates": {
                "wls": {"estimate": report.wls.theta.beta1, "std_err": report.wls.std_errs[1]},
                "mle": {"estimate": report.mle.theta.beta1, "std_err": mle_se},
            },
            "statistics": {
                "wald": {"value": report.wald, "p_value": report.p_wald},
                "r_p": {"value": report.r_p, "p_value": report.p_r},
                "r_bar": {"value": report.r_bar, "p_value": report.p_rbar},
            },
            "u": report.u,
            "beta1_null": report.beta1_null,
            "alternative": alternative,
            "diagnostics": sorted(report.diagnostics),
        }
        print(json.dumps(payload, indent=2, allow_nan=True), file=out)
    else:
        if not report.converged:
            print("converged=false", file=out)
        print("\nEstimate of beta1:", file=out)
        print(format_table(["WLS", "MLE"], ["Estimate", "Std.Err."],
                           [[report.wls.theta.beta1, report.wls.std_errs[1]],
                            [report.mle.theta.beta1, mle_se]]), file=out)
        print("\nHypothesis test for beta1:", file=out)
        print(format_table(["Wald statistic", "Signed profile log-likelihood ratio statistic",
                            "Skovgaard statistic"], ["Value", "P-value"],
                           [[report.wald, report.p_wald], [report.r_p, report.p_r],
                            [report.r_bar, report.p_rbar]]), file=out)
        if alternative == "two_sided":
            line = f"parameter is different from {_g7(args.beta1_null)}"
        else:
            line = f"parameter is {alternative} than {_g7(args.beta1_null)}"
        print(f"\nalternative hypothesis: {line}", file=out)
    if not report.converged:
        print("error: a likelihood fit did not converge; see diagnostics", file=err)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


STAT_CHOICES = {"wald": "wald", "rp": "r_p", "rbar": "r_bar"}


def cmd_confint(args, out, err) -> int:
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    data = load_csv(args.data)
    names = list(STAT_CHOICES) if args.statistic == "all" else [args.statistic]
    analysis = None
    if any(n != "wald" for n in names):
        analysis = ProfileAnalysis(data, _optimizer(args))
    rows = []
    for name in names:
        ci = confint_beta1(data, args.level, STAT_CHOICES[name], analysis=analysis)
        _warn(ci.diagnostics, err)
        for end, value in (("lower", ci.lower), ("upper", ci.upper)):
            if not math.isfinite(value):
                print(f"warning: {name} interval is unbounded at the {end} end", file=err)
        rows.append((name, ci))
    if args.json:
        print(json.dumps({n: {"level": c.level, "lower": c.lower, "upper": c.upper,
                              "diagnostics": sorted(c.diagnostics)} for n, c in rows},
                         indent=2, allow_nan=True), file=out)
    else:
        for name, ci in rows:
            print("\t".join([name, _g7(ci.level), _g7(ci.lower), _g7(ci.upper)]), file=out)
    if analysis is not None and not analysis.mle.converged:
        print("error: the MLE fit did not converge", file=err)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(args, out, err) -> int:
    explicit = [args.beta0, args.beta1, args.mu]
    if args.scenario is not None and any(v is not None for v in explicit):
        raise UsageError("--scenario conflicts with --beta0/--beta1/--mu")
    if args.scenario is None:
        if any(v is None for v in explicit):
            raise UsageError("give --scenario or all of --beta0, --beta1, --mu")
        scenarios = [Scenario(args.beta0, args.beta1, args.mu, tau=1.2, sigma=1.0)]
    else:
        scenarios = _parse_list(args.scenario, "scenario", int)
    n_values = _parse_list(args.n_list, "n-list", int)
    tau_grid = None if args.tau_list is None else _parse_list(args.tau_list, "tau-list")
    sigma_grid = None if args.sigma_list is None else _parse_list(args.sigma_list, "sigma-list")
    for v in (tau_grid or []) + (sigma_grid or []):
        if not (v > 0 and math.isfinite(v)):
            raise UsageError("tau and sigma values must be positive")
    if any(n < 2 for n in n_values):
        raise UsageError("every n must be at least 2")
    if args.replicates < 1 or args.workers < 1 or args.seed < 0:
        raise UsageError("--replicates and --workers must be positive, --seed nonnegative")
    try:
        base = SimulationConfig(scenario=Scenario(0.0, 1.0, 0.0, 1.0), n=2,
                                replicates=args.replicates, level=args.level, seed=args.seed,
                                parallelism=args.workers, ci_mode=args.ci_mode,
                                optimizer=OPTIMIZERS[args.optimizer]())
        results = grid_runner(scenarios, n_values, tau_grid, sigma_grid, base=base)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for res in results:
        cfg = res.config
        print(f"scenario {cfg.scenario.label} n={cfg.n} tau={_g7(cfg.scenario.tau)} "
              f"sigma={_g7(cfg.scenario.sigma)}: "
              + ", ".join(f"{m} {_g7(res.coverage(m))}" for m in res.methods), file=err)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_coverage_csv(results, fh)
    else:
        write_coverage_csv(results, out)
    return EXIT_OK


def cmd_re_example(args, out, err) -> int:
    y = _parse_list(args.y, "y")
    if len(y) < 2:
        raise UsageError("--y needs at least two observations")
    if not args.sigma2 > 0:
        raise UsageError("--sigma2 must be positive")
    rep = re_skovgaard(REData(tuple(y), args.sigma2), args.upsilon_null)
    _warn(rep.flags, err)
    if args.json:
        print(json.dumps({"upsilon_hat": rep.fit.upsilon_hat, "omega_hat": rep.fit.omega_hat,
                          "omega_tilde": rep.fit.omega_tilde, "r": rep.r, "r_bar": rep.r_bar,
                          "S": rep.s.tolist(), "q": rep.q.tolist(), "u": rep.u,
                          "diagnostics": sorted(rep.flags)}, indent=2), file=out)
        return EXIT_OK
    lines = [
        ("upsilon_hat", [rep.fit.upsilon_hat]),
        ("omega_hat", [rep.fit.omega_hat]),
        ("omega_tilde", [rep.fit.omega_tilde]),
        ("r", [rep.r]),
        ("r_bar", [rep.r_bar]),
        ("S", list(np.ravel(rep.s))),
        ("q", list(rep.q)),
        ("u", [rep.u]),
    ]
    for name, values in lines:
        print("\t".join([name] + [_g7(v) for v in values]), file=out)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctrlrate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log fit details to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fit_options(p):
        p.add_argument("--data", required=True, help="CSV of counts or observations")
        p.add_argument("--maxit", type=int, default=None,
                       help="Nelder-Mead evaluation cap per run (default 1000)")
        p.add_argument("--optimizer", choices=sorted(OPTIMIZERS), default="reference")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("test", help="test beta1 = value")
    fit_options(p)
    p.add_argument("--beta1-null", type=float, required=True)
    p.add_argument("--alternative", default="two.sided",
                   choices=["two.sided", "two_sided", "less", "greater"])
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("confint", help="confidence intervals for beta1")
    fit_options(p)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--statistic", choices=["wald", "rp", "rbar", "all"], default="all")
    p.set_defaults(func=cmd_confint)

    p = sub.add_parser("simulate", help="coverage experiment over a grid")
    p.add_argument("--scenario", help="reference scenario number(s), e.g. 1 or 1,4")
    p.add_argument("--beta0", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--n-list", required=True)
    p.add_argument("--tau-list")
    p.add_argument("--sigma-list")
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--ci-mode", choices=["test", "interval"], default="test")
    p.add_argument("--optimizer", choices=sorted(OPTIMIZERS), default="tight")
    p.add_argument("--out", help="write the CSV here instead of stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("re-example", help="closed-form random-effects example")
    p.add_argument("--y", required=True, help="comma-separated effect estimates")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--upsilon-null", type=float, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_re_example)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help, --version
        return int(exc.code or 0)
    logging.basicConfig(stream=err, level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=err)
            return args.func(args, out, err)
    except (UsageError, DataError, DegenerateDesignError, OptimizationError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
