"""Command line entry point for the verification suites.

Usage: verify <suite> [options].  Each suite writes one JSON report (plus
a CSV mirror) into the output directory and prints a one-line verdict;
"all" runs every registered suite.  Exit status: 0 when everything
passes, 1 when any suite fails or an audit trips, 2 on configuration
errors (unknown suite, bad ranges, unwritable output).
"""

import argparse
import os
import sys

from .core import AuditError, ConvergenceError, InputError
from .suites import (
    DEFAULT_GRID_EXP,
    DEFAULT_PERIOD,
    DEFAULT_SEED,
    REGISTRY,
    SuiteConfig,
    run_suite,
)

OUT_DIR_VARIABLE = "PARASPECT_OUT_DIR"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="verify",
        description="Run a named verification suite and write its report.",
    )
    parser.add_argument(
        "suite",
        choices=sorted(REGISTRY) + ["all"],
        help="suite to run; 'all' runs every suite in registry order",
    )
    parser.add_argument(
        "--grid-exp",
        type=int,
        default=DEFAULT_GRID_EXP,
        help="log2 of the grid size for single-grid suites (default 12)",
    )
    parser.add_argument(
        "--period",
        type=float,
        default=DEFAULT_PERIOD,
        help="torus period for single-grid suites (default 2*pi)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=DEFAULT_SEED,
        help="seed for every random draw; fixed seed reproduces reports exactly",
    )
    parser.add_argument("--jmin", type=int, default=None, help="lowest dyadic scale")
    parser.add_argument("--jmax", type=int, default=None, help="highest dyadic scale")
    parser.add_argument(
        "--hmin-exp",
        type=int,
        default=None,
        help="smallest semiclassical parameter as 2^-K; alias for --jmax K",
    )
    parser.add_argument(
        "--hmax-exp",
        type=int,
        default=None,
        help="largest semiclassical parameter as 2^-K; alias for --jmin K",
    )
    parser.add_argument(
        "--out",
        default=None,
        help=f"output directory (default ${OUT_DIR_VARIABLE} or ./reports)",
    )
    parser.add_argument(
        "--format",
        choices=("json", "csv"),
        default="json",
        help="primary report format; a CSV mirror is always written",
    )
    return parser


def _resolve_scales(args):
    jmin, jmax = args.jmin, args.jmax
    if args.hmax_exp is not None:
        if jmin is not None:
            raise InputError("give either --jmin or --hmax-exp, not both")
        jmin = args.hmax_exp
    if args.hmin_exp is not None:
        if jmax is not None:
            raise InputError("give either --jmax or --hmin-exp, not both")
        jmax = args.hmin_exp
    return jmin, jmax


def _verdict_line(report):
    tag = "PASS" if report.passed else "FAIL"
    ratio = getattr(report, "ratio", None)
    if ratio is not None:
        detail = f"ratio {ratio:.3g}, slope {report.fitted_slope:+.3f}"
    else:
        detail = (
            f"slope {report.fitted_slope:+.3f} vs "
            f"{report.expected_bound:+.2f} (tol {report.tolerance:.2f})"
        )
    return f"{report.suite_id}: {tag} ({detail})"


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = args.out or os.environ.get(OUT_DIR_VARIABLE) or "reports"
    try:
        jmin, jmax = _resolve_scales(args)
        config = SuiteConfig(
            grid_exp=args.grid_exp,
            period=args.period,
            seed=args.seed,
            jmin=jmin,
            jmax=jmax,
        )
    except InputError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    try:
        reports, paths = run_suite(args.suite, config, out_dir=out_dir, fmt=args.format)
    except InputError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"configuration error: cannot write reports: {err}", file=sys.stderr)
        return 2
    except (AuditError, ConvergenceError) as err:
        print(f"audit failure: {err}", file=sys.stderr)
        return 1
    for report in reports:
        print(_verdict_line(report))
    for path in paths:
        print(f"wrote {path}")
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
