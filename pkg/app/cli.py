"""Command-line verbs: check, solve, order, verify."""

import argparse
import json
import logging
import sys
from fractions import Fraction
from typing import List, Optional, Sequence

from .errors import FlowError, NotSpacelike
from .models import Termination
from .scenario import load_scenario
from . import services

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONDITION_FAILS = 2
EXIT_NOT_SPACELIKE = 3
EXIT_ORDER_OUT_OF_BAND = 7

SOLVE_EXIT_CODES = {
    Termination.converged: 0,
    Termination.max_steps: 4,
    Termination.spacelike_lost: 5,
    Termination.non_finite: 6,
}


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)


def _parse_h_list(text: str) -> List[float]:
    """'1/20,1/40,0.0125' -> [0.05, 0.025, 0.0125]."""
    try:
        return [float(Fraction(part.strip())) for part in text.split(",") if part.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"invalid spacing list {text!r}: {exc}") from exc


def _print_json(payload: str) -> None:
    sys.stdout.write(payload)
    sys.stdout.write("\n")


def _error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def cmd_check(args: argparse.Namespace) -> int:
    try:
        spec = load_scenario(args.scenario)
    except FlowError as exc:
        return _error(str(exc))
    try:
        report = services.check_scenario(spec)
    except NotSpacelike as exc:
        _print_json(json.dumps({
            "name": spec.name,
            "spacelike": False,
            "lambda_max": exc.lambda_max,
            "point": list(exc.point) if exc.point is not None else None,
            "message": str(exc),
        }, indent=2))
        return EXIT_NOT_SPACELIKE
    except FlowError as exc:
        return _error(str(exc))
    _print_json(report.model_dump_json(indent=2))
    return EXIT_OK if report.satisfied else EXIT_CONDITION_FAILS


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        spec = load_scenario(args.scenario)
        report = services.solve_scenario(spec, args.out, workers=args.workers)
    except FlowError as exc:
        return _error(str(exc))
    print(f"{report.name}: {report.termination.value} after {report.steps} steps", file=sys.stderr)
    return SOLVE_EXIT_CODES[report.termination]


def cmd_order(args: argparse.Namespace) -> int:
    try:
        spec = load_scenario(args.scenario)
        report = services.order_scenario(spec, args.h, workers=args.workers)
    except FlowError as exc:
        # NonOracleScenario included.
        return _error(str(exc))
    _print_json(report.model_dump_json(indent=2))
    return EXIT_OK if report.within_band else EXIT_ORDER_OUT_OF_BAND


def cmd_verify(args: argparse.Namespace) -> int:
    results = services.run_verification()
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name}: {res.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spacelike-flow",
        description="Dirichlet problem for spacelike minimal graphs via mean curvature flow.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        help="Logging level (DEBUG, INFO, WARNING, ...).",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Shortcut for --log-level INFO.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="Evaluate the solvability condition for a scenario.")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="Run the flow and write diagnostics, solution and report.")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="Output directory.")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("order", help="Refinement study against the exact solution.")
    p.add_argument("scenario")
    p.add_argument("--h", required=True, type=_parse_h_list, help="Comma list, e.g. 1/20,1/40,1/80.")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("verify", help="Run the built-in invariant and oracle checks.")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging("INFO" if args.verbose else args.log_level)
    return args.func(args)
