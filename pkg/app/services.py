import csv
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from .analysis import (
    angle_chain_gap,
    boundary_gradient_bound,
    check_condition,
    condition_lhs,
    normal_slope_margins,
    theoretical_xi,
)
from .errors import FlowError, InsufficientStencil, NotSpacelike, OutputError
from .fields import PolynomialField
from .flow import DirichletFlow, RunResult, initial_map, run
from .lattice import INTERIOR, ConvexDomain, build_grid
from .metric import evaluate_nodes, normality_pairing, second_ring
from .models import (
    CheckResult,
    ConditionReport,
    DiagnosticsRecord,
    OrderReport,
    ProblemSpec,
    RunReport,
)
from .oracles import (
    brute_force_tension,
    check_conformal,
    convergence_order,
    holomorphic_solution,
    lorentzian_catenoid,
    solution_error,
    verify_exact,
)
from .scenario import prepare
from .stencil import GraphMap

logger = logging.getLogger(__name__)

DIAGNOSTICS_FILE = "diagnostics.csv"
SOLUTION_FILE = "solution.csv"
REPORT_FILE = "report.json"

# Column order of diagnostics.csv is the field order of DiagnosticsRecord.
DIAGNOSTICS_HEADER = tuple(DiagnosticsRecord.model_fields)


def _fmt(value: Union[int, float]) -> str:
    """Integers as-is, floats in their shortest round-trip form."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_diagnostics(path: Path, records: Sequence[DiagnosticsRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIAGNOSTICS_HEADER)
        for rec in records:
            row = rec.model_dump()
            writer.writerow([_fmt(row[key]) for key in DIAGNOSTICS_HEADER])


def write_solution(path: Path, f: GraphMap) -> None:
    """One row per non-Exterior node, lexicographic by grid multi-index."""
    grid = f.grid
    header = [f"x{i + 1}" for i in range(grid.n)] + [f"f{b + 1}" for b in range(f.m)] + ["class"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for flat in grid.active:
            row = [_fmt(x) for x in grid.points[flat]]
            row += [_fmt(v) for v in f.values[flat]]
            row.append("I" if grid.classes[flat] == INTERIOR else "B")
            writer.writerow(row)


def check_scenario(spec: ProblemSpec) -> ConditionReport:
    return check_condition(spec)


def build_report(
    result: RunResult,
    condition: Optional[ConditionReport] = None,
    condition_error: Optional[str] = None,
) -> RunReport:
    spec = result.scenario.spec
    final = result.final
    report = RunReport(
        name=spec.name,
        termination=result.termination,
        steps=final.step if final is not None else 0,
        t=final.t if final is not None else 0.0,
        condition=condition,
        condition_error=condition_error,
        workers=result.workers,
        wall_seconds=result.wall_seconds,
    )
    failure = result.failure
    if isinstance(failure, NotSpacelike):
        report.offending_lambda = failure.lambda_max
        if failure.node is not None:
            report.offending_node = [int(i) for i in failure.node]
    if final is None:
        return report

    report.residual_sup = final.residual_sup
    report.sup_df = final.sup_df
    report.angle_chain_gap = angle_chain_gap(final.geometry)
    exact = result.scenario.exact
    if exact is not None:
        report.final_error = solution_error(final.f, exact)
    ring = second_ring(final.f.grid)
    if len(ring):
        try:
            report.normality_sup = float(np.max(normality_pairing(final.f, ring)))
        except (InsufficientStencil, NotSpacelike) as exc:
            logger.info("normality diagnostic skipped: %s", exc)
    if result.monitor is not None and result.monitor.anchors:
        report.normal_slope_margin = min(normal_slope_margins(final, result.monitor, result.xi))
    return report


def solve_scenario(spec: ProblemSpec, out_dir: Union[str, Path], workers: int = 1) -> RunReport:
    """Run the flow and write diagnostics.csv, solution.csv and report.json into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"Cannot create output directory {out}: {exc.strerror}") from exc
    condition = None
    condition_error = None
    try:
        condition = check_condition(spec)
    except NotSpacelike as exc:
        condition_error = str(exc)

    result = run(spec, workers=workers)
    report = build_report(result, condition, condition_error)
    try:
        write_diagnostics(out / DIAGNOSTICS_FILE, result.diagnostics)
        write_solution(out / SOLUTION_FILE, result.final_map)
        (out / REPORT_FILE).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"Cannot write results to {out}: {exc.strerror}") from exc
    return report


def order_scenario(spec: ProblemSpec, h_list: Sequence[float], workers: int = 1) -> OrderReport:
    return convergence_order(spec, h_list, workers=workers)


# ---------------------------------------------------------------------------
# Built-in verification suite
# ---------------------------------------------------------------------------

VERIFY_SEED = 20240611

UNIT_SQUARE = {"kind": "box", "min": [0.0, 0.0], "max": [1.0, 1.0]}

WORKED_CONDITIONS = (
    # (scenario, expected lhs, satisfied)
    (
        {
            "name": "constant",
            "dimensions": {"n": 2, "m": 1},
            "domain": UNIT_SQUARE,
            "psi": {"type": "catalog", "id": "constant", "params": {"value": [0.0]}},
            "grid": {"h": 0.1},
        },
        0.0,
        True,
    ),
    (
        {
            "name": "affine-slope-0.3",
            "dimensions": {"n": 2, "m": 1},
            "domain": UNIT_SQUARE,
            "psi": {"type": "affine", "matrix": [[0.3, 0.0]], "offset": [0.0]},
            "grid": {"h": 0.1},
        },
        math.sqrt(2.0) * 0.3,
        True,
    ),
    (
        {
            "name": "quadratic-0.2",
            "dimensions": {"n": 2, "m": 1},
            "domain": UNIT_SQUARE,
            "psi": {
                "type": "polynomial",
                "components": [
                    [
                        {"exponents": [2, 0], "coefficient": 0.2},
                        {"exponents": [0, 2], "coefficient": 0.2},
                    ]
                ],
            },
            "grid": {"h": 0.1},
        },
        8.0 * math.sqrt(2.0) * 0.4 / 0.68 + 0.8,
        False,
    ),
)


def random_polynomial_field(rng: np.random.Generator, n: int, m: int, scale: float) -> PolynomialField:
    """Random polynomial of total degree <= 3 per component."""
    exponents = [
        e for e in np.ndindex(*(4,) * n) if 0 < sum(e) <= 3
    ]
    components = []
    for _ in range(m):
        chosen = rng.choice(len(exponents), size=min(6, len(exponents)), replace=False)
        components.append(
            tuple((tuple(int(v) for v in exponents[k]), float(rng.uniform(-scale, scale))) for k in chosen)
        )
    return PolynomialField(n=n, components=tuple(components))


# Random fields per (grid, m) in the oracle equivalence check; 3 grids x 3 m x 112 > 10^3.
FIELDS_PER_CASE = 112

TRIANGLE = {
    "kind": "polytope",
    "halfspaces": [
        {"normal": [-1.0, 0.0], "offset": 0.0},
        {"normal": [0.0, -1.0], "offset": 0.0},
        {"normal": [math.sqrt(0.5), math.sqrt(0.5)], "offset": math.sqrt(0.5)},
    ],
}
UNIT_DISC = {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0}


def _equivalence_grids():
    return (
        build_grid(ConvexDomain.box([0.0, 0.0], [1.0, 1.0]), 0.25),
        build_grid(ConvexDomain.box([0.0] * 3, [1.0] * 3), 0.25),
        build_grid(ConvexDomain.ball([0.0, 0.0], 1.0), 0.15),
    )


def _verify_oracle_equivalence() -> Tuple[bool, str]:
    rng = np.random.default_rng(VERIFY_SEED)
    worst = 0.0
    fields = 0
    compared = 0
    for grid in _equivalence_grids():
        for m in (1, 2, 3):
            for _ in range(FIELDS_PER_CASE):
                f = GraphMap.sample(grid, random_polynomial_field(rng, grid.n, m, 0.02))
                fields += 1
                try:
                    fast = evaluate_nodes(f, grid.interior).tension
                except NotSpacelike:
                    continue
                for k, flat in enumerate(grid.interior):
                    slow = brute_force_tension(f, grid.node(flat))
                    worst = max(worst, float(np.max(np.abs(fast[k] - np.asarray(slow)))))
                    compared += 1
    return worst <= 1e-12 and compared > 0, f"{fields} fields, {compared} nodes, max deviation {worst:.3e}"


def _verify_affine_stationarity() -> Tuple[bool, str]:
    worst = 0.0
    for domain in (UNIT_SQUARE, UNIT_DISC, TRIANGLE):
        spec = ProblemSpec.model_validate(
            {
                "name": "affine-stationary",
                "dimensions": {"n": 2, "m": 2},
                "domain": domain,
                "psi": {"type": "affine", "matrix": [[0.3, -0.2], [0.1, 0.4]], "offset": [0.5, -0.25]},
                "grid": {"h": 0.1},
            }
        )
        scenario = prepare(spec)
        grid = scenario.grid
        f0 = initial_map(scenario)
        with DirichletFlow(grid, f0.values[grid.boundary]) as flow:
            state = flow.state(f0)
            worst = max(worst, state.residual_sup)
            for _ in range(100):
                state = flow.step(state, 1e-3)
                worst = max(worst, state.residual_sup)
    return worst <= 1e-12, f"max residual over 100 steps on square, disc and triangle {worst:.3e}"


def _verify_condition_reports() -> Tuple[bool, str]:
    details = []
    ok = True
    for raw, expected, satisfied in WORKED_CONDITIONS:
        report = check_condition(ProblemSpec.model_validate(raw))
        close = abs(report.lhs - expected) <= 0.01 * max(expected, 1e-12) + 1e-12
        ok = ok and close and report.satisfied is satisfied
        details.append(f"{raw['name']}: lhs={report.lhs:.4f}")
    return ok, "; ".join(details)


def _verify_theoretical_identity() -> Tuple[bool, str]:
    rng = np.random.default_rng(VERIFY_SEED + 1)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 6))
        e0 = float(rng.uniform(1.0, 3.0))
        delta = float(rng.uniform(0.1, 5.0))
        d2 = float(rng.uniform(0.0, 1.0))
        d1 = float(rng.uniform(0.0, 0.99))
        lhs = condition_lhs(n, delta, e0, d2, d1)
        bound = boundary_gradient_bound(delta, theoretical_xi(e0), n, d2, d1)
        worst = max(worst, abs(bound - lhs) / max(1.0, lhs))
    return worst <= 1e-13, f"max relative gap {worst:.3e}"


def _verify_exact_solutions() -> Tuple[bool, str]:
    unit = qmc.Sobol(d=2, scramble=False).random(256)
    catenoid_pts = np.array([1.0, -0.5]) + unit
    holo_pts = unit - 0.5
    cat = verify_exact(lorentzian_catenoid(1.0), catenoid_pts)
    square = ConvexDomain.box([-0.5, -0.5], [0.5, 0.5])
    holo = holomorphic_solution([0.0, 0.0, 0.15], domain=square)
    holo_tension = verify_exact(holo, holo_pts)
    conformal = check_conformal(holo, holo_pts)
    ok = cat <= 1e-10 and holo_tension <= 1e-10 and conformal <= 1e-12
    return ok, (
        f"catenoid tension {cat:.3e}, holomorphic tension {holo_tension:.3e}, "
        f"conformality {conformal:.3e}"
    )


VERIFICATION_CHECKS: Dict[str, Callable[[], Tuple[bool, str]]] = {
    "oracle_equivalence": _verify_oracle_equivalence,
    "affine_stationarity": _verify_affine_stationarity,
    "condition_reports": _verify_condition_reports,
    "theoretical_identity": _verify_theoretical_identity,
    "exact_solutions": _verify_exact_solutions,
}


def run_verification() -> List[CheckResult]:
    results = []
    for name, check in VERIFICATION_CHECKS.items():
        try:
            passed, detail = check()
        except FlowError as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        logger.info("verify %s: %s (%s)", name, "ok" if passed else "FAILED", detail)
        results.append(CheckResult(name=name, passed=bool(passed), detail=detail))
    return results
