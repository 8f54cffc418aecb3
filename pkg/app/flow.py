"""Explicit time integration of the Dirichlet spacelike mean curvature flow.

Each step reads a frozen snapshot of the map, evaluates the tension at every
Interior node (optionally in contiguous chunks on a thread pool), writes a
fresh buffer and re-pins the Boundary nodes to psi.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .analysis import Monitor, build_monitor, record, start_failure_record
from .errors import InvalidParameter, NonFiniteState, NotSpacelike
from .lattice import Grid
from .metric import SPACELIKE_GUARD, NodeGeometry, evaluate_nodes
from .models import DiagnosticsRecord, ProblemSpec, Termination
from .scenario import Scenario, prepare
from .stencil import GraphMap

logger = logging.getLogger(__name__)

# The step retried after a loss of spacelikeness uses this fraction of the safety factor.
RETRY_FACTOR = 0.5


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    step: int
    dt: float
    f: GraphMap
    geometry: NodeGeometry
    sup_df: float
    residual_sup: float


def cfl_dt(state: FlowState, safety: float) -> float:
    """safety * h^2 * (1 - sup_df^2) / (2n)."""
    if not safety > 0:
        raise InvalidParameter(f"Safety factor must be positive, got {safety!r}.")
    if not state.sup_df < 1.0:
        raise NotSpacelike(state.sup_df)
    grid = state.f.grid
    return safety * grid.h * grid.h * (1.0 - state.sup_df ** 2) / (2.0 * grid.n)


def _concat(parts: List[NodeGeometry]) -> NodeGeometry:
    return NodeGeometry(
        nodes=np.concatenate([p.nodes for p in parts]),
        jacobian=np.concatenate([p.jacobian for p in parts]),
        spectrum=np.concatenate([p.spectrum for p in parts]),
        g_inv=np.concatenate([p.g_inv for p in parts]),
        det_g=np.concatenate([p.det_g for p in parts]),
        cosh_theta=np.concatenate([p.cosh_theta for p in parts]),
        tension=np.concatenate([p.tension for p in parts]),
    )


class DirichletFlow:
    """Stepper for one grid with fixed boundary values.

    Use as a context manager when ``workers > 1`` so the pool is shut down.
    """

    def __init__(
        self,
        grid: Grid,
        boundary_values: np.ndarray,
        workers: int = 1,
        guard: float = SPACELIKE_GUARD,
    ):
        self.grid = grid
        self.boundary_values = np.asarray(boundary_values, dtype=float)
        self.workers = max(1, int(workers))
        self.guard = guard
        self._chunks = [c for c in np.array_split(grid.interior, self.workers) if len(c)]
        self._pool = (
            ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="flow")
            if len(self._chunks) > 1
            else None
        )

    def __enter__(self) -> "DirichletFlow":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def _evaluate_chunk(self, f: GraphMap, nodes: np.ndarray):
        try:
            return evaluate_nodes(f, nodes, self.guard)
        except NotSpacelike as exc:
            return exc

    def evaluate(self, f: GraphMap) -> NodeGeometry:
        if self._pool is None:
            return evaluate_nodes(f, self.grid.interior, self.guard)
        parts = list(self._pool.map(lambda c: self._evaluate_chunk(f, c), self._chunks))
        failures = [p for p in parts if isinstance(p, NotSpacelike)]
        if failures:
            # Same offending node as a single-chunk evaluation.
            raise max(failures, key=lambda e: e.lambda_max if np.isfinite(e.lambda_max) else np.inf)
        return _concat(parts)

    def state(self, f: GraphMap, t: float = 0.0, step: int = 0, dt: float = 0.0) -> FlowState:
        if not np.all(np.isfinite(f.values[self.grid.active])):
            raise NonFiniteState(f"Non-finite values after step {step}.")
        geo = self.evaluate(f)
        return FlowState(
            t=t,
            step=step,
            dt=dt,
            f=f,
            geometry=geo,
            sup_df=float(np.max(geo.spectrum[:, 0])),
            residual_sup=float(np.max(np.sqrt(np.sum(geo.tension ** 2, axis=1)))),
        )

    def step(self, state: FlowState, dt: float) -> FlowState:
        if not dt > 0:
            raise InvalidParameter(f"Time step must be positive, got {dt!r}.")
        grid = self.grid
        values = state.f.values.copy()
        values[grid.interior] += dt * state.geometry.tension
        values[grid.boundary] = self.boundary_values
        return self.state(state.f.replace(values), state.t + dt, state.step + 1, dt)


@dataclass(eq=False)
class RunResult:
    scenario: Scenario
    initial_map: GraphMap
    termination: Termination
    final: Optional[FlowState] = None
    diagnostics: List[DiagnosticsRecord] = field(default_factory=list)
    failure: Optional[Exception] = None
    monitor: Optional[Monitor] = None
    workers: int = 1
    wall_seconds: float = 0.0
    # Running max of sup_df^2 over every step taken.
    xi: float = 0.0

    @property
    def final_map(self) -> GraphMap:
        return self.final.f if self.final is not None else self.initial_map


def initial_map(scenario: Scenario) -> GraphMap:
    """The initial map on the grid with Boundary nodes and boundary crossings pinned to psi."""
    grid = scenario.grid
    values = GraphMap.sample(grid, scenario.initial).values
    values[grid.boundary] = scenario.psi.value(grid.points[grid.boundary])
    crossing = scenario.psi.value(grid.crossing_points) if grid.crossing_count else None
    return GraphMap(grid=grid, values=values, crossing_values=crossing)


def run(problem: ProblemSpec, workers: int = 1) -> RunResult:
    started = time.perf_counter()
    scenario = prepare(problem)
    grid = scenario.grid
    f0 = initial_map(scenario)
    controls = problem.time
    every = problem.outputs.diagnostics_every

    with DirichletFlow(grid, f0.values[grid.boundary], workers=workers) as flow:
        result = RunResult(
            scenario=scenario,
            initial_map=f0,
            termination=Termination.spacelike_lost,
            workers=flow.workers,
        )
        state = None
        try:
            state = flow.state(f0)
            result.monitor = build_monitor(scenario, f0)
        except (NotSpacelike, NonFiniteState) as exc:
            if isinstance(exc, NonFiniteState):
                result.termination = Termination.non_finite
            else:
                logger.info("%s: initial map is not spacelike: %s", problem.name, exc)
            result.failure = exc
            result.diagnostics.append(start_failure_record(state, exc))
            result.wall_seconds = time.perf_counter() - started
            return result

        monitor = result.monitor
        threshold = max(controls.tol_abs, controls.tol_rel * state.residual_sup)
        xi = state.sup_df ** 2
        safety = controls.safety
        retried = False
        if safety > 1.0:
            logger.warning("%s: safety factor %g exceeds the explicit stability limit", problem.name, safety)
        logger.info(
            "%s: n=%d m=%d nodes=%d interior=%d dt0=%.3e residual0=%.3e",
            problem.name, grid.n, f0.m, len(grid.active), len(grid.interior),
            cfl_dt(state, safety), state.residual_sup,
        )
        result.diagnostics.append(record(state, monitor, xi))

        while True:
            if state.residual_sup <= threshold:
                result.termination = Termination.converged
                break
            if state.step >= controls.max_steps:
                result.termination = Termination.max_steps
                break
            try:
                nxt = flow.step(state, cfl_dt(state, safety))
            except NotSpacelike as exc:
                if not retried:
                    retried = True
                    safety *= RETRY_FACTOR
                    logger.warning(
                        "%s: spacelikeness lost at step %d (%s); retrying with safety %g",
                        problem.name, state.step + 1, exc, safety,
                    )
                    continue
                result.termination = Termination.spacelike_lost
                result.failure = exc
                break
            except NonFiniteState as exc:
                result.termination = Termination.non_finite
                result.failure = exc
                break
            state = nxt
            xi = max(xi, state.sup_df ** 2)
            if state.step % every == 0:
                rec = record(state, monitor, xi)
                result.diagnostics.append(rec)
                logger.debug("%s: %s", problem.name, rec.model_dump())

        if result.diagnostics[-1].step != state.step:
            result.diagnostics.append(record(state, monitor, xi))
        result.final = state
        result.xi = xi

    result.wall_seconds = time.perf_counter() - started
    logger.info(
        "%s: %s after %d steps, t=%.6g, residual=%.3e",
        problem.name, result.termination.value, state.step, state.t, state.residual_sup,
    )
    return result
