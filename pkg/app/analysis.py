"""Executable form of the solvability condition and the flow's a priori estimates.

Everything here is an estimate over a sampling set: the closed-form map is
evaluated on a lattice ``SAMPLING_FACTOR`` times finer than the solver grid
(boundary crossings included), and the reports say so.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from scipy.stats import qmc

from .errors import InvalidParameter, InvalidXi, NonFiniteState, NotSpacelike
from .fields import MapField
from .lattice import (
    INTERIOR,
    ConvexDomain,
    boundary_anchors,
    build_grid,
    diameter,
    plane_distance,
    stencil_offsets,
    supporting_hyperplane,
)
from .metric import NodeGeometry, hyperbolic_angle, jacobi_eigenvalues, singular_values
from .models import ConditionReport, DiagnosticsRecord, ProblemSpec
from .stencil import GraphMap

if TYPE_CHECKING:  # pragma: no cover
    from .flow import FlowState
    from .scenario import Scenario

logger = logging.getLogger(__name__)

SAMPLING_FACTOR = 4
ANGLE_SWEEP = 720
SPHERE_DIRECTIONS = 4096
ASCENT_STEPS = 20
CHUNK = 2048
SQRT2 = math.sqrt(2.0)


def sample_points(domain: ConvexDomain, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """(domain samples, boundary samples) on the refined lattice."""
    fine = build_grid(domain, h / SAMPLING_FACTOR)
    edge = np.concatenate([fine.points[fine.boundary], fine.crossing_points])
    return np.concatenate([fine.points[fine.active], fine.crossing_points]), edge


def _chunks(count: int):
    for start in range(0, count, CHUNK):
        yield slice(start, min(start + CHUNK, count))


def _quadratic_forms(H: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """(K, D) Euclidean m-norms of (H^beta(v, v))_beta for each direction v."""
    q = np.einsum("kbij,di,dj->kdb", H, dirs, dirs)
    return np.sqrt(np.sum(q * q, axis=-1))


def _sphere_directions(n: int) -> np.ndarray:
    raw = qmc.Sobol(d=n, scramble=False).random(SPHERE_DIRECTIONS) * 2.0 - 1.0
    norms = np.linalg.norm(raw, axis=1)
    raw = raw[norms > 1e-12]
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def _ascend(H: np.ndarray, v: np.ndarray, best: np.ndarray) -> np.ndarray:
    """Projected gradient ascent of sum_beta (v^T H^beta v)^2 on the unit sphere."""
    scale = np.sum(H * H, axis=(1, 2, 3)) + 1e-300
    step = 0.25 / scale
    for _ in range(ASCENT_STEPS):
        Hv = np.einsum("kbij,kj->kbi", H, v)
        q = np.einsum("kbi,ki->kb", Hv, v)
        grad = 4.0 * np.einsum("kb,kbi->ki", q, Hv)
        grad -= np.sum(grad * v, axis=1, keepdims=True) * v
        trial = v + step[:, None] * grad
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        qt = np.einsum("kbij,ki,kj->kb", H, trial, trial)
        val = np.sqrt(np.sum(qt * qt, axis=1))
        better = val > best
        v = np.where(better[:, None], trial, v)
        best = np.where(better, val, best)
        step = np.where(better, step * 1.5, step * 0.5)
    return best


def hessian_direction_sup(H: np.ndarray) -> float:
    """sup over samples and unit v of |(D^2 psi^beta(v, v))_beta| for stacks (K, m, n, n)."""
    K, _, n, _ = H.shape
    if n == 2:
        angles = 2.0 * np.pi * np.arange(ANGLE_SWEEP) / ANGLE_SWEEP
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        dirs = _sphere_directions(n)
    out = 0.0
    for sl in _chunks(K):
        vals = _quadratic_forms(H[sl], dirs)
        if n > 2:
            idx = np.argmax(vals, axis=1)
            vals = _ascend(H[sl], dirs[idx], vals[np.arange(len(idx)), idx])
        out = max(out, float(np.max(vals)))
    return out


def hessian_sup_upper(H: np.ndarray) -> float:
    """sup over samples of sqrt(sum_beta sigma_max(Hess psi^beta)^2)."""
    K, m, n, _ = H.shape
    acc = np.zeros(K)
    for beta in range(m):
        eig = jacobi_eigenvalues(H[:, beta])
        acc += np.max(np.abs(eig), axis=1) ** 2
    return float(np.max(np.sqrt(acc)))


@dataclass(frozen=True)
class PsiNorms:
    sup_dpsi_boundary: float
    sup_dpsi_domain: float
    sup_d2psi: float
    sup_d2psi_upper: float
    samples: int


def psi_norms(psi: MapField, domain: ConvexDomain, h: float) -> PsiNorms:
    pts, bpts = sample_points(domain, h)
    J = psi.jacobian(pts)
    H = psi.hessian(pts)
    Jb = psi.jacobian(bpts)
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(H)) and np.all(np.isfinite(Jb))):
        raise NonFiniteState("psi or its derivatives are not finite on the sampling set.")
    logger.debug("psi norms: %d domain samples, %d boundary samples", len(pts), len(bpts))
    return PsiNorms(
        sup_dpsi_boundary=float(np.max(singular_values(Jb)[:, 0])),
        sup_dpsi_domain=float(np.max(singular_values(J)[:, 0])),
        sup_d2psi=hessian_direction_sup(H),
        sup_d2psi_upper=hessian_sup_upper(H),
        samples=len(pts),
    )


def eta0(psi: MapField, domain: ConvexDomain, h: float) -> float:
    """Maximum of cosh(theta) over the sampled graph of psi."""
    pts, _ = sample_points(domain, h)
    J = psi.jacobian(pts)
    bad = ~np.all(np.isfinite(J), axis=(1, 2))
    if np.any(bad):
        where = pts[int(np.argmax(bad))]
        raise NonFiniteState(f"psi has a non-finite derivative at {where.tolist()}.")
    lam = singular_values(J)
    worst = int(np.argmax(lam[:, 0]))
    if not lam[worst, 0] < 1.0:
        raise NotSpacelike(lam[worst, 0], point=pts[worst])
    return float(np.max(hyperbolic_angle(lam)))


def condition_lhs(n: int, delta: float, eta0: float, sup_d2psi: float, sup_dpsi_boundary: float) -> float:
    return 4.0 * n * eta0 * eta0 * delta * sup_d2psi + SQRT2 * sup_dpsi_boundary


def check_condition(problem: ProblemSpec) -> ConditionReport:
    """Evaluate the solvability condition for the scenario's initial map.

    Raises NotSpacelike when the initial graph is not spacelike; the
    condition is vacuous then.
    """
    from .scenario import prepare

    scenario = prepare(problem)
    domain = scenario.domain
    h = problem.grid.h
    e0 = eta0(scenario.initial, domain, h)
    norms = psi_norms(scenario.initial, domain, h)
    delta = diameter(domain)
    n = problem.dimensions.n
    lhs = condition_lhs(n, delta, e0, norms.sup_d2psi, norms.sup_dpsi_boundary)
    return ConditionReport(
        n=n,
        m=problem.dimensions.m,
        delta=delta,
        sup_d2psi=norms.sup_d2psi,
        sup_d2psi_upper=norms.sup_d2psi_upper,
        sup_dpsi_boundary=norms.sup_dpsi_boundary,
        sup_dpsi_domain=norms.sup_dpsi_domain,
        eta0=e0,
        lhs=lhs,
        satisfied=lhs < 1.0,
        initially_spacelike=norms.sup_dpsi_domain < 1.0,
        sampling_factor=SAMPLING_FACTOR,
    )


@dataclass(frozen=True)
class BarrierParams:
    k: float
    v: float
    vk: float
    p: Optional[np.ndarray] = None
    normal: Optional[np.ndarray] = None
    offset: float = 0.0


def _check_xi(xi: float) -> None:
    if not (math.isfinite(xi) and 0.0 <= xi < 1.0):
        raise InvalidXi(f"xi must lie in [0, 1), got {xi!r}.")


def barrier_params(
    delta: float,
    xi: float,
    n: int,
    sup_d2psi: float,
    p: Optional[np.ndarray] = None,
    normal: Optional[np.ndarray] = None,
    offset: float = 0.0,
) -> BarrierParams:
    """Barrier constants at the optimal rate k = 1/delta."""
    _check_xi(xi)
    if not delta > 0:
        raise InvalidParameter(f"Diameter must be positive, got {delta!r}.")
    k = 1.0 / delta
    vk = 4.0 * n * delta * sup_d2psi / (1.0 - xi)
    return BarrierParams(k=k, v=vk * delta, vk=vk, p=p, normal=normal, offset=offset)


def vk_for_rate(k: float, delta: float, xi: float, n: int, sup_d2psi: float) -> float:
    """Smallest v*k that keeps the barrier a supersolution at rate ``k``."""
    _check_xi(xi)
    if not k > 0:
        raise InvalidParameter(f"Barrier rate must be positive, got {k!r}.")
    return n * sup_d2psi * (1.0 + k * delta) ** 2 / ((1.0 - xi) * k)


def barrier_constraint_gap(params: BarrierParams, delta: float, xi: float, n: int, sup_d2psi: float) -> float:
    """v k^2 / (1 + k delta)^2 - n sup|D^2 psi| / (1 - xi); >= 0 for a supersolution."""
    _check_xi(xi)
    k = params.k
    return params.v * k * k / (1.0 + k * delta) ** 2 - n * sup_d2psi / (1.0 - xi)


def boundary_gradient_bound(
    delta: float, xi: float, n: int, sup_d2psi: float, sup_dpsi_boundary: float
) -> float:
    _check_xi(xi)
    return 4.0 * n * delta * sup_d2psi / (1.0 - xi) + SQRT2 * sup_dpsi_boundary


def theoretical_xi(eta0: float) -> float:
    """Upper bound on sup|Df|^2 implied by the angle estimate: 1 - 1/eta0^2."""
    if not eta0 >= 1.0:
        raise InvalidParameter(f"eta0 must be >= 1, got {eta0!r}.")
    return 1.0 - 1.0 / (eta0 * eta0)


def barrier_margin(
    state: "FlowState", params: BarrierParams, alpha: int, sign: int, psi_values: np.ndarray
) -> float:
    """min over non-Exterior nodes of v log(1 + k d_p) - sign (f^alpha - psi^alpha)."""
    f = state.f
    grid = f.grid
    active = grid.active
    d = plane_distance(grid.points[active], params.normal, params.offset)
    lift = params.v * np.log1p(params.k * d)
    gap = f.values[active, alpha] - psi_values[active, alpha]
    return float(np.min(lift - sign * gap))


def normal_slope_margin(
    state: "FlowState", params: BarrierParams, psi_values: np.ndarray
) -> float:
    """vk minus the inward normal slope of f - psi at ``params.p``.

    The slope is the difference quotient at the Interior node nearest to
    ``p + h * normal``; f = psi at p.
    """
    f = state.f
    grid = f.grid
    target = params.p + grid.h * params.normal
    pts = grid.points[grid.interior]
    q = grid.interior[int(np.argmin(np.sum((pts - target) ** 2, axis=1)))]
    d = float(plane_distance(grid.points[q], params.normal, params.offset))
    if d <= 0.0:
        return params.vk
    slope = np.max(np.abs(f.values[q] - psi_values[q])) / d
    return float(params.vk - slope)


def angle_chain_gap(geometry: NodeGeometry) -> float:
    """min over nodes of 1 - l1^2 - 1/cosh^2 and 1/cosh^2 - 1/eta_t^2 (both >= 0)."""
    lam1 = geometry.spectrum[:, 0]
    inv_cosh2 = 1.0 / geometry.cosh_theta ** 2
    eta_t = float(np.max(geometry.cosh_theta))
    first = (1.0 - lam1 * lam1) - inv_cosh2
    second = inv_cosh2 - 1.0 / (eta_t * eta_t)
    return float(min(np.min(first), np.min(second)))


def product_bound_margin(geometry: NodeGeometry, eta0: float) -> float:
    """(1 - 1/eta0^2) - max over nodes and i != j of lambda_i lambda_j."""
    lam = geometry.spectrum
    top = lam[:, 0] * lam[:, 1]
    return float(theoretical_xi(eta0) - np.max(top))


def first_ring(grid) -> np.ndarray:
    """Positions (into ``grid.interior``) of Interior nodes with a non-Interior stencil neighbour."""
    flat_offsets = stencil_offsets(grid.n) @ np.asarray(grid.strides)
    edge = np.zeros(len(grid.interior), dtype=bool)
    for off in flat_offsets:
        edge |= grid.classes[grid.interior + off] != INTERIOR
    return np.flatnonzero(edge)


@dataclass(frozen=True)
class Anchor:
    point: np.ndarray
    normal: np.ndarray
    offset: float


@dataclass(frozen=True, eq=False)
class Monitor:
    n: int
    m: int
    delta: float
    norms: PsiNorms
    eta0: float
    reference: np.ndarray  # (N, m) initial map values
    reference_max: np.ndarray  # (m,)
    anchors: Tuple[Anchor, ...]
    ring: np.ndarray


def build_monitor(scenario: "Scenario", f0: GraphMap) -> Monitor:
    domain = scenario.domain
    grid = scenario.grid
    h = grid.h
    anchors = []
    for p in boundary_anchors(domain):
        normal, offset = supporting_hyperplane(domain, p)
        anchors.append(Anchor(point=p, normal=normal, offset=offset))
    active = grid.active
    return Monitor(
        n=grid.n,
        m=f0.m,
        delta=diameter(domain),
        norms=psi_norms(scenario.initial, domain, h),
        eta0=eta0(scenario.initial, domain, h),
        reference=f0.values.copy(),
        reference_max=np.max(f0.values[active], axis=0),
        anchors=tuple(anchors),
        ring=first_ring(grid),
    )


def barrier_margins(state: "FlowState", monitor: Monitor, xi: float) -> List[float]:
    """Barrier margins for every anchor, component and sign."""
    base = barrier_params(monitor.delta, xi, monitor.n, monitor.norms.sup_d2psi)
    out = []
    for anchor in monitor.anchors:
        params = replace(base, p=anchor.point, normal=anchor.normal, offset=anchor.offset)
        for alpha in range(monitor.m):
            for sign in (1, -1):
                out.append(barrier_margin(state, params, alpha, sign, monitor.reference))
    return out


def normal_slope_margins(state: "FlowState", monitor: Monitor, xi: float) -> List[float]:
    base = barrier_params(monitor.delta, xi, monitor.n, monitor.norms.sup_d2psi)
    return [
        normal_slope_margin(
            state,
            replace(base, p=anchor.point, normal=anchor.normal, offset=anchor.offset),
            monitor.reference,
        )
        for anchor in monitor.anchors
    ]


def start_failure_record(state: Optional["FlowState"], exc: Exception) -> DiagnosticsRecord:
    """Step-0 record when no monitor could be built; unmeasured fields are NaN."""
    nan = float("nan")
    if state is not None:
        residual, cosh, sup_df = state.residual_sup, float(np.max(state.geometry.cosh_theta)), state.sup_df
    else:
        residual, cosh, sup_df = nan, nan, float(getattr(exc, "lambda_max", nan))
    return DiagnosticsRecord(
        step=0,
        t=0.0,
        dt=0.0,
        residual_sup=residual,
        max_cosh_theta=cosh,
        sup_df=sup_df,
        max_principle_margin=nan,
        boundary_grad_margin=nan,
        barrier_margin=nan,
        product_bound_margin=nan,
    )


def record(state: "FlowState", monitor: Monitor, xi: float) -> DiagnosticsRecord:
    geo = state.geometry
    f = state.f
    active = f.grid.active
    current_max = np.max(f.values[active], axis=0)
    measured_boundary = float(np.max(geo.spectrum[monitor.ring, 0])) if len(monitor.ring) else 0.0
    bound = boundary_gradient_bound(
        monitor.delta, xi, monitor.n, monitor.norms.sup_d2psi, monitor.norms.sup_dpsi_boundary
    )
    margins = barrier_margins(state, monitor, xi)
    return DiagnosticsRecord(
        step=state.step,
        t=state.t,
        dt=state.dt,
        residual_sup=state.residual_sup,
        max_cosh_theta=float(np.max(geo.cosh_theta)),
        sup_df=state.sup_df,
        max_principle_margin=float(np.min(monitor.reference_max - current_max)),
        boundary_grad_margin=bound - measured_boundary,
        barrier_margin=min(margins) if margins else 0.0,
        product_bound_margin=product_bound_margin(geo, monitor.eta0),
    )
