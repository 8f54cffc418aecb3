"""Exact stationary solutions and independent recomputations used as ground truth."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.differentiate import derivative
from scipy.stats import qmc

from .errors import (
    InvalidParameter,
    NonOracleScenario,
    NotSpacelike,
)
from .fields import AffineField
from .lattice import ConvexDomain
from .metric import contract, induced_metric, singular_values
from .models import OrderReport, ProblemSpec, Termination
from .stencil import GraphMap, require_interior

logger = logging.getLogger(__name__)

ORDER_BAND = (1.7, 2.3)
# Below this sup error the scheme is exact for the scenario and no order is fitted.
FIT_FLOOR = 1e-9
# Refinement runs stop at residual <= REFINE_TOL * h^2, far below the O(h^2) error being fitted.
REFINE_TOL = 1e-5
DOMAIN_SAMPLES = 1024


def _everywhere(x: np.ndarray) -> np.ndarray:
    return np.ones(np.asarray(x).shape[:-1], dtype=bool)


@dataclass(frozen=True, eq=False)
class ExactSolution:
    id: str
    n: int
    m: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Callable[[np.ndarray], np.ndarray]
    hessian_fn: Callable[[np.ndarray], np.ndarray]
    valid_fn: Callable[[np.ndarray], np.ndarray] = _everywhere

    def value(self, x):
        return self.value_fn(np.asarray(x, dtype=float))

    def jacobian(self, x):
        return self.jacobian_fn(np.asarray(x, dtype=float))

    def hessian(self, x):
        return self.hessian_fn(np.asarray(x, dtype=float))

    def valid(self, x):
        return self.valid_fn(np.asarray(x, dtype=float))


def affine_solution(A: Sequence[Sequence[float]], b: Sequence[float]) -> ExactSolution:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(A.shape[0])
    lam = float(singular_values(A.T)[0])
    if lam >= 1.0:
        raise NotSpacelike(lam)
    field = AffineField(A=A, b=b)
    return ExactSolution(
        id="affine",
        n=field.n,
        m=field.m,
        value_fn=field.value,
        jacobian_fn=field.jacobian,
        hessian_fn=field.hessian,
    )


def lorentzian_catenoid(c: float) -> ExactSolution:
    """f(x, y) = c * arcsinh(r / c), a maximal graph away from the axis r = 0."""
    if not (math.isfinite(c) and c > 0):
        raise InvalidParameter(f"Catenoid parameter c must be positive, got {c!r}.")

    def value(x):
        r = np.hypot(x[..., 0], x[..., 1])
        return (c * np.arcsinh(r / c))[..., None]

    def jacobian(x):
        r = np.hypot(x[..., 0], x[..., 1])
        slope = c / np.sqrt(c * c + r * r)
        return ((slope / r)[..., None] * x)[..., :, None]

    def hessian(x):
        r = np.hypot(x[..., 0], x[..., 1])
        slope = c / np.sqrt(c * c + r * r)
        curve = -c * r / (c * c + r * r) ** 1.5
        outer = x[..., :, None] * x[..., None, :]
        r_ = r[..., None, None]
        H = (curve[..., None, None] * outer / r_ ** 2
             + slope[..., None, None] * (np.eye(2) / r_ - outer / r_ ** 3))
        return H[..., None, :, :]

    def valid(x):
        return np.hypot(x[..., 0], x[..., 1]) > 0.0

    return ExactSolution(
        id="catenoid", n=2, m=1,
        value_fn=value, jacobian_fn=jacobian, hessian_fn=hessian, valid_fn=valid,
    )


def _as_complex(coefficients) -> np.ndarray:
    out = []
    for c in coefficients:
        if isinstance(c, (list, tuple)):
            if len(c) != 2:
                raise InvalidParameter(f"Complex coefficient {c!r} must be [re, im].")
            out.append(complex(float(c[0]), float(c[1])))
        else:
            out.append(complex(c))
    if not out:
        raise InvalidParameter("A holomorphic polynomial needs at least one coefficient.")
    return np.asarray(out, dtype=complex)


def _domain_samples(domain: ConvexDomain, count: int = DOMAIN_SAMPLES) -> np.ndarray:
    lo, hi = domain.bbox
    raw = lo + (hi - lo) * qmc.Sobol(d=domain.dim, scramble=False).random(count)
    pts = raw[domain.contains(raw)]
    if domain.kind != "ball":
        pts = np.vstack([pts, domain.vertices()])
    return pts


def holomorphic_solution(coefficients, domain: Optional[ConvexDomain] = None) -> ExactSolution:
    """f = (Re p, Im p) for the complex polynomial with ascending ``coefficients``.

    When ``domain`` is given, |p'| < 1 is checked by sampling before use.
    """
    c = _as_complex(coefficients)
    c1 = P.polyder(c)
    c2 = P.polyder(c1)

    def _z(x):
        return x[..., 0] + 1j * x[..., 1]

    def value(x):
        w = P.polyval(_z(x), c)
        return np.stack([w.real, w.imag], axis=-1)

    def jacobian(x):
        d = P.polyval(_z(x), c1)
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = d.real
        J[..., 0, 1] = d.imag
        J[..., 1, 0] = -d.imag
        J[..., 1, 1] = d.real
        return J

    def hessian(x):
        dd = P.polyval(_z(x), c2)
        H = np.empty(x.shape[:-1] + (2, 2, 2))
        H[..., 0, 0, 0] = dd.real
        H[..., 0, 0, 1] = H[..., 0, 1, 0] = -dd.imag
        H[..., 0, 1, 1] = -dd.real
        H[..., 1, 0, 0] = dd.imag
        H[..., 1, 0, 1] = H[..., 1, 1, 0] = dd.real
        H[..., 1, 1, 1] = -dd.imag
        return H

    def valid(x):
        return np.abs(P.polyval(_z(x), c1)) < 1.0

    if domain is not None:
        pts = _domain_samples(domain)
        speed = np.abs(P.polyval(_z(pts), c1))
        worst = int(np.argmax(speed))
        if speed[worst] >= 1.0:
            raise NotSpacelike(speed[worst], point=pts[worst])

    return ExactSolution(
        id="holomorphic_poly", n=2, m=2,
        value_fn=value, jacobian_fn=jacobian, hessian_fn=hessian, valid_fn=valid,
    )


def numeric_hessian(sol: ExactSolution, points: np.ndarray) -> np.ndarray:
    """Hessians ``(K, m, n, n)`` by adaptive differentiation of the analytic Jacobian."""
    pts = np.asarray(points, dtype=float)
    n, m = sol.n, sol.m
    coords = tuple(pts[:, k] for k in range(n))
    H = np.empty((len(pts), m, n, n))
    for j in range(n):
        for i in range(n):
            for beta in range(m):

                def entry(t, *rest, i=i, j=j, beta=beta):
                    t, *rest = np.broadcast_arrays(t, *rest)
                    stacked = np.stack([t if k == j else rest[k] for k in range(n)], axis=-1)
                    return sol.jacobian(stacked)[..., i, beta]

                res = derivative(
                    entry,
                    coords[j],
                    args=coords,
                    initial_step=0.05,
                    tolerances=dict(atol=1e-13, rtol=1e-13),
                )
                H[:, beta, i, j] = res.df
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def verify_exact(sol: ExactSolution, points: np.ndarray) -> float:
    """Sup over ``points`` of |g^ij d_ij f| using independently differentiated Hessians."""
    pts = np.asarray(points, dtype=float)
    if not np.all(sol.valid(pts)):
        raise InvalidParameter(f"Some sample points lie outside the validity region of {sol.id}.")
    metric = induced_metric(sol.jacobian(pts))
    t = contract(metric.g_inv, numeric_hessian(sol, pts))
    return float(np.max(np.linalg.norm(t, axis=1)))


def check_conformal(sol: ExactSolution, points: np.ndarray) -> float:
    """Deviation from d_x f . d_y f = 0, |d_x f| = |d_y f| and g = (1 - |p'|^2) I."""
    J = sol.jacobian(np.asarray(points, dtype=float))
    rx, ry = J[:, 0, :], J[:, 1, :]
    rho = np.sum(rx * rx, axis=1)
    ortho = np.abs(np.sum(rx * ry, axis=1))
    equal = np.abs(rho - np.sum(ry * ry, axis=1))
    metric = induced_metric(J)
    expected = (1.0 - rho)[:, None, None] * np.eye(2)
    reduction = np.max(np.abs(metric.g - expected), axis=(1, 2))
    return float(max(ortho.max(), equal.max(), reduction.max()))


def _det(M: List[List[float]]) -> float:
    size = len(M)
    if size == 1:
        return M[0][0]
    total = 0.0
    for col in range(size):
        minor = [row[:col] + row[col + 1:] for row in M[1:]]
        total += (-1.0) ** col * M[0][col] * _det(minor)
    return total


def brute_force_tension(f: GraphMap, node: Sequence[int]) -> List[float]:
    """g^ij d_ij f^alpha at one node, written out longhand.

    Kept deliberately apart from the batched kernels in ``metric``/``stencil``.
    """
    grid = f.grid
    node = [int(i) for i in node]
    flat = require_interior(grid, node)
    n, m, h = grid.n, f.m, grid.h

    def read(k):
        """(scale, values, is_crossing) read by stencil offset k."""
        scale = float(grid.reach[flat, k])
        crossing = int(grid.crossing_of[flat, k])
        if crossing >= 0:
            row = f.crossing_values[crossing]
        else:
            delta = [int(d) for d in grid.offsets[k]]
            row = f.values[grid.flat([node[q] + delta[q] for q in range(n)])]
        return scale, [float(row[b]) for b in range(m)], crossing >= 0

    f0 = [float(f.values[flat][b]) for b in range(m)]
    J = [[0.0] * m for _ in range(n)]
    H = [[[0.0] * n for _ in range(n)] for _ in range(m)]
    for i in range(n):
        a, fp, _ = read(2 * i)
        b, fm, _ = read(2 * i + 1)
        for beta in range(m):
            J[i][beta] = (b * b * (fp[beta] - f0[beta]) + a * a * (f0[beta] - fm[beta])) / (
                a * b * (a + b)
            )
            H[beta][i][i] = 2.0 * ((fp[beta] - f0[beta]) / a - (f0[beta] - fm[beta]) / b) / (a + b)

    k = 2 * n
    for i in range(n):
        for j in range(i + 1, n):
            reads = [read(k + q) for q in range(4)]
            k += 4
            on_crossing = any(r[2] for r in reads)
            for beta in range(m):
                if not on_crossing:
                    fpp, fpm, fmp, fmm = (r[1][beta] for r in reads)
                    value = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
                else:
                    value = 0.0
                    for (si, sj), (s, vals, _) in zip(((1, 1), (1, -1), (-1, 1), (-1, -1)), reads):
                        di, dj = si * s, sj * s
                        rest = (
                            vals[beta] - f0[beta] - J[i][beta] * di - J[j][beta] * dj
                            - 0.5 * (H[beta][i][i] * di * di + H[beta][j][j] * dj * dj)
                        )
                        value += rest / (di * dj)
                    value *= 0.25
                H[beta][i][j] = value
                H[beta][j][i] = value

    G = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for beta in range(m):
                s += J[i][beta] * J[j][beta]
            G[i][j] = (1.0 if i == j else 0.0) - s

    # Sylvester: the metric is positive definite iff every leading minor is.
    for size in range(1, n + 1):
        if not _det([row[:size] for row in G[:size]]) > 0.0:
            raise NotSpacelike(float("nan"), node=tuple(node))

    det = _det(G)
    inv = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:i] + row[i + 1:] for k, row in enumerate(G) if k != j]
            inv[i][j] = (-1.0) ** (i + j) * _det(minor) / det

    out = []
    for alpha in range(m):
        s = 0.0
        for i in range(n):
            for j in range(n):
                s += inv[i][j] * H[alpha][i][j]
        out.append(s)
    return out


def solution_error(f: GraphMap, exact: ExactSolution) -> float:
    """Sup over non-Exterior nodes of |f - exact| (Euclidean norm in the target)."""
    grid = f.grid
    active = grid.active
    diff = f.values[active] - exact.value(grid.points[active])
    return float(np.max(np.sqrt(np.sum(diff * diff, axis=1))))


def _check_h_list(h_list: Sequence[float]) -> np.ndarray:
    hs = np.asarray(h_list, dtype=float)
    if hs.ndim != 1 or len(hs) < 3:
        raise InvalidParameter("A refinement study needs at least three spacings.")
    if np.any(hs <= 0):
        raise InvalidParameter("Spacings must be positive.")
    ratios = hs[:-1] / hs[1:]
    if np.any(ratios <= 1.0) or not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise InvalidParameter(f"Spacings {hs.tolist()} must decrease geometrically.")
    return hs


def refinement_spec(spec: ProblemSpec, h: float) -> ProblemSpec:
    """``spec`` at spacing ``h`` with a pure absolute stopping tolerance scaled by h^2."""
    from .scenario import with_spacing

    sized = with_spacing(spec, h)
    time = sized.time.model_copy(
        update={"tol_abs": min(sized.time.tol_abs, REFINE_TOL * h * h), "tol_rel": 0.0}
    )
    return sized.model_copy(update={"time": time})


def convergence_order(spec: ProblemSpec, h_list: Sequence[float], workers: int = 1) -> OrderReport:
    """Sup errors against the exact solution per spacing and the fitted order."""
    from .flow import run
    from .scenario import build_domain, exact_solution

    hs = _check_h_list(h_list)
    exact = exact_solution(spec, build_domain(spec))
    if exact is None:
        raise NonOracleScenario(f"Scenario {spec.name!r} has no exact solution.")

    errors: List[Optional[float]] = []
    terminations: List[Termination] = []
    for h in hs:
        result = run(refinement_spec(spec, float(h)), workers=workers)
        terminations.append(result.termination)
        if result.termination is Termination.converged:
            errors.append(solution_error(result.final.f, exact))
        else:
            errors.append(None)
        logger.info("order %s: h=%g termination=%s error=%s",
                    spec.name, h, result.termination.value, errors[-1])

    report = OrderReport(name=spec.name, h=hs.tolist(), errors=errors, terminations=terminations)
    failed = [float(h) for h, t in zip(hs, terminations) if t is not Termination.converged]
    if failed:
        report.note = f"Runs at h={failed} did not converge; order not fitted."
        return report
    errs = np.asarray(errors, dtype=float)
    if np.all(errs <= FIT_FLOOR):
        report.within_band = True
        report.note = f"All errors are below {FIT_FLOOR:g}; the scheme is exact here."
        return report
    slope = np.polyfit(np.log(hs), np.log(np.maximum(errs, np.finfo(float).tiny)), 1)[0]
    report.order = float(slope)
    report.fitted = True
    report.within_band = ORDER_BAND[0] <= slope <= ORDER_BAND[1]
    return report
