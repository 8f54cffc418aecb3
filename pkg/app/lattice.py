"""Convex domains and the uniform lattice the flow is discretised on.

Node classes:

* Interior - the node and every node of its second-order stencil (axis and
  diagonal neighbours) lie in the closed domain.
* Boundary - any other node stencil-adjacent to an Interior node. It stays
  at its lattice location and carries psi there.
* Exterior - everything else. Exterior nodes never carry values.

Where the line from an Interior node through a Boundary neighbour leaves the
domain before the next lattice point, that Interior node's stencil reads a
boundary crossing instead: the exit point on the boundary, at its true
distance, carrying psi. A crossing belongs to one (node, direction) pair.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from .errors import (
    DegenerateDomain,
    DegenerateGrid,
    InvalidParameter,
    NotOnBoundary,
    UnboundedDomain,
)

logger = logging.getLogger(__name__)

EXTERIOR = 0
INTERIOR = 1
BOUNDARY = 2

# Membership slack for the closed domain.
INSIDE_SLACK = 1e-12
ON_BOUNDARY_TOL = 1e-9
MAX_FACETS = 64
# Exit points closer than this (relative) to the lattice neighbour are the neighbour.
CROSSING_TOL = 1e-9


@dataclass(frozen=True)
class HalfSpace:
    """``<normal, y> <= offset`` with a unit outward normal."""

    normal: np.ndarray
    offset: float


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    halfspaces: Tuple[HalfSpace, ...] = ()
    # Cached bounding box (computed once at construction).
    bbox: Tuple[np.ndarray, np.ndarray] = field(default=None, repr=False)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "ConvexDomain":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidParameter("Box corners must be vectors of equal length.")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UnboundedDomain("Box extents must be finite.")
        if np.any(hi <= lo):
            raise DegenerateDomain("Box must have positive extent on every axis.")
        return cls(kind="box", lower=lo, upper=hi, bbox=(lo.copy(), hi.copy()))

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> "ConvexDomain":
        c = np.asarray(center, dtype=float)
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise InvalidParameter("Ball center must be a finite vector.")
        if not math.isfinite(radius):
            raise UnboundedDomain("Ball radius must be finite.")
        if radius <= 0:
            raise DegenerateDomain("Ball radius must be positive.")
        r = float(radius)
        return cls(kind="ball", center=c, radius=r, bbox=(c - r, c + r))

    @classmethod
    def polytope(cls, halfspaces: Sequence[Tuple[Sequence[float], float]]) -> "ConvexDomain":
        if not halfspaces:
            raise UnboundedDomain("A polytope needs at least one half-space.")
        if len(halfspaces) > MAX_FACETS:
            raise InvalidParameter(f"At most {MAX_FACETS} half-spaces are supported.")
        spaces = []
        for normal, offset in halfspaces:
            a = np.asarray(normal, dtype=float)
            if abs(np.linalg.norm(a) - 1.0) > 1e-12:
                raise InvalidParameter(f"Half-space normal {a.tolist()} is not a unit vector.")
            spaces.append(HalfSpace(normal=a, offset=float(offset)))
        dims = {hs.normal.shape for hs in spaces}
        if len(dims) != 1:
            raise InvalidParameter("Half-space normals must share one dimension.")
        A = np.array([hs.normal for hs in spaces])
        b = np.array([hs.offset for hs in spaces])
        bbox = _polytope_bbox(A, b)
        return cls(kind="polytope", halfspaces=tuple(spaces), bbox=bbox)

    @property
    def dim(self) -> int:
        return int(self.bbox[0].shape[0])

    def constraint_matrix(self) -> Tuple[np.ndarray, np.ndarray]:
        """Half-space form ``A y <= b`` for boxes and polytopes."""
        if self.kind == "box":
            n = self.dim
            eye = np.eye(n)
            A = np.vstack([-eye, eye])
            b = np.concatenate([-self.lower, self.upper])
            return A, b
        if self.kind == "polytope":
            A = np.array([hs.normal for hs in self.halfspaces])
            b = np.array([hs.offset for hs in self.halfspaces])
            return A, b
        raise InvalidParameter("A ball has no half-space representation.")

    def contains(self, points: np.ndarray, slack: float = INSIDE_SLACK) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.kind == "box":
            return np.all((pts >= self.lower - slack) & (pts <= self.upper + slack), axis=-1)
        if self.kind == "ball":
            dist = np.sqrt(np.sum((pts - self.center) ** 2, axis=-1))
            return dist <= self.radius + slack
        A, b = self.constraint_matrix()
        return np.all(pts @ A.T - b <= slack, axis=-1)

    def exit_distance(self, points: np.ndarray, direction: np.ndarray) -> np.ndarray:
        """Distance from inside points to the boundary along a unit direction."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.asarray(direction, dtype=float)
        if self.kind == "ball":
            rel = pts - self.center
            b = rel @ d
            c = np.sum(rel * rel, axis=-1) - self.radius ** 2
            t = -b + np.sqrt(np.maximum(b * b - c, 0.0))
            return np.maximum(t, 0.0)
        A, b = self.constraint_matrix()
        rate = A @ d
        gap = b[None, :] - pts @ A.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(rate[None, :] > 0, gap / rate[None, :], np.inf)
        return np.maximum(np.min(t, axis=-1), 0.0)

    def vertices(self) -> np.ndarray:
        if self.kind == "ball":
            raise InvalidParameter("A ball has no vertices.")
        if self.kind == "box":
            corners = itertools.product(*zip(self.lower, self.upper))
            return np.array(list(corners), dtype=float)
        A, b = self.constraint_matrix()
        return _enumerate_vertices(A, b)

    def is_on_boundary(self, p: np.ndarray, tol: float = ON_BOUNDARY_TOL) -> bool:
        p = np.asarray(p, dtype=float)
        if self.kind == "ball":
            return abs(np.linalg.norm(p - self.center) - self.radius) <= tol
        A, b = self.constraint_matrix()
        slack = A @ p - b
        return bool(np.all(slack <= tol) and np.any(np.abs(slack) <= tol))


def _polytope_bbox(A: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = A.shape[1]
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(n):
        for sign, store in ((1.0, lo), (-1.0, hi)):
            c = np.zeros(n)
            c[i] = sign
            res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
            if res.status == 4:
                # Presolve can report "unbounded or infeasible"; a zero objective tells them apart.
                feasible = linprog(
                    np.zeros(n), A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs"
                )
                if feasible.status == 2:
                    raise DegenerateDomain("Polytope is empty.")
                raise UnboundedDomain("Polytope is unbounded.")
            if res.status == 3:
                raise UnboundedDomain("Polytope is unbounded.")
            if res.status == 2:
                raise DegenerateDomain("Polytope is empty.")
            if not res.success:
                raise DegenerateDomain(f"Polytope extent LP failed: {res.message}")
            store[i] = sign * res.fun
    # Chebyshev ball radius must be positive for a nonempty interior.
    norms = np.linalg.norm(A, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_cheb = np.hstack([A, norms[:, None]])
    res = linprog(
        c, A_ub=A_cheb, b_ub=b, bounds=[(None, None)] * n + [(0, None)], method="highs"
    )
    if not res.success or -res.fun <= 1e-12:
        raise DegenerateDomain("Polytope has an empty interior.")
    return lo, hi


def _enumerate_vertices(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = A.shape[1]
    found: List[np.ndarray] = []
    for rows in itertools.combinations(range(A.shape[0]), n):
        sub = A[list(rows)]
        if np.linalg.matrix_rank(sub) < n:
            continue
        v = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ v - b <= 1e-9):
            if not any(np.allclose(v, w, atol=1e-9) for w in found):
                found.append(v)
    if not found:
        raise DegenerateDomain("Polytope has no vertices.")
    return np.array(found)


def diameter(domain: ConvexDomain) -> float:
    if domain.kind == "box":
        return float(np.linalg.norm(domain.upper - domain.lower))
    if domain.kind == "ball":
        return 2.0 * domain.radius
    verts = domain.vertices()
    if len(verts) < 2:
        return 0.0
    return float(np.max(pdist(verts)))


def supporting_hyperplane(domain: ConvexDomain, p: Sequence[float]) -> Tuple[np.ndarray, float]:
    """Inward unit normal and offset with ``d_p(y) = <normal, y> - offset >= 0`` on the domain."""
    p = np.asarray(p, dtype=float)
    if not domain.is_on_boundary(p):
        raise NotOnBoundary(f"Point {p.tolist()} is not on the domain boundary.")
    if domain.kind == "ball":
        normal = (domain.center - p) / np.linalg.norm(domain.center - p)
    else:
        A, b = domain.constraint_matrix()
        active = np.flatnonzero(np.abs(A @ p - b) <= ON_BOUNDARY_TOL)
        normal = -A[active[0]]
    return normal, float(normal @ p)


def plane_distance(points: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    return np.asarray(points, dtype=float) @ normal - offset


def boundary_anchors(domain: ConvexDomain, per_face: int = 8, around_ball: int = 16) -> np.ndarray:
    """Deterministic sample of boundary points used by the barrier monitors."""
    n = domain.dim
    if domain.kind == "ball":
        if n == 2:
            angles = 2.0 * np.pi * np.arange(around_ball) / around_ball
            dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        else:
            raw = qmc.Sobol(d=n, scramble=False).random(around_ball) * 2.0 - 1.0
            raw[np.all(np.abs(raw) < 1e-12, axis=1)] = 1.0
            dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        return domain.center + domain.radius * dirs

    A, b = domain.constraint_matrix()
    verts = domain.vertices()
    anchors = []
    for a, off in zip(A, b):
        face = verts[np.abs(verts @ a - off) <= ON_BOUNDARY_TOL]
        if len(face) < n:
            continue
        centroid = face.mean(axis=0)
        rings = math.ceil(per_face / len(face))
        for k in range(per_face):
            w = (k // len(face) + 1) / (rings + 1)
            anchors.append(centroid + w * (face[k % len(face)] - centroid))
    return np.array(anchors)


def c_strides(shape: Sequence[int]) -> Tuple[int, ...]:
    out = []
    acc = 1
    for extent in reversed(tuple(shape)):
        out.append(acc)
        acc *= extent
    return tuple(reversed(out))


def stencil_offsets(n: int) -> np.ndarray:
    """Axis offsets (+e_i, -e_i per axis) followed by the diagonal offsets."""
    offs = []
    for i in range(n):
        for s in (1, -1):
            e = np.zeros(n, dtype=np.int64)
            e[i] = s
            offs.append(e)
    for i, j in itertools.combinations(range(n), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            e = np.zeros(n, dtype=np.int64)
            e[i] = si
            e[j] = sj
            offs.append(e)
    return np.array(offs)


@dataclass(frozen=True, eq=False)
class Grid:
    domain: ConvexDomain
    h: float
    origin: np.ndarray
    shape: Tuple[int, ...]
    classes: np.ndarray  # (N,) int8, flat C order
    points: np.ndarray  # (N, n) lattice locations
    offsets: np.ndarray  # (K, n) stencil offsets, see stencil_offsets
    flat_offsets: np.ndarray  # (K,) the same offsets as flat index steps
    reach: np.ndarray  # (N, K) multiple of offset k where Interior rows read the stencil
    crossing_of: np.ndarray  # (N, K) index into crossing_points, -1 for a lattice read
    crossing_points: np.ndarray  # (G, n) exit points on the boundary
    interior: np.ndarray  # flat indices, ascending
    boundary: np.ndarray  # flat indices, ascending

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def crossing_count(self) -> int:
        return len(self.crossing_points)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> Tuple[int, ...]:
        return c_strides(self.shape)

    @property
    def active(self) -> np.ndarray:
        """Flat indices of all non-Exterior nodes in lexicographic order."""
        return np.flatnonzero(self.classes != EXTERIOR)

    def flat(self, node: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in node), self.shape))

    def node(self, flat: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(flat), self.shape))

    def offset(self, delta: Sequence[int]) -> int:
        return int(sum(int(d) * s for d, s in zip(delta, self.strides)))

    def class_of(self, node: Sequence[int]) -> int:
        if any(i < 0 or i >= e for i, e in zip(node, self.shape)):
            return EXTERIOR
        return int(self.classes[self.flat(node)])

    def lattice_point(self, node: Sequence[int]) -> np.ndarray:
        return self.origin + self.h * np.asarray(node, dtype=float)


def build_grid(domain: ConvexDomain, h: float) -> Grid:
    if not (math.isfinite(h) and h > 0):
        raise InvalidParameter(f"Grid spacing must be positive, got {h!r}.")
    lo, hi = domain.bbox
    n = domain.dim
    shape = tuple(int(math.floor((hi[i] - lo[i]) / h + 1e-9)) + 1 for i in range(n))
    idx = np.indices(shape).reshape(n, -1).T
    lattice = lo + h * idx.astype(float)
    inside = domain.contains(lattice).reshape(shape)

    offsets = stencil_offsets(n)
    padded = np.pad(inside, 1, constant_values=False)

    def shifted(arr: np.ndarray, delta: np.ndarray) -> np.ndarray:
        sl = tuple(slice(1 + d, 1 + d + e) for d, e in zip(delta, shape))
        return arr[sl]

    interior = inside.copy()
    for delta in offsets:
        interior &= shifted(padded, delta)

    padded_int = np.pad(interior, 1, constant_values=False)
    near = np.zeros(shape, dtype=bool)
    for delta in offsets:
        near |= shifted(padded_int, -delta)
    boundary = near & ~interior

    classes = np.full(shape, EXTERIOR, dtype=np.int8)
    classes[interior] = INTERIOR
    classes[boundary] = BOUNDARY
    classes = classes.ravel()

    if not np.any(classes == INTERIOR):
        raise DegenerateGrid(f"No interior node for h={h!r}; refine the grid.")

    lengths = np.linalg.norm(offsets, axis=1)
    unit = offsets / lengths[:, None]
    flat_offsets = offsets @ np.asarray(c_strides(shape), dtype=np.int64)
    inside_flat = inside.ravel()
    interior_flat = np.flatnonzero(classes == INTERIOR)
    boundary_flat = np.flatnonzero(classes == BOUNDARY)

    reach = np.full((len(classes), len(offsets)), float(h))
    crossing_of = np.full((len(classes), len(offsets)), -1, dtype=np.int64)
    crossings: List[np.ndarray] = []
    count = 0
    for k, delta in enumerate(offsets):
        src = interior_flat[classes[interior_flat + flat_offsets[k]] == BOUNDARY]
        if not len(src):
            continue
        # The boundary crosses between the neighbour and the lattice point after it.
        beyond = idx[src] + 2 * delta
        in_range = np.all((beyond >= 0) & (beyond < np.asarray(shape)), axis=1)
        beyond_inside = np.zeros(len(src), dtype=bool)
        beyond_inside[in_range] = inside_flat[np.ravel_multi_index(beyond[in_range].T, shape)]
        src = src[~beyond_inside]
        if not len(src):
            continue
        scale = domain.exit_distance(lattice[src], unit[k]) / lengths[k]
        moved = scale > h * (1.0 + CROSSING_TOL)
        src, scale = src[moved], scale[moved]
        if not len(src):
            continue
        reach[src, k] = scale
        crossing_of[src, k] = np.arange(count, count + len(src))
        crossings.append(lattice[src] + scale[:, None] * delta)
        count += len(src)
    crossing_points = np.concatenate(crossings) if crossings else np.zeros((0, n))

    logger.debug(
        "grid: shape=%s interior=%d boundary=%d crossings=%d h=%g",
        shape, len(interior_flat), len(boundary_flat), count, h,
    )
    return Grid(
        domain=domain,
        h=float(h),
        origin=lo.copy(),
        shape=shape,
        classes=classes,
        points=lattice,
        offsets=offsets,
        flat_offsets=flat_offsets,
        reach=reach,
        crossing_of=crossing_of,
        crossing_points=crossing_points,
        interior=interior_flat,
        boundary=boundary_flat,
    )
