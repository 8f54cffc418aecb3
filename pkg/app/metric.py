"""Pointwise geometry of a spacelike graph in pseudo-Euclidean space.

For a Jacobian ``J`` (n x m) the induced metric is ``g = I - J J^T``; the
graph is spacelike exactly when every singular value of ``J`` is below one.
All kernels work on batches ``(K, ...)`` and treat every matrix of the batch
independently, so splitting a batch never changes a single bit of output.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientStencil, NotSpacelike
from .lattice import INTERIOR
from .stencil import GraphMap, require_interior, gradients, hessians

logger = logging.getLogger(__name__)

SPACELIKE_GUARD = 1e-6
JACOBI_TOL = 1e-13
MAX_SWEEPS = 64


def outer_gram(J: np.ndarray) -> np.ndarray:
    """``J J^T`` for a batch of Jacobians ``(K, n, m)``."""
    K, n, m = J.shape
    S = np.zeros((K, n, n))
    for i in range(n):
        for j in range(i, n):
            acc = np.zeros(K)
            for beta in range(m):
                acc = acc + J[:, i, beta] * J[:, j, beta]
            S[:, i, j] = acc
            S[:, j, i] = acc
    return S


def jacobi_eigenvalues(S: np.ndarray, tol: float = JACOBI_TOL) -> np.ndarray:
    """Eigenvalues of symmetric matrices ``(K, n, n)`` by cyclic Jacobi rotations."""
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[-1]
    diag_mask = np.eye(n, dtype=bool)
    limit = tol * np.maximum(1.0, np.sqrt(np.sum(A * A, axis=(1, 2))))
    for _ in range(MAX_SWEEPS):
        off = np.sqrt(np.sum(np.where(diag_mask, 0.0, A) ** 2, axis=(1, 2)))
        active = off > limit
        if not np.any(active):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                rotate = active & (apq != 0.0)
                if not np.any(rotate):
                    continue
                theta = (A[:, q, q] - A[:, p, p]) / (2.0 * np.where(rotate, apq, 1.0))
                t = np.copysign(1.0, theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(rotate, t, 0.0)
                c = (1.0 / np.sqrt(t * t + 1.0))[:, None]
                s = t[:, None] * c
                col_p = A[:, :, p].copy()
                col_q = A[:, :, q].copy()
                A[:, :, p] = c * col_p - s * col_q
                A[:, :, q] = s * col_p + c * col_q
                row_p = A[:, p, :].copy()
                row_q = A[:, q, :].copy()
                A[:, p, :] = c * row_p - s * row_q
                A[:, q, :] = s * row_p + c * row_q
                A[rotate, p, q] = 0.0
                A[rotate, q, p] = 0.0
    else:
        logger.warning("Jacobi iteration hit %d sweeps without converging", MAX_SWEEPS)
    return np.diagonal(A, axis1=1, axis2=2).copy()


def singular_values(J: np.ndarray) -> np.ndarray:
    """Singular values of ``J`` (n x m, or a batch), descending, zero-padded to n."""
    J = np.asarray(J, dtype=float)
    single = J.ndim == 2
    batch = J[None] if single else J
    eig = jacobi_eigenvalues(outer_gram(batch))
    lam = np.sqrt(np.maximum(eig, 0.0))
    lam = -np.sort(-lam, axis=1)
    return lam[0] if single else lam


@dataclass(frozen=True)
class InducedMetric:
    g: np.ndarray
    g_inv: np.ndarray
    det_g: np.ndarray


def _check_spacelike(lam: np.ndarray, guard: float, nodes: Optional[Sequence] = None) -> None:
    lam1 = lam[:, 0]
    bad = ~(lam1 < 1.0 - guard)
    if np.any(bad):
        worst = int(np.argmax(np.where(np.isfinite(lam1), lam1, np.inf)))
        node = None if nodes is None else nodes[worst]
        raise NotSpacelike(lam1[worst], node=node)


def _small_inverse(g: np.ndarray):
    n = g.shape[-1]
    if n == 2:
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
        inv = np.empty_like(g)
        inv[:, 0, 0] = g[:, 1, 1] / det
        inv[:, 1, 1] = g[:, 0, 0] / det
        inv[:, 0, 1] = -g[:, 0, 1] / det
        inv[:, 1, 0] = -g[:, 1, 0] / det
        return inv, det
    if n == 3:
        cof = np.empty_like(g)
        for i in range(3):
            for j in range(3):
                r = [k for k in range(3) if k != i]
                c = [k for k in range(3) if k != j]
                minor = g[:, r[0], c[0]] * g[:, r[1], c[1]] - g[:, r[0], c[1]] * g[:, r[1], c[0]]
                cof[:, i, j] = (-1.0) ** (i + j) * minor
        det = g[:, 0, 0] * cof[:, 0, 0] + g[:, 0, 1] * cof[:, 0, 1] + g[:, 0, 2] * cof[:, 0, 2]
        inv = np.transpose(cof, (0, 2, 1)) / det[:, None, None]
        return inv, det
    return np.linalg.inv(g), np.linalg.det(g)


def induced_metric(
    J: np.ndarray,
    spectrum: Optional[np.ndarray] = None,
    guard: float = SPACELIKE_GUARD,
    nodes: Optional[Sequence] = None,
) -> InducedMetric:
    J = np.asarray(J, dtype=float)
    single = J.ndim == 2
    batch = J[None] if single else J
    lam = singular_values(batch) if spectrum is None else np.atleast_2d(spectrum)
    _check_spacelike(lam, guard, nodes)
    n = batch.shape[1]
    g = np.eye(n)[None, :, :] - outer_gram(batch)
    g_inv, det = _small_inverse(g)
    if single:
        return InducedMetric(g=g[0], g_inv=g_inv[0], det_g=det[0])
    return InducedMetric(g=g, g_inv=g_inv, det_g=det)


def hyperbolic_angle(lam: np.ndarray) -> np.ndarray:
    """cosh(theta) = 1 / sqrt(prod(1 - lambda_i^2))."""
    lam = np.asarray(lam, dtype=float)
    single = lam.ndim == 1
    batch = lam[None] if single else lam
    _check_spacelike(batch, 0.0)
    prod = np.ones(batch.shape[0])
    for i in range(batch.shape[1]):
        prod = prod * (1.0 - batch[:, i] ** 2)
    cosh = 1.0 / np.sqrt(prod)
    return cosh[0] if single else cosh


def contract(g_inv: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``g^{ij} H[alpha, i, j]`` per node, summed in a fixed order."""
    K, m, n, _ = H.shape
    out = np.zeros((K, m))
    for a in range(m):
        acc = np.zeros(K)
        for i in range(n):
            for j in range(n):
                acc = acc + g_inv[:, i, j] * H[:, a, i, j]
        out[:, a] = acc
    return out


@dataclass(frozen=True)
class NodeGeometry:
    nodes: np.ndarray  # flat indices
    jacobian: np.ndarray  # (K, n, m)
    spectrum: np.ndarray  # (K, n)
    g_inv: np.ndarray  # (K, n, n)
    det_g: np.ndarray  # (K,)
    cosh_theta: np.ndarray  # (K,)
    tension: np.ndarray  # (K, m)


def evaluate_nodes(f: GraphMap, nodes: np.ndarray, guard: float = SPACELIKE_GUARD) -> NodeGeometry:
    """Jacobian, spectrum, metric and tension at a batch of Interior nodes."""
    J = gradients(f, nodes)
    lam = singular_values(J)
    grid = f.grid
    metric = induced_metric(J, spectrum=lam, guard=guard, nodes=_LazyNodes(grid, nodes))
    H = hessians(f, nodes, jacobian=J)
    return NodeGeometry(
        nodes=nodes,
        jacobian=J,
        spectrum=lam,
        g_inv=metric.g_inv,
        det_g=metric.det_g,
        cosh_theta=1.0 / np.sqrt(metric.det_g),
        tension=contract(metric.g_inv, H),
    )


class _LazyNodes:
    """Maps a batch position to a grid multi-index only when an error needs it."""

    def __init__(self, grid, nodes):
        self._grid = grid
        self._nodes = nodes

    def __getitem__(self, k):
        return self._grid.node(self._nodes[k])


def tension(f: GraphMap, node: Sequence[int]) -> np.ndarray:
    flat = require_interior(f.grid, node)
    return evaluate_nodes(f, np.array([flat])).tension[0]


def normality_pairing(f: GraphMap, nodes: np.ndarray) -> np.ndarray:
    """max_k |gbar(d_k F, Delta_g F)| at nodes whose axis neighbours are Interior.

    Delta_g F is evaluated in divergence form, (1/sqrt G) d_i(sqrt G g^ij d_j F),
    by centred differences of the flux at the axis neighbours.
    """
    grid = f.grid
    n, m = grid.n, f.m
    strides = grid.strides
    for s in strides:
        for nb in (nodes + s, nodes - s):
            if np.any(grid.classes[nb] != INTERIOR):
                raise InsufficientStencil("Normality needs Interior axis neighbours.")

    def flux(points: np.ndarray, i: int) -> np.ndarray:
        J = gradients(f, points)
        metric = induced_metric(J)
        sqrt_g = np.sqrt(metric.det_g)
        W = np.zeros((len(points), n + m))
        for j in range(n):
            coef = sqrt_g * metric.g_inv[:, i, j]
            W[:, j] += coef
            W[:, n:] += coef[:, None] * J[:, j, :]
        return W

    J0 = gradients(f, nodes)
    sqrt_g0 = np.sqrt(induced_metric(J0).det_g)
    lap = np.zeros((len(nodes), n + m))
    for i, s in enumerate(strides):
        lap += (flux(nodes + s, i) - flux(nodes - s, i)) / (2.0 * grid.h)
    lap /= sqrt_g0[:, None]

    pair = np.empty((len(nodes), n))
    for k in range(n):
        pair[:, k] = lap[:, k] - np.sum(J0[:, k, :] * lap[:, n:], axis=1)
    return np.max(np.abs(pair), axis=1)


def laplace_beltrami_normality(f: GraphMap, node: Sequence[int]) -> float:
    grid = f.grid
    if grid.class_of(node) != INTERIOR:
        raise InsufficientStencil(f"Node {tuple(node)} is not an interior node.")
    return float(normality_pairing(f, np.array([grid.flat(node)]))[0])


def second_ring(grid) -> np.ndarray:
    """Interior nodes whose axis neighbours are all Interior."""
    ok = np.ones(len(grid.interior), dtype=bool)
    for s in grid.strides:
        ok &= grid.classes[grid.interior + s] == INTERIOR
        ok &= grid.classes[grid.interior - s] == INTERIOR
    return grid.interior[ok]
