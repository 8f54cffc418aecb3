"""Finite-difference gradients and Hessians of grid functions.

This is the only module that differentiates discrete data. Interior stencils
are second order. Where a stencil arm ends at a boundary crossing the
nonuniform three-point formulas take over, and mixed entries come from the
crossing's own offset; both are exact on quadratics and first order there.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ExteriorNode, InvalidParameter
from .fields import MapField
from .lattice import INTERIOR, Grid

# Sign pairs of the four diagonal offsets of one axis pair, in stencil order.
DIAGONAL_SIGNS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True, eq=False)
class GraphMap:
    """Values of f at every node plus psi at the grid's boundary crossings.

    Exterior rows are zero and never read.
    """

    grid: Grid
    values: np.ndarray  # (N, m)
    crossing_values: Optional[np.ndarray] = None  # (G, m)

    def __post_init__(self):
        if self.crossing_values is None:
            if self.grid.crossing_count:
                raise InvalidParameter(
                    f"Grid has {self.grid.crossing_count} boundary crossings; their values are required."
                )
            object.__setattr__(self, "crossing_values", np.zeros((0, self.values.shape[1])))

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @classmethod
    def sample(cls, grid: Grid, field: MapField) -> "GraphMap":
        values = np.zeros((grid.size, field.m))
        active = grid.active
        values[active] = field.value(grid.points[active])
        crossing = field.value(grid.crossing_points) if grid.crossing_count else None
        return cls(grid=grid, values=values, crossing_values=crossing)

    def replace(self, values: np.ndarray) -> "GraphMap":
        return GraphMap(grid=self.grid, values=values, crossing_values=self.crossing_values)


def require_interior(grid: Grid, node: Sequence[int]) -> int:
    if grid.class_of(node) != INTERIOR:
        raise ExteriorNode(f"Node {tuple(node)} is not an interior node.")
    return grid.flat(node)


def neighbour_values(f: GraphMap, nodes: np.ndarray, k: int) -> np.ndarray:
    """(K, m) values read by stencil offset ``k`` at Interior flat indices."""
    grid = f.grid
    vals = f.values[nodes + grid.flat_offsets[k]]
    crossing = grid.crossing_of[nodes, k]
    hit = crossing >= 0
    if np.any(hit):
        vals[hit] = f.crossing_values[crossing[hit]]
    return vals


def gradients(f: GraphMap, nodes: np.ndarray) -> np.ndarray:
    """Jacobians ``(K, n, m)`` at Interior flat indices."""
    grid = f.grid
    f0 = f.values[nodes]
    out = np.empty((len(nodes), grid.n, f.m))
    for i in range(grid.n):
        fp = neighbour_values(f, nodes, 2 * i)
        fm = neighbour_values(f, nodes, 2 * i + 1)
        a = grid.reach[nodes, 2 * i][:, None]
        b = grid.reach[nodes, 2 * i + 1][:, None]
        out[:, i, :] = (b * b * (fp - f0) + a * a * (f0 - fm)) / (a * b * (a + b))
    return out


def hessians(f: GraphMap, nodes: np.ndarray, jacobian: Optional[np.ndarray] = None) -> np.ndarray:
    """Hessian stacks ``(K, m, n, n)`` at Interior flat indices.

    ``jacobian`` (from ``gradients``) is only needed at nodes whose diagonal
    stencil meets a boundary crossing; it is computed when not given.
    """
    grid = f.grid
    n = grid.n
    h = grid.h
    f0 = f.values[nodes]
    out = np.empty((len(nodes), f.m, n, n))
    for i in range(n):
        fp = neighbour_values(f, nodes, 2 * i)
        fm = neighbour_values(f, nodes, 2 * i + 1)
        a = grid.reach[nodes, 2 * i][:, None]
        b = grid.reach[nodes, 2 * i + 1][:, None]
        out[:, :, i, i] = 2.0 * ((fp - f0) / a - (f0 - fm) / b) / (a + b)

    k = 2 * n
    for i in range(n):
        for j in range(i + 1, n):
            ks = range(k, k + 4)
            k += 4
            vals = [neighbour_values(f, nodes, q) for q in ks]
            cross = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h)
            irregular = np.flatnonzero(np.any(grid.crossing_of[nodes][:, list(ks)] >= 0, axis=1))
            if len(irregular):
                if jacobian is None:
                    jacobian = gradients(f, nodes)
                cross[irregular] = _mixed_from_crossings(
                    f0[irregular],
                    [v[irregular] for v in vals],
                    grid.reach[nodes[irregular]][:, list(ks)],
                    jacobian[irregular],
                    out[irregular],
                    i,
                    j,
                )
            out[:, :, i, j] = cross
            out[:, :, j, i] = cross
    return out


def _mixed_from_crossings(f0, vals, scales, J, H, i, j):
    """d_ij f from the four diagonal reads at scaled offsets s (si, sj).

    Each read gives f(x + d) - f0 - J.d - (H_ii d_i^2 + H_jj d_j^2) / 2 = H_ij d_i d_j
    for a quadratic; the four estimates are averaged.
    """
    acc = np.zeros_like(f0)
    for q, (si, sj) in enumerate(DIAGONAL_SIGNS):
        s = scales[:, q][:, None]
        di = si * s
        dj = sj * s
        rest = (
            vals[q]
            - f0
            - J[:, i, :] * di
            - J[:, j, :] * dj
            - 0.5 * (H[:, :, i, i] * di * di + H[:, :, j, j] * dj * dj)
        )
        acc += rest / (di * dj)
    return 0.25 * acc


def gradient_at(f: GraphMap, node: Sequence[int]) -> np.ndarray:
    flat = require_interior(f.grid, node)
    return gradients(f, np.array([flat]))[0]


def hessian_at(f: GraphMap, node: Sequence[int]) -> np.ndarray:
    flat = require_interior(f.grid, node)
    return hessians(f, np.array([flat]))[0]
