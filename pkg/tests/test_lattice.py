import math

import numpy as np
import pytest

from app.errors import (
    DegenerateDomain,
    DegenerateGrid,
    InvalidParameter,
    NotOnBoundary,
    UnboundedDomain,
)
from app.lattice import (
    BOUNDARY,
    EXTERIOR,
    INTERIOR,
    ConvexDomain,
    boundary_anchors,
    build_grid,
    diameter,
    plane_distance,
    stencil_offsets,
    supporting_hyperplane,
)

S = math.sqrt(0.5)


def unit_square():
    return ConvexDomain.box([0.0, 0.0], [1.0, 1.0])


def right_triangle():
    return ConvexDomain.polytope([((-1.0, 0.0), 0.0), ((0.0, -1.0), 0.0), ((S, S), S)])


def test_unit_square_coarse_grid_has_one_interior_node():
    grid = build_grid(unit_square(), 0.5)
    assert grid.shape == (3, 3)
    assert grid.interior.tolist() == [4]
    assert len(grid.boundary) == 8
    assert not np.any(grid.classes == EXTERIOR)


def test_unit_square_quarter_spacing_counts():
    grid = build_grid(unit_square(), 0.25)
    assert grid.shape == (5, 5)
    assert len(grid.interior) == 9
    assert len(grid.boundary) == 16
    for flat in grid.interior:
        i, j = grid.node(flat)
        assert 1 <= i <= 3 and 1 <= j <= 3


def test_box_boundary_nodes_stay_on_lattice():
    grid = build_grid(unit_square(), 0.25)
    for flat in grid.boundary:
        expected = grid.lattice_point(grid.node(flat))
        assert np.allclose(grid.points[flat], expected, atol=1e-12)
    assert grid.crossing_count == 0
    assert np.all(grid.reach[grid.interior] == 0.25)
    assert np.all(grid.crossing_of[grid.interior] == -1)


def test_box_off_lattice_face_gets_crossings_at_the_face():
    grid = build_grid(ConvexDomain.box([0.0, 0.0], [1.0, 1.0]), 0.3)
    # Lattice stops at 0.9; the upper faces are read at x = 1 and y = 1.
    assert grid.crossing_count > 0
    pts = grid.crossing_points
    on_face = np.isclose(pts[:, 0], 1.0, atol=1e-12) | np.isclose(pts[:, 1], 1.0, atol=1e-12)
    assert np.all(on_face)
    axis = grid.reach[grid.interior][:, 0]
    assert sorted(set(np.round(axis, 12).tolist())) == [0.3, 0.4]


def test_ball_interior_count_matches_brute_force():
    h = 0.1
    grid = build_grid(ConvexDomain.ball([0.0, 0.0], 1.0), h)
    assert grid.shape == (21, 21)

    def inside(i, j):
        if not (0 <= i < 21 and 0 <= j < 21):
            return False
        x = -1.0 + h * i
        y = -1.0 + h * j
        return np.sqrt(x * x + y * y) <= 1.0 + 1e-12

    expected = 0
    for i in range(21):
        for j in range(21):
            if all(inside(i + di, j + dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)):
                expected += 1
    assert len(grid.interior) == expected


def test_ball_crossings_lie_on_circle_within_two_steps():
    h = 0.1
    grid = build_grid(ConvexDomain.ball([0.0, 0.0], 1.0), h)
    assert grid.crossing_count > 0
    radii = np.linalg.norm(grid.crossing_points, axis=1)
    assert np.max(np.abs(radii - 1.0)) <= 1e-12
    used = grid.crossing_of[grid.interior] >= 0
    scales = grid.reach[grid.interior][used]
    assert np.all(scales > h) and np.all(scales <= 2.0 * h + 1e-12)
    assert np.all(grid.reach[grid.interior][~used] == h)


def test_ball_boundary_nodes_are_lattice_points_near_the_circle():
    h = 0.1
    grid = build_grid(ConvexDomain.ball([0.0, 0.0], 1.0), h)
    radii = np.linalg.norm(grid.points[grid.boundary], axis=1)
    assert np.all(radii <= 1.0 + 1e-12)
    assert np.all(radii >= 1.0 - np.sqrt(2.0) * h - 1e-12)


def test_each_crossing_is_read_by_exactly_one_stencil_arm():
    grid = build_grid(ConvexDomain.ball([0.0, 0.0], 1.0), 0.1)
    used = grid.crossing_of[grid.crossing_of >= 0]
    assert sorted(used.tolist()) == list(range(grid.crossing_count))
    rows, ks = np.nonzero(grid.crossing_of >= 0)
    expected = grid.points[rows] + grid.reach[rows, ks][:, None] * grid.offsets[ks]
    assert np.allclose(grid.crossing_points[grid.crossing_of[rows, ks]], expected, atol=1e-15)


def test_triangle_crossings_lie_on_boundary():
    domain = right_triangle()
    grid = build_grid(domain, 0.07)
    assert len(grid.interior) > 0
    assert grid.crossing_count > 0
    for p in grid.crossing_points:
        assert domain.is_on_boundary(p)
    assert np.all(domain.contains(grid.points[grid.boundary]))


def test_every_interior_stencil_neighbour_is_active():
    grid = build_grid(right_triangle(), 0.05)
    for delta in stencil_offsets(2):
        step = grid.offset(delta)
        assert np.all(grid.classes[grid.interior + step] != EXTERIOR)


def test_axis_permutation_transposes_classification():
    wide = build_grid(ConvexDomain.box([0.0, 0.0], [2.0, 1.0]), 0.25)
    tall = build_grid(ConvexDomain.box([0.0, 0.0], [1.0, 2.0]), 0.25)
    assert wide.shape == (9, 5) and tall.shape == (5, 9)
    assert np.array_equal(wide.classes.reshape(wide.shape).T, tall.classes.reshape(tall.shape))


def test_grid_without_interior_nodes_is_degenerate():
    with pytest.raises(DegenerateGrid):
        build_grid(unit_square(), 0.6)


def test_nonpositive_spacing_rejected():
    with pytest.raises(InvalidParameter):
        build_grid(unit_square(), 0.0)


def test_node_indexing_round_trip():
    grid = build_grid(unit_square(), 0.25)
    assert grid.flat((2, 3)) == 13
    assert grid.node(13) == (2, 3)
    assert grid.class_of((2, 2)) == INTERIOR
    assert grid.class_of((0, 2)) == BOUNDARY
    assert grid.class_of((-1, 2)) == EXTERIOR
    assert grid.class_of((5, 0)) == EXTERIOR


def test_stencil_offsets_order():
    offs = stencil_offsets(2)
    assert offs[:4].tolist() == [[1, 0], [-1, 0], [0, 1], [0, -1]]
    assert len(offs) == 8
    assert len(stencil_offsets(3)) == 6 + 12


@pytest.mark.parametrize(
    "domain, expected",
    [
        (ConvexDomain.box([0.0, 0.0], [1.0, 1.0]), math.sqrt(2.0)),
        (ConvexDomain.ball([3.0, -1.0], 0.5), 1.0),
        (right_triangle(), math.sqrt(2.0)),
        (ConvexDomain.box([0.0, 0.0, 0.0], [1.0, 2.0, 2.0]), 3.0),
    ],
)
def test_diameter(domain, expected):
    assert diameter(domain) == pytest.approx(expected, rel=1e-12)


def test_supporting_hyperplane_on_box_face():
    normal, offset = supporting_hyperplane(unit_square(), [1.0, 0.5])
    assert normal.tolist() == [-1.0, 0.0]
    assert offset == pytest.approx(-1.0)
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [0.3, 0.7]])
    assert np.all(plane_distance(pts, normal, offset) >= 0.0)


def test_supporting_hyperplane_on_ball_points_inward():
    ball = ConvexDomain.ball([0.0, 0.0], 1.0)
    normal, offset = supporting_hyperplane(ball, [0.0, 1.0])
    assert np.allclose(normal, [0.0, -1.0])
    assert offset == pytest.approx(-1.0)
    assert plane_distance(np.array([0.0, -1.0]), normal, offset) == pytest.approx(2.0)


def test_supporting_hyperplane_rejects_interior_point():
    with pytest.raises(NotOnBoundary):
        supporting_hyperplane(unit_square(), [0.5, 0.5])


def test_polytope_vertices_of_triangle():
    verts = right_triangle().vertices()
    assert len(verts) == 3
    for corner in ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]):
        assert np.min(np.linalg.norm(verts - np.array(corner), axis=1)) <= 1e-9


def test_unbounded_polytope_rejected():
    with pytest.raises(UnboundedDomain):
        ConvexDomain.polytope([((1.0, 0.0), 1.0)])
    with pytest.raises(UnboundedDomain):
        ConvexDomain.polytope([])


def test_non_unit_normal_rejected():
    with pytest.raises(InvalidParameter):
        ConvexDomain.polytope([((2.0, 0.0), 1.0), ((-1.0, 0.0), 0.0)])


def test_empty_polytope_rejected():
    with pytest.raises(DegenerateDomain):
        ConvexDomain.polytope(
            [((1.0, 0.0), 0.0), ((-1.0, 0.0), -1.0), ((0.0, 1.0), 1.0), ((0.0, -1.0), 1.0)]
        )


def test_flat_box_rejected():
    with pytest.raises(DegenerateDomain):
        ConvexDomain.box([0.0, 0.0], [1.0, 0.0])


def test_boundary_anchors_lie_on_boundary():
    for domain in (unit_square(), right_triangle(), ConvexDomain.ball([0.0, 0.0], 2.0)):
        anchors = boundary_anchors(domain)
        assert len(anchors) > 0
        for p in anchors:
            assert domain.is_on_boundary(p)
