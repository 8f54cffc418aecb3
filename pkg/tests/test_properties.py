import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from app.analysis import barrier_params, vk_for_rate
from app.fields import AffineField
from app.lattice import ConvexDomain, build_grid
from app.metric import evaluate_nodes, induced_metric, singular_values
from app.stencil import GraphMap

entries = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False, allow_infinity=False)
shapes = st.tuples(st.integers(2, 4), st.integers(1, 3))

GRID = build_grid(ConvexDomain.box([0.0, 0.0], [1.0, 1.0]), 0.1)


@st.composite
def jacobians(draw):
    n, m = draw(shapes)
    return draw(arrays(np.float64, (n, m), elements=entries))


@st.composite
def spacelike_jacobians(draw):
    J = draw(jacobians())
    top = np.linalg.svd(J, compute_uv=False)[0]
    scale = draw(st.floats(min_value=0.0, max_value=0.99))
    if top < 1e-100:
        return np.zeros_like(J)
    return J * (scale / top)


@settings(max_examples=60, deadline=None)
@given(jacobians())
def test_singular_values_match_svd(J):
    lam = singular_values(J)
    n, m = J.shape
    assert lam.shape == (n,)
    assert np.all(lam >= 0.0)
    assert np.all(np.diff(lam) <= 0.0)
    ref = np.zeros(n)
    sv = np.linalg.svd(J, compute_uv=False)
    ref[: len(sv)] = sv
    # Square roots amplify eigenvalue error near zero.
    assert np.allclose(lam ** 2, ref ** 2, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(spacelike_jacobians())
def test_inverse_metric_eigenvalues_are_bounded(J):
    metric = induced_metric(J)
    lam = singular_values(J)
    eig = np.linalg.eigvalsh(0.5 * (metric.g_inv + metric.g_inv.T))
    assert eig.min() >= 1.0 - 1e-10
    assert eig.max() <= 1.0 / (1.0 - lam[0] ** 2) + 1e-8


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, (2, 2), elements=st.floats(-0.45, 0.45)),
    arrays(np.float64, (2,), elements=st.floats(-5.0, 5.0)),
)
def test_affine_maps_have_zero_tension(A, b):
    f = GraphMap.sample(GRID, AffineField(A=A, b=b))
    geo = evaluate_nodes(f, GRID.interior)
    assert np.max(np.abs(geo.tension)) <= 1e-11


@settings(max_examples=30, deadline=None)
@given(st.integers(1, len(GRID.interior) - 1), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_splitting_a_batch_changes_nothing(cut, a, c):
    values = np.zeros((GRID.size, 1))
    x, y = GRID.points[:, 0], GRID.points[:, 1]
    values[:, 0] = a * x * x + c * x * y * y
    f = GraphMap(GRID, values)
    whole = evaluate_nodes(f, GRID.interior)
    head = evaluate_nodes(f, GRID.interior[:cut])
    tail = evaluate_nodes(f, GRID.interior[cut:])
    assert np.array_equal(whole.tension, np.concatenate([head.tension, tail.tension]))
    assert np.array_equal(whole.spectrum, np.concatenate([head.spectrum, tail.spectrum]))


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.1, 5.0),
    st.floats(0.0, 0.95),
    st.integers(2, 5),
    st.floats(0.0, 2.0),
    st.floats(0.05, 20.0),
)
def test_optimal_rate_minimises_barrier_slope(delta, xi, n, sup, factor):
    best = barrier_params(delta, xi, n, sup)
    other = vk_for_rate(best.k * factor, delta, xi, n, sup)
    assert other >= best.vk * (1.0 - 1e-12) - 1e-300
