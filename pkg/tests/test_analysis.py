import math

import numpy as np
import pytest

from app.analysis import (
    barrier_constraint_gap,
    barrier_margin,
    barrier_params,
    boundary_gradient_bound,
    build_monitor,
    check_condition,
    condition_lhs,
    eta0,
    first_ring,
    hessian_direction_sup,
    hessian_sup_upper,
    psi_norms,
    record,
    theoretical_xi,
    vk_for_rate,
)
from app.errors import InvalidParameter, InvalidXi, NonFiniteState, NotSpacelike
from app.fields import AffineField, PolynomialField
from app.flow import DirichletFlow, initial_map
from app.lattice import ConvexDomain, build_grid, supporting_hyperplane
from app.models import ProblemSpec
from app.scenario import prepare

from conftest import quadratic_psi, scenario_dict

SQRT2 = math.sqrt(2.0)
UNIT = ConvexDomain.box([0.0, 0.0], [1.0, 1.0])


def test_quadratic_norms_on_unit_square():
    psi = PolynomialField(n=2, components=((((2, 0), 0.2), ((0, 2), 0.2)),))
    norms = psi_norms(psi, UNIT, 0.1)
    assert norms.sup_dpsi_boundary == pytest.approx(0.4 * SQRT2, rel=1e-12)
    assert norms.sup_dpsi_domain == pytest.approx(0.4 * SQRT2, rel=1e-12)
    assert norms.sup_d2psi == pytest.approx(0.4, rel=1e-12)
    assert norms.sup_d2psi_upper == pytest.approx(0.4, rel=1e-12)
    assert eta0(psi, UNIT, 0.1) == pytest.approx(1.0 / math.sqrt(0.68), rel=1e-12)


def test_eta0_of_steep_map_raises_with_point():
    psi = AffineField(A=np.array([[1.2, 0.0]]), b=np.zeros(1))
    with pytest.raises(NotSpacelike) as info:
        eta0(psi, UNIT, 0.1)
    assert info.value.lambda_max == pytest.approx(1.2)
    assert info.value.point is not None


def test_eta0_of_catenoid_through_its_axis_is_non_finite():
    from app.oracles import lorentzian_catenoid

    with pytest.raises(NonFiniteState, match="non-finite derivative"):
        eta0(lorentzian_catenoid(1.0), ConvexDomain.box([-0.5, -0.5], [0.5, 0.5]), 0.1)


def test_hessian_direction_sup_in_three_dimensions():
    H = np.zeros((1, 1, 3, 3))
    H[0, 0] = np.diag([1.0, -2.0, 0.5])
    assert hessian_direction_sup(H) == pytest.approx(2.0, rel=1e-4)
    assert hessian_sup_upper(H) == pytest.approx(2.0, rel=1e-12)


def test_hessian_direction_sup_couples_components():
    H = np.zeros((1, 2, 2, 2))
    H[0, 0] = np.diag([1.0, 0.0])
    H[0, 1] = np.diag([0.0, 1.0])
    assert hessian_direction_sup(H) == pytest.approx(1.0, rel=1e-12)
    assert hessian_sup_upper(H) == pytest.approx(SQRT2, rel=1e-12)


@pytest.mark.parametrize(
    "psi, expected, satisfied",
    [
        ({"type": "catalog", "id": "constant", "params": {"value": [0.0]}}, 0.0, True),
        ({"type": "affine", "matrix": [[0.3, 0.0]], "offset": [0.0]}, SQRT2 * 0.3, True),
        (quadratic_psi(0.2), 8.0 * SQRT2 * 0.4 / 0.68 + 0.8, False),
    ],
)
def test_condition_worked_examples(psi, expected, satisfied):
    report = check_condition(ProblemSpec.model_validate(scenario_dict(psi=psi)))
    assert report.lhs == pytest.approx(expected, rel=1e-9, abs=1e-15)
    assert report.satisfied is satisfied
    assert report.delta == pytest.approx(SQRT2)
    assert report.initially_spacelike
    assert report.sampling_factor == 4


def test_condition_for_steep_map_raises():
    spec = ProblemSpec.model_validate(
        scenario_dict(psi={"type": "affine", "matrix": [[1.2, 0.0]], "offset": [0.0]})
    )
    with pytest.raises(NotSpacelike):
        check_condition(spec)


def test_condition_lhs_formula():
    assert condition_lhs(2, 1.0, 1.0, 0.0, 0.5) == pytest.approx(SQRT2 * 0.5)
    assert condition_lhs(3, 2.0, 1.5, 0.1, 0.0) == pytest.approx(4 * 3 * 2.25 * 2.0 * 0.1)


def test_barrier_params_examples():
    params = barrier_params(delta=1.0, xi=0.0, n=2, sup_d2psi=1.0)
    assert (params.k, params.vk, params.v) == (1.0, 8.0, 8.0)
    params = barrier_params(delta=2.0, xi=0.5, n=3, sup_d2psi=0.1)
    assert params.k == pytest.approx(0.5)
    assert params.vk == pytest.approx(4.8)
    assert params.v == pytest.approx(9.6)


@pytest.mark.parametrize("xi", [1.0, 1.5, -0.1, float("nan")])
def test_invalid_xi(xi):
    with pytest.raises(InvalidXi):
        barrier_params(delta=1.0, xi=xi, n=2, sup_d2psi=1.0)
    with pytest.raises(InvalidXi):
        boundary_gradient_bound(1.0, xi, 2, 1.0, 0.1)


def test_optimal_rate_saturates_constraint():
    rng = np.random.default_rng(4)
    for _ in range(50):
        delta = rng.uniform(0.1, 5.0)
        xi = rng.uniform(0.0, 0.95)
        n = int(rng.integers(2, 6))
        sup = rng.uniform(0.0, 2.0)
        params = barrier_params(delta, xi, n, sup)
        scale = max(1.0, n * sup / (1.0 - xi))
        assert abs(barrier_constraint_gap(params, delta, xi, n, sup)) <= 1e-12 * scale
        assert vk_for_rate(params.k, delta, xi, n, sup) == pytest.approx(params.vk, rel=1e-12)
        for factor in (0.25, 0.5, 2.0, 4.0):
            assert vk_for_rate(params.k * factor, delta, xi, n, sup) >= params.vk * (1 - 1e-12)


def test_vk_for_rate_rejects_nonpositive_rate():
    with pytest.raises(InvalidParameter):
        vk_for_rate(0.0, 1.0, 0.0, 2, 1.0)


def test_theoretical_xi_turns_bound_into_condition():
    rng = np.random.default_rng(9)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        e0 = rng.uniform(1.0, 3.0)
        delta = rng.uniform(0.1, 5.0)
        d2 = rng.uniform(0.0, 1.0)
        d1 = rng.uniform(0.0, 0.99)
        lhs = condition_lhs(n, delta, e0, d2, d1)
        bound = boundary_gradient_bound(delta, theoretical_xi(e0), n, d2, d1)
        assert bound == pytest.approx(lhs, rel=1e-13)
    with pytest.raises(InvalidParameter):
        theoretical_xi(0.5)


def test_first_ring_of_small_square():
    grid = build_grid(UNIT, 0.25)
    ring = first_ring(grid)
    assert len(ring) == 8
    centre = grid.flat((2, 2))
    assert centre not in grid.interior[ring]


def flow_state(spec):
    scenario = prepare(spec)
    f0 = initial_map(scenario)
    flow = DirichletFlow(scenario.grid, f0.values[scenario.grid.boundary])
    return scenario, f0, flow.state(f0)


def test_barrier_margin_is_nonnegative_at_start():
    scenario, f0, state = flow_state(ProblemSpec.model_validate(scenario_dict(psi=quadratic_psi(0.1))))
    normal, offset = supporting_hyperplane(scenario.domain, [1.0, 0.5])
    params = barrier_params(math.sqrt(2.0), 0.0, 2, 0.2, p=np.array([1.0, 0.5]), normal=normal, offset=offset)
    for sign in (1, -1):
        margin = barrier_margin(state, params, 0, sign, f0.values)
        assert -1e-12 <= margin <= 1e-12


def test_record_for_affine_start():
    spec = ProblemSpec.model_validate(scenario_dict())
    scenario, f0, state = flow_state(spec)
    monitor = build_monitor(scenario, f0)
    rec = record(state, monitor, state.sup_df ** 2)
    assert rec.step == 0
    assert rec.max_principle_margin == 0.0
    assert rec.max_cosh_theta == pytest.approx(1.0 / math.sqrt(0.91), rel=1e-12)
    assert rec.sup_df == pytest.approx(0.3, rel=1e-12)
    assert rec.boundary_grad_margin == pytest.approx(SQRT2 * 0.3 - 0.3, rel=1e-9)
    assert rec.barrier_margin >= -1e-12
    assert rec.product_bound_margin == pytest.approx(1.0 - 0.91, rel=1e-6)
