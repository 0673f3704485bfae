"""Tests for flow maps, pushforwards, and inverse flows."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from chronoflow import (
    BlowUpError,
    FlowMap,
    FlowSolver,
    Observable,
    PolynomialMap,
    VectorField,
    constant_field,
    eval_field,
    flow_map,
    flow_operator_apply,
    flow_pushforward,
    flow_with_pushforward,
    heisenberg_fields,
    inverse_flow,
    linear_field,
    order_probe,
    pushforward_field,
    rotation2d,
    zero_field,
)

SOLVER = FlowSolver(steps_per_unit_time=1000)
V1, V2 = heisenberg_fields()


def rotation_matrix(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def piecewise_benchmark():
    """Rotation for t < 0.5, then a constant drift; window [0, 1.5]."""
    rot = PolynomialMap.linear([[0.0, -1.0], [1.0, 0.0]])
    drift = PolynomialMap.constants([1.0, 0.0], 2)
    return VectorField.piecewise([(0.0, 0.5, rot), (0.5, 1.5, drift)])


def test_flow_map_rotation_quarter_turn():
    fm = FlowMap(rotation2d(), 0.0, math.pi / 2, SOLVER)
    assert np.linalg.norm(flow_map(fm, [1.0, 0.0]) - np.array([0.0, 1.0])) <= 1e-8


def test_flow_map_identity_when_t1_equals_t0():
    fm = FlowMap(rotation2d(), 0.3, 0.3, SOLVER)
    q = np.array([2.0, -1.0])
    assert_allclose(flow_map(fm, q), q)


def test_flow_map_heisenberg_closed_form():
    fm = FlowMap(V1, 0.0, 1.0, SOLVER)
    assert np.linalg.norm(flow_map(fm, [0.0, 1.0, 0.0])
                          - np.array([1.0, 1.0, -0.5])) <= 1e-10


def test_flow_pushforward_rotation():
    fm = FlowMap(rotation2d(), 0.0, math.pi / 2, SOLVER)
    assert np.linalg.norm(flow_pushforward(fm, [1.0, 0.0])
                          - rotation_matrix(math.pi / 2)) <= 1e-8


def test_flow_pushforward_constant_field_is_identity():
    fm = FlowMap(constant_field([2.0, -3.0]), 0.0, 0.7, SOLVER)
    assert_allclose(flow_pushforward(fm, [0.1, 0.2]), np.eye(2), atol=1e-12)


def test_flow_pushforward_heisenberg_v1():
    fm = FlowMap(V1, 0.0, 1.0, SOLVER)
    expected = np.eye(3)
    expected[2, 1] = -0.5
    assert np.linalg.norm(flow_pushforward(fm, [0.3, 0.4, 0.5]) - expected) <= 1e-10


def test_inverse_flow_round_trip_rotation():
    fm = FlowMap(rotation2d(), 0.0, 0.7, SOLVER)
    q = np.array([1.0, 2.0])
    assert np.linalg.norm(inverse_flow(fm, flow_map(fm, q)) - q) <= 1e-8


def test_inverse_flow_heisenberg():
    fm = FlowMap(V1, 0.0, 1.0, SOLVER)
    assert np.linalg.norm(inverse_flow(fm, [1.0, 1.0, -0.5])
                          - np.array([0.0, 1.0, 0.0])) <= 1e-8


def test_inverse_flow_trivial():
    fm = FlowMap(V2, 0.4, 0.4, SOLVER)
    assert_allclose(inverse_flow(fm, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("field,dim", [
    (rotation2d(), 2),
    (V1, 3),
    (piecewise_benchmark(), 2),
])
def test_semigroup_property(field, dim):
    rng = np.random.default_rng(19)
    t0, s, t = 0.0, 0.3, 1.0
    for _ in range(20):
        q = rng.uniform(-1, 1, dim)
        via = flow_map(FlowMap(field, s, t, SOLVER),
                       flow_map(FlowMap(field, t0, s, SOLVER), q))
        direct = flow_map(FlowMap(field, t0, t, SOLVER), q)
        assert np.linalg.norm(via - direct) <= 1e-8


@pytest.mark.parametrize("field,dim", [
    (rotation2d(), 2),
    (V1, 3),
    (piecewise_benchmark(), 2),
])
def test_inverse_property(field, dim):
    rng = np.random.default_rng(23)
    fm = FlowMap(field, 0.0, 1.0, SOLVER)
    for _ in range(20):
        q = rng.uniform(-1, 1, dim)
        assert np.linalg.norm(inverse_flow(fm, flow_map(fm, q)) - q) <= 1e-8


def test_pushforward_chain_rule():
    field = rotation2d()
    q = np.array([1.0, 0.5])
    full = flow_pushforward(FlowMap(field, 0.0, 1.0, SOLVER), q)
    first = flow_with_pushforward(FlowMap(field, 0.0, 0.4, SOLVER), q)
    second = flow_pushforward(FlowMap(field, 0.4, 1.0, SOLVER), first[0])
    assert np.linalg.norm(full - second @ first[1]) <= 1e-7


def test_first_order_expansion_slope():
    field = rotation2d()
    q = np.array([1.0, 0.0])
    v0 = eval_field(field, 0.0, q)

    def residual(t):
        return float(np.linalg.norm(
            flow_map(FlowMap(field, 0.0, t, SOLVER), q) - q - t * v0
        ))

    estimate = order_probe(residual, 0.5, 8)
    assert estimate.fitted_slope >= 1.8


def test_order4_convergence():
    # Truncation-dominated densities; at 1000 steps/unit the error sits at
    # roundoff (~1e-14) where the ratio is unobservable.
    exact = np.array([math.cos(1.0), math.sin(1.0)])
    errs = {}
    for spu in (16, 32):
        end = flow_map(FlowMap(rotation2d(), 0.0, 1.0, FlowSolver(spu)), [1.0, 0.0])
        errs[spu] = np.linalg.norm(end - exact)
    assert errs[16] / errs[32] >= 8.0


def test_blow_up_detection():
    # quadratic growth escapes in finite time
    pm = PolynomialMap(1, 1, [[(1.0, (2,))]])
    field = VectorField.autonomous(pm)
    with pytest.raises(BlowUpError) as info:
        flow_map(FlowMap(field, 0.0, 3.0, FlowSolver(100)), [1.0])
    assert info.value.step > 0


def test_flow_operator_apply_rotation():
    phi = Observable.coordinate(2, 0)
    fm = FlowMap(rotation2d(), 0.0, math.pi / 2, SOLVER)
    assert abs(flow_operator_apply(fm, phi, [1.0, 0.0])[0]) <= 1e-8


def test_flow_operator_apply_constant_observable():
    phi = Observable.constant([4.5], 3)
    fm = FlowMap(V1, 0.0, 0.8, SOLVER)
    assert_allclose(flow_operator_apply(fm, phi, [0.0, 1.0, 0.0]), [4.5])


def test_flow_operator_apply_heisenberg_height():
    phi = Observable.coordinate(3, 2)
    fm = FlowMap(V1, 0.0, 1.0, SOLVER)
    assert abs(flow_operator_apply(fm, phi, [0.0, 1.0, 0.0])[0] + 0.5) <= 1e-8


def test_pushforward_field_invariant_under_own_flow():
    # P_s composed with P_t commutes, so the field transports to itself.
    field = rotation2d()
    pf = pushforward_field(FlowMap(field, 0.0, 0.6, SOLVER), field, 0.0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        r = rng.uniform(-1, 1, 2)
        assert np.linalg.norm(pf(0.0, r) - eval_field(field, 0.0, r)) <= 1e-6


def test_pushforward_field_identity_flow():
    field = rotation2d()
    pf = pushforward_field(FlowMap(field, 0.2, 0.2, SOLVER), field, 0.0)
    r = np.array([0.4, -0.9])
    assert_allclose(pf(0.0, r), eval_field(field, 0.0, r), atol=1e-12)


def test_pushforward_field_translation_conjugates_linear():
    a = np.array([[0.0, 1.0], [0.5, -0.25]])
    c = np.array([0.3, -0.7])
    s = 0.8
    pf = pushforward_field(FlowMap(constant_field(c), 0.0, s, SOLVER),
                           linear_field(a), 0.0)
    r = np.array([0.4, 1.1])
    assert np.linalg.norm(pf(0.0, r) - a @ (r - s * c)) <= 1e-9


def test_pushforward_field_is_marked_numerical():
    pf = pushforward_field(FlowMap(rotation2d(), 0.0, 0.5, SOLVER), rotation2d(), 0.0)
    assert pf.exact is False


def test_breakpoint_splitting_handles_backward_flow():
    field = piecewise_benchmark()
    fm = FlowMap(field, 1.2, 0.1, SOLVER)
    q = np.array([0.5, 0.5])
    back = flow_map(fm, q)
    again = flow_map(FlowMap(field, 0.1, 1.2, SOLVER), back)
    assert np.linalg.norm(again - q) <= 1e-8


def test_zero_field_flow_is_identity():
    fm = FlowMap(zero_field(3), 0.0, 2.0, SOLVER)
    q = np.array([1.0, -1.0, 0.5])
    assert_allclose(flow_map(fm, q), q)
