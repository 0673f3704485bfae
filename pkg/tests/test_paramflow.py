"""Tests for parameter derivatives of flows and variation of parameters."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from chronoflow import (
    FlowSolver,
    IN_FORMULA,
    OUT_FORMULA,
    PerturbedSystem,
    add_fields,
    constant_field,
    fd_param_derivative,
    heisenberg_fields,
    linear_field,
    param_derivative,
    rotation2d,
    unicycle_fields,
    variation_of_parameters_check,
    zero_field,
)

SOLVER = FlowSolver(1000)
V1, V2 = heisenberg_fields()


def test_zero_base_constant_perturbation():
    system = PerturbedSystem(zero_field(2), constant_field([1.0, -2.0]), 0.0, 0.7)
    expected = 0.7 * np.array([1.0, -2.0])
    for mode in (IN_FORMULA, OUT_FORMULA):
        assert np.linalg.norm(param_derivative(system, [0.0, 0.0], mode, SOLVER)
                              - expected) <= 1e-10


def test_formula_matches_fd_oracle_rotation():
    system = PerturbedSystem(rotation2d(), constant_field([1.0, 0.0]), 0.0, 1.0)
    value = param_derivative(system, [1.0, 0.0], IN_FORMULA, SOLVER)
    oracle = fd_param_derivative(system, [1.0, 0.0], 1e-4, SOLVER)
    assert np.linalg.norm(value - oracle) / (1.0 + np.linalg.norm(oracle)) <= 1e-4


def test_modes_agree_heisenberg():
    system = PerturbedSystem(V1, V2, 0.0, 0.5)
    inner = param_derivative(system, [0.0, 0.0, 0.0], IN_FORMULA, SOLVER)
    outer = param_derivative(system, [0.0, 0.0, 0.0], OUT_FORMULA, SOLVER)
    assert np.linalg.norm(inner - outer) <= 1e-6


@pytest.mark.parametrize("base,perturbation,dim", [
    (rotation2d(), constant_field([1.0, 0.0]), 2),
    (V1, V2, 3),
    (unicycle_fields()[0], unicycle_fields()[1], 3),
])
def test_formula_oracle_agreement_catalog_pairs(base, perturbation, dim):
    system = PerturbedSystem(base, perturbation, 0.0, 0.8)
    q = np.full(dim, 0.3)
    oracle = fd_param_derivative(system, q, 1e-4, SOLVER)
    for mode in (IN_FORMULA, OUT_FORMULA):
        value = param_derivative(system, q, mode, SOLVER)
        assert np.linalg.norm(value - oracle) / (1.0 + np.linalg.norm(oracle)) <= 1e-4


def test_fd_halving_shrinks_discrepancy_about_4x():
    # second-order central differences on a pair that is nonlinear in alpha
    base = rotation2d()
    perturbation = linear_field([[0.3, 0.1], [0.0, -0.2]])
    system = PerturbedSystem(base, perturbation, 0.0, 1.0)
    q = np.array([1.0, 0.5])
    value = param_derivative(system, q, IN_FORMULA, SOLVER)
    coarse = np.linalg.norm(fd_param_derivative(system, q, 2e-2, SOLVER) - value)
    fine = np.linalg.norm(fd_param_derivative(system, q, 1e-2, SOLVER) - value)
    assert 3.0 <= coarse / fine <= 5.0


def test_fd_zero_perturbation():
    system = PerturbedSystem(rotation2d(), zero_field(2), 0.0, 1.0)
    assert_allclose(fd_param_derivative(system, [1.0, 0.0], 1e-4, SOLVER),
                    np.zeros(2), atol=1e-12)


def test_param_derivative_linear_in_perturbation():
    base = rotation2d()
    w1 = linear_field([[0.3, 0.1], [0.0, -0.2]])
    w2 = constant_field([0.2, -0.1])
    combo = add_fields(w1, w2, 2.0, 3.0)
    q = np.array([1.0, 0.5])
    lhs = param_derivative(PerturbedSystem(base, combo, 0.0, 1.0), q,
                           OUT_FORMULA, SOLVER)
    rhs = (2.0 * param_derivative(PerturbedSystem(base, w1, 0.0, 1.0), q,
                                  OUT_FORMULA, SOLVER)
           + 3.0 * param_derivative(PerturbedSystem(base, w2, 0.0, 1.0), q,
                                    OUT_FORMULA, SOLVER))
    assert np.linalg.norm(lhs - rhs) <= 1e-9


def test_zero_perturbation_gives_zero_vector():
    system = PerturbedSystem(V1, zero_field(3), 0.0, 0.6)
    for mode in (IN_FORMULA, OUT_FORMULA):
        assert_allclose(param_derivative(system, [0.1, 0.2, 0.3], mode, SOLVER),
                        np.zeros(3), atol=1e-14)


def test_param_derivative_rejects_unknown_mode():
    system = PerturbedSystem(V1, V2, 0.0, 0.5)
    with pytest.raises(ValueError):
        param_derivative(system, [0.0, 0.0, 0.0], "sideways", SOLVER)


def test_variation_of_parameters_zero_perturbation():
    solver = FlowSolver(200)
    assert variation_of_parameters_check(rotation2d(), zero_field(2),
                                         [1.0, 0.0], 0.5, solver) <= 1e-10


def test_variation_of_parameters_commuting_constants():
    # translations integrate exactly at any density
    solver = FlowSolver(50)
    discrepancy = variation_of_parameters_check(
        constant_field([1.0, 0.0]), constant_field([0.0, 2.0]),
        [0.3, -0.4], 1.0, solver)
    assert discrepancy <= 1e-8


def test_variation_of_parameters_heisenberg():
    solver = FlowSolver(200)
    assert variation_of_parameters_check(V1, V2, [0.0, 0.0, 0.0], 0.4,
                                         solver) <= 1e-5
