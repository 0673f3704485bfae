"""Derivative of a flow with respect to a perturbation of its field.

For the family V + alpha*W the derivative of the flow at alpha = 0 has two
integral representations built from pushforwards along the unperturbed
trajectory; both are implemented, together with a central finite-difference
oracle and a variation-of-parameters factorization check.  The smallness
conditions on the alpha-remainders are analysis-side assumptions for the
polynomial, locally bounded fields used here; no runtime check attempts to
verify them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .fields import VectorField, add_fields, as_point, eval_field
from .flow import (
    FlowMap,
    FlowSolver,
    flow_map,
    flow_pushforward,
    flow_time_dependent,
    pushforward_field,
    trajectory_states,
)
from .quadrature import gauss_legendre, split_at

IN_FORMULA = "in"
OUT_FORMULA = "out"
DEFAULT_NODES = 32


@dataclass(frozen=True)
class PerturbedSystem:
    """Base field V perturbed to V + alpha*W over a time interval."""

    base_field: VectorField
    perturbation_field: VectorField
    t0: float
    t1: float

    def __post_init__(self):
        if self.base_field.dim != self.perturbation_field.dim:
            raise DimensionError("base and perturbation fields have different dims")
        self.base_field.check_window(self.t0, self.t1)
        self.perturbation_field.check_window(self.t0, self.t1)


def _quad_nodes(sys: PerturbedSystem, nodes: int):
    cuts = sorted(set(
        sys.base_field.breakpoints_between(sys.t0, sys.t1)
        + sys.perturbation_field.breakpoints_between(sys.t0, sys.t1)
    ))
    xs_all: list[float] = []
    ws_all: list[float] = []
    for a, b in split_at(sys.t0, sys.t1, cuts):
        xs, ws = gauss_legendre(a, b, nodes)
        xs_all.extend(xs)
        ws_all.extend(ws)
    return xs_all, ws_all


def param_derivative(sys: PerturbedSystem, q, mode: str, solver: FlowSolver,
                     nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Derivative of the perturbed flow at alpha = 0, by quadrature in tau.

    ``mode="in"`` integrates pushforward(tau -> t1) applied to W along the
    trajectory; ``mode="out"`` pulls each contribution back to the start
    and applies the full pushforward once outside the integral.  The two
    agree up to quadrature and solver tolerance.
    """
    if mode not in (IN_FORMULA, OUT_FORMULA):
        raise ValueError(f"mode must be '{IN_FORMULA}' or '{OUT_FORMULA}'")
    point = as_point(q, sys.base_field.dim)
    if sys.t1 == sys.t0:
        return np.zeros(sys.base_field.dim)
    xs, ws = _quad_nodes(sys, nodes)
    states = trajectory_states(sys.base_field, sys.t0, xs, point, solver)

    total = np.zeros(sys.base_field.dim)
    if mode == IN_FORMULA:
        for tau, w, p in zip(xs, ws, states):
            mat = flow_pushforward(FlowMap(sys.base_field, tau, sys.t1, solver), p)
            total += w * (mat @ eval_field(sys.perturbation_field, tau, p))
        return total
    for tau, w, p in zip(xs, ws, states):
        mat = flow_pushforward(FlowMap(sys.base_field, tau, sys.t0, solver), p)
        total += w * (mat @ eval_field(sys.perturbation_field, tau, p))
    outer = flow_pushforward(FlowMap(sys.base_field, sys.t0, sys.t1, solver), point)
    return outer @ total


def fd_param_derivative(sys: PerturbedSystem, q, epsilon: float,
                        solver: FlowSolver) -> np.ndarray:
    """Central-difference oracle: flows of V +/- epsilon*W."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    point = as_point(q, sys.base_field.dim)
    plus = add_fields(sys.base_field, sys.perturbation_field, 1.0, epsilon)
    minus = add_fields(sys.base_field, sys.perturbation_field, 1.0, -epsilon)
    end_plus = flow_map(FlowMap(plus, sys.t0, sys.t1, solver), point)
    end_minus = flow_map(FlowMap(minus, sys.t0, sys.t1, solver), point)
    return (end_plus - end_minus) / (2.0 * epsilon)


def variation_of_parameters_check(v: VectorField, w: VectorField, q, t: float,
                                  solver: FlowSolver,
                                  nodes: int = DEFAULT_NODES) -> float:
    """Factorize the flow of V + W through the pulled-back perturbation.

    The correction flow C solves z' = G(tau, z) where G is W transported by
    the backward flow of V at time tau; executed as point maps, the flow of
    V + W from q equals C first, then the flow of V.  Returns the norm of
    the factorization discrepancy at q.
    """
    if v.dim != w.dim:
        raise DimensionError("fields have different dimensions")
    point = as_point(q, v.dim)
    direct = flow_map(FlowMap(add_fields(v, w), 0.0, t, solver), point)

    def pulled_back(tau: float, z: np.ndarray) -> np.ndarray:
        transported = pushforward_field(FlowMap(v, tau, 0.0, solver), w, tau)
        return transported(tau, z)

    corrected = flow_time_dependent(pulled_back, 0.0, t, point, solver, dim=v.dim)
    factored = flow_map(FlowMap(v, 0.0, t, solver), corrected)
    return float(np.linalg.norm(direct - factored))
