"""Chronoflow: flows of time-structured polynomial vector fields as operators.

Exact polynomial fields and observables, deterministic RK4 flow maps with
pushforwards, truncated Volterra expansions with remainder-order probes,
iterated Lie and flow brackets with their asymptotics, parameter
derivatives of flows, and a bracket-generating reachability planner.
"""
from .errors import (
    BlowUpError,
    ChronoflowError,
    DefectExhaustedError,
    DegenerateProbe,
    DimensionError,
    PlannerPreconditionError,
    StalledError,
    TimeWindowError,
)
from .fields import (
    LocallyBoundedWitness,
    Observable,
    PolynomialMap,
    VectorField,
    add_fields,
    apply_lift,
    as_point,
    brockett_fields,
    builtin_system,
    constant_field,
    eval_field,
    field_jacobian,
    finite_difference_jacobian,
    heisenberg_fields,
    iterate_lift,
    linear_field,
    load_system,
    observable_from_json,
    rotation2d,
    sample_lift_bound,
    unicycle_fields,
    vector_field_from_json,
    zero_field,
)
from .flow import (
    FlowMap,
    FlowSolver,
    NumericalField,
    flow_map,
    flow_operator_apply,
    flow_pushforward,
    flow_time_dependent,
    flow_with_pushforward,
    inverse_flow,
    pushforward_field,
)
from .chrono import (
    OrderEstimate,
    RemainderReport,
    SeriesTerm,
    integral_equation_residual,
    order_probe,
    remainder_eval,
    simplex_integral_term,
    simplex_volume,
    volterra_truncate,
)
from .liealg import (
    BracketExpression,
    FlowBracketProgram,
    adjoint_check,
    bracket_asymptotics_check,
    commutator_decomposition_residual,
    eval_bracket_expression,
    flow_bracket,
    inverse_expansion_check,
    lie_bracket,
    lie_bracket_field,
    pushforward_invariance_check,
)
from .paramflow import (
    IN_FORMULA,
    OUT_FORMULA,
    PerturbedSystem,
    fd_param_derivative,
    param_derivative,
    variation_of_parameters_check,
)
from .reach import (
    AffineControlSystem,
    ControlSchedule,
    PlanResult,
    RankReport,
    Segment,
    bracket_motion,
    bracket_rank,
    canonical_bracket_basis,
    plan_reach,
    simulate_schedule,
)

__version__ = "0.1.0"
