"""Affine control systems, bracket-generating rank tests, and a greedy planner.

Admissible controls are piecewise constant with one active component of
value +1 or -1 per segment; magnitudes live in segment durations only.
The rank test evaluates a canonical set of iterated brackets at a point
and counts singular values; full rank at the start certifies the planner's
precondition.  The planner itself is a constructive desk-scale witness of
approximate controllability: it composes bracket motions greedily and
re-simulates the returned schedule end to end.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PlannerPreconditionError, StalledError
from .fields import VectorField, as_point
from .flow import FlowMap, FlowSolver, flow_map, inverse_flow
from .liealg import BracketExpression, FlowBracketProgram, eval_bracket_expression

DEFAULT_RANK_TOL = 1e-8
DEFAULT_STEP_FRACTION = 0.5
MAX_CONSECUTIVE_HALVINGS = 20


@dataclass(frozen=True)
class AffineControlSystem:
    """Finitely many autonomous polynomial control fields on one chart."""

    fields: tuple[VectorField, ...]
    dim: int

    @classmethod
    def of(cls, fields) -> "AffineControlSystem":
        fields = tuple(fields)
        if not fields:
            raise ValueError("a control system needs at least one field")
        dim = fields[0].dim
        for f in fields:
            if f.dim != dim:
                raise DimensionError("control fields have mixed dimensions")
            if not f.is_autonomous:
                raise ValueError("control fields must be autonomous")
            if not getattr(f, "exact", False):
                raise TypeError("control fields must be exact polynomial fields")
        return cls(fields=fields, dim=dim)


@dataclass(frozen=True)
class Segment:
    """One control segment: field index (1-based), sign, positive duration."""

    field_index: int
    sign: int
    duration: float


@dataclass(frozen=True)
class ControlSchedule:
    """An admissible control: one component active per segment, values +/-1."""

    segments: tuple[Segment, ...]

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def concat(self, other: "ControlSchedule") -> "ControlSchedule":
        return ControlSchedule(self.segments + other.segments)

    def to_json(self) -> list[dict]:
        return [
            {"field_index": s.field_index, "sign": s.sign, "duration": s.duration}
            for s in self.segments
        ]

    @classmethod
    def from_json(cls, doc) -> "ControlSchedule":
        return cls(tuple(
            Segment(int(s["field_index"]), int(s["sign"]), float(s["duration"]))
            for s in doc
        ))

    def to_csv(self) -> str:
        rows = ["segment,field_index,sign,duration"]
        rows += [
            f"{i},{s.field_index},{s.sign},{format(s.duration, '.17g')}"
            for i, s in enumerate(self.segments)
        ]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ControlSchedule":
        reader = csv.DictReader(io.StringIO(text))
        return cls(tuple(
            Segment(int(r["field_index"]), int(r["sign"]), float(r["duration"]))
            for r in reader
        ))


def _validate_segments(sys: AffineControlSystem, sched: ControlSchedule) -> None:
    for i, seg in enumerate(sched.segments):
        if not 1 <= seg.field_index <= len(sys.fields):
            raise IndexError(f"segment {i} field index {seg.field_index} out of range")
        if seg.sign not in (-1, 1):
            raise ValueError(f"segment {i} sign must be +1 or -1")
        if seg.duration <= 0:
            raise ValueError(f"segment {i} duration must be positive")


def simulate_schedule(sys: AffineControlSystem, q0, sched: ControlSchedule,
                      solver: FlowSolver) -> np.ndarray:
    """Endpoint of the trajectory following each signed segment in turn."""
    _validate_segments(sys, sched)
    point = as_point(q0, sys.dim)
    for seg in sched.segments:
        fm = FlowMap(sys.fields[seg.field_index - 1], 0.0, seg.duration, solver)
        point = flow_map(fm, point) if seg.sign > 0 else inverse_flow(fm, point)
    return point


@dataclass(eq=False)
class RankReport:
    """Iterated brackets evaluated at a point, with their numerical rank."""

    brackets: list[tuple[BracketExpression, np.ndarray]]
    numerical_rank: int
    singular_values: np.ndarray

    def to_json(self) -> dict:
        return {
            "numerical_rank": self.numerical_rank,
            "singular_values": [float(s) for s in self.singular_values],
            "brackets": [
                {"expr": str(e), "value": [float(x) for x in v]}
                for e, v in self.brackets
            ],
        }


def canonical_bracket_basis(num_fields: int, max_degree: int) -> list[BracketExpression]:
    """All bracket shapes up to max_degree, one per antisymmetry class.

    A pair is kept only when the left subtree's canonical string is
    lexicographically smaller than the right's, which also drops the
    identically-zero [A, A] shapes.
    """
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    by_degree: dict[int, list[BracketExpression]] = {
        1: [BracketExpression.leaf(i) for i in range(1, num_fields + 1)]
    }
    for d in range(2, max_degree + 1):
        exprs = []
        for d_left in range(1, d):
            for left in by_degree[d_left]:
                for right in by_degree[d - d_left]:
                    if str(left) < str(right):
                        exprs.append(BracketExpression.pair(left, right))
        by_degree[d] = sorted(exprs, key=str)
    basis: list[BracketExpression] = []
    for d in range(1, max_degree + 1):
        basis.extend(by_degree[d])
    return basis


def bracket_rank(sys: AffineControlSystem, q, max_degree: int,
                 rel_tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """Numerical rank of the iterated-bracket span at q via singular values."""
    point = as_point(q, sys.dim)
    basis = canonical_bracket_basis(len(sys.fields), max_degree)
    rows = [
        (expr, eval_bracket_expression(expr, sys.fields, 0.0, point))
        for expr in basis
    ]
    matrix = np.array([v for _, v in rows])
    singular = np.linalg.svd(matrix, compute_uv=False)
    top = singular[0] if singular.size else 0.0
    rank = int(np.sum(singular > rel_tol * top)) if top > 0 else 0
    return RankReport(brackets=rows, numerical_rank=rank, singular_values=singular)


def bracket_motion(sys: AffineControlSystem, expr: BracketExpression,
                   magnitude: float, sign: int = 1) -> ControlSchedule:
    """Schedule whose net displacement is about magnitude * B(q).

    The flow-bracket program of the expression runs with per-segment
    duration t = magnitude^(1/k) for degree k; ``sign=-1`` runs the
    reversed program, inverting the motion.
    """
    if magnitude <= 0:
        raise ValueError("magnitude must be positive")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    if expr.max_index() > len(sys.fields):
        raise IndexError(f"expression leaf V{expr.max_index()} out of range")
    program = FlowBracketProgram.compile(expr)
    if sign < 0:
        program = program.reversed()
    t = magnitude ** (1.0 / expr.degree)
    return ControlSchedule(tuple(
        Segment(seg.field_index, seg.sign, t ** seg.time_exponent)
        for seg in program.segments
    ))


@dataclass(eq=False)
class PlanResult:
    """Planner output; the endpoint is an end-to-end re-simulation result."""

    schedule: ControlSchedule
    endpoint: np.ndarray
    residual: float
    iterations: int

    def to_json(self) -> dict:
        return {
            "endpoint": [float(x) for x in self.endpoint],
            "residual": self.residual,
            "iterations": self.iterations,
            "schedule": self.schedule.to_json(),
        }


def plan_reach(sys: AffineControlSystem, q0, target, epsilon: float,
               max_degree: int, max_iters: int, solver: FlowSolver,
               step_fraction: float = DEFAULT_STEP_FRACTION) -> PlanResult:
    """Greedy bracket-motion planner into the epsilon-ball of the target.

    At each iteration the residual is least-squares decomposed over the
    canonical bracket basis at the current point, and the direction with
    the largest coefficient is executed as a bracket motion of magnitude
    step_fraction times that coefficient.  Non-improving motions are
    discarded and the fraction halves (resetting on success); twenty
    consecutive halvings raise StalledError with the best result so far.
    """
    point0 = as_point(q0, sys.dim)
    goal = as_point(target, sys.dim)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    report = bracket_rank(sys, point0, max_degree)
    if report.numerical_rank < sys.dim:
        raise PlannerPreconditionError(
            f"bracket rank {report.numerical_rank} < dim {sys.dim} at the "
            f"start point; the system is not bracket-generating there"
        )
    basis = canonical_bracket_basis(len(sys.fields), max_degree)

    schedule = ControlSchedule(())
    point = point0
    fraction = step_fraction
    halvings = 0
    iterations = 0

    def result_for(sched: ControlSchedule, iters: int) -> PlanResult:
        end = simulate_schedule(sys, point0, sched, solver)
        return PlanResult(schedule=sched, endpoint=end,
                          residual=float(np.linalg.norm(end - goal)),
                          iterations=iters)

    while iterations < max_iters:
        residual = goal - point
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm <= epsilon:
            break
        directions = np.array([
            eval_bracket_expression(expr, sys.fields, 0.0, point) for expr in basis
        ])
        coeffs, *_ = np.linalg.lstsq(directions.T, residual, rcond=None)
        pick = int(np.argmax(np.abs(coeffs)))
        magnitude = fraction * abs(float(coeffs[pick]))
        iterations += 1
        if magnitude <= 0.0:
            halvings += 1
        else:
            motion = bracket_motion(sys, basis[pick], magnitude,
                                    sign=1 if coeffs[pick] > 0 else -1)
            candidate = simulate_schedule(sys, point, motion, solver)
            if float(np.linalg.norm(goal - candidate)) < residual_norm:
                point = candidate
                schedule = schedule.concat(motion)
                fraction = step_fraction
                halvings = 0
                continue
            fraction *= 0.5
            halvings += 1
        if halvings >= MAX_CONSECUTIVE_HALVINGS:
            raise StalledError(
                f"no improvement over {MAX_CONSECUTIVE_HALVINGS} consecutive "
                f"step halvings (residual {residual_norm:.3e})",
                best=result_for(schedule, iterations),
            )

    return result_for(schedule, iterations)
