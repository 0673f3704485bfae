"""Polynomial vector fields, observables, and operator lifts on a single chart.

Everything here is exact: fields and observables are stored as polynomial
maps whose evaluations and derivatives of every order are closed-form, so
downstream asymptotic checks carry no differentiation error.  Time
dependence is piecewise: a field is either a single polynomial map
(autonomous) or a finite list of polynomial pieces over contiguous time
intervals.

All values are immutable after construction and every operation is a pure
function of its inputs, so concurrent use needs no synchronization.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DefectExhaustedError, DimensionError, TimeWindowError

Exps = tuple[int, ...]
TermDict = dict[Exps, float]

DEFAULT_SMOOTHNESS_ORDER = 8
DEFAULT_OBSERVABLE_ORDER = 8


def as_point(q, dim: int | None = None) -> np.ndarray:
    """Validate a chart point: 1-d, finite, optionally of a given length."""
    arr = np.asarray(q, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"chart point must be a 1-d vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"chart point has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("chart point has non-finite entries")
    return arr


def _normalize_component(terms: Iterable[tuple[float, Sequence[int]]], dim_in: int) -> TermDict:
    out: TermDict = {}
    for coef, exps in terms:
        exps = tuple(int(e) for e in exps)
        if len(exps) != dim_in:
            raise DimensionError(
                f"exponent tuple {exps} has length {len(exps)}, expected {dim_in}"
            )
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        c = out.get(exps, 0.0) + float(coef)
        if c == 0.0:
            out.pop(exps, None)
        else:
            out[exps] = c
    return out


def _mul_terms(a: TermDict, b: TermDict) -> TermDict:
    out: TermDict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            c = out.get(e, 0.0) + ca * cb
            if c == 0.0:
                out.pop(e, None)
            else:
                out[e] = c
    return out


def _diff_terms(a: TermDict, var: int) -> TermDict:
    out: TermDict = {}
    for exps, coef in a.items():
        k = exps[var]
        if k == 0:
            continue
        e = exps[:var] + (k - 1,) + exps[var + 1 :]
        c = out.get(e, 0.0) + coef * k
        if c == 0.0:
            out.pop(e, None)
        else:
            out[e] = c
    return out


def _add_terms(a: TermDict, b: TermDict, sa: float = 1.0, sb: float = 1.0) -> TermDict:
    out: TermDict = {}
    for src, s in ((a, sa), (b, sb)):
        for exps, coef in src.items():
            c = out.get(exps, 0.0) + s * coef
            if c == 0.0:
                out.pop(exps, None)
            else:
                out[exps] = c
    return out


def _compile_evaluator(components: tuple[TermDict, ...], dim_in: int):
    """Generate a specialized evaluation function for the term table.

    Flow integration evaluates the same small polynomials millions of
    times; a compiled expression avoids per-call array bookkeeping.
    """
    used = sorted({
        var for comp in components for exps in comp for var in range(dim_in)
        if exps[var] > 0
    })
    lines = ["def _eval(x, _array=_array):"]
    for var in used:
        lines.append(f"    x{var} = x[{var}]")
    exprs = []
    for comp in components:
        if not comp:
            exprs.append("0.0")
            continue
        terms = []
        for exps in sorted(comp):
            factors = [repr(comp[exps])]
            for var, e in enumerate(exps):
                if e == 1:
                    factors.append(f"x{var}")
                elif e > 1:
                    factors.append(f"x{var}**{e}")
            terms.append("*".join(factors))
        exprs.append(" + ".join(terms))
    lines.append("    return _array([" + ", ".join(exprs) + "])")
    namespace: dict = {"_array": np.array}
    exec("\n".join(lines), namespace)
    return namespace["_eval"]


class PolynomialMap:
    """Exact polynomial map R^dim_in -> R^dim_out.

    Each output component is a list of (coefficient, exponent-tuple) terms.
    Evaluation is compiled at construction; the Jacobian is itself a
    cached PolynomialMap, so derivatives of any order stay exact.
    """

    def __init__(self, dim_in: int, dim_out: int, components):
        if dim_in < 1 or dim_out < 1:
            raise DimensionError("dim_in and dim_out must be positive")
        components = list(components)
        if len(components) != dim_out:
            raise DimensionError(
                f"{len(components)} components given for dim_out={dim_out}"
            )
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)
        self._components: tuple[TermDict, ...] = tuple(
            _normalize_component(comp, dim_in) for comp in components
        )
        # Flat term table: one monomial row per term, scattered to components
        # by a dense coefficient matrix, so evaluation is three numpy calls.
        rows: list[Exps] = []
        comp_of: list[int] = []
        coefs: list[float] = []
        for i, comp in enumerate(self._components):
            for exps in sorted(comp):
                rows.append(exps)
                comp_of.append(i)
                coefs.append(comp[exps])
        self._evaluator = _compile_evaluator(self._components, dim_in)

    @property
    def components(self) -> tuple[tuple[tuple[float, Exps], ...], ...]:
        return tuple(
            tuple((coef, exps) for exps, coef in sorted(comp.items()))
            for comp in self._components
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._evaluator(np.asarray(x, dtype=float))

    @cached_property
    def jacobian_map(self) -> "PolynomialMap":
        """Polynomial map of all partials, row-major: output r*dim_in + c."""
        comps = []
        for comp in self._components:
            for var in range(self.dim_in):
                comps.append(
                    [(c, e) for e, c in _diff_terms(comp, var).items()]
                )
        return PolynomialMap(self.dim_in, self.dim_out * self.dim_in, comps)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.jacobian_map(x).reshape(self.dim_out, self.dim_in)

    def add(self, other: "PolynomialMap", scale_self: float = 1.0,
            scale_other: float = 1.0) -> "PolynomialMap":
        if (other.dim_in, other.dim_out) != (self.dim_in, self.dim_out):
            raise DimensionError("polynomial maps have different shapes")
        comps = [
            [(c, e) for e, c in _add_terms(a, b, scale_self, scale_other).items()]
            for a, b in zip(self._components, other._components)
        ]
        return PolynomialMap(self.dim_in, self.dim_out, comps)

    def scaled(self, s: float) -> "PolynomialMap":
        comps = [
            [(s * c, e) for e, c in comp.items()] for comp in self._components
        ]
        return PolynomialMap(self.dim_in, self.dim_out, comps)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PolynomialMap)
            and self.dim_in == other.dim_in
            and self.dim_out == other.dim_out
            and self._components == other._components
        )

    __hash__ = None  # mutable-free but not hashable; compare structurally

    def __repr__(self) -> str:
        n_terms = sum(len(c) for c in self._components)
        return f"PolynomialMap({self.dim_in}->{self.dim_out}, {n_terms} terms)"

    @classmethod
    def zeros(cls, dim_in: int, dim_out: int) -> "PolynomialMap":
        return cls(dim_in, dim_out, [[] for _ in range(dim_out)])

    @classmethod
    def constants(cls, values, dim_in: int) -> "PolynomialMap":
        values = np.asarray(values, dtype=float)
        zero = (0,) * dim_in
        return cls(dim_in, len(values), [[(v, zero)] for v in values])

    @classmethod
    def identity(cls, dim: int) -> "PolynomialMap":
        comps = []
        for i in range(dim):
            e = tuple(1 if j == i else 0 for j in range(dim))
            comps.append([(1.0, e)])
        return cls(dim, dim, comps)

    @classmethod
    def linear(cls, matrix) -> "PolynomialMap":
        a = np.asarray(matrix, dtype=float)
        if a.ndim != 2:
            raise DimensionError("linear map needs a 2-d matrix")
        dim_out, dim_in = a.shape
        comps = []
        for r in range(dim_out):
            terms = []
            for c in range(dim_in):
                if a[r, c] != 0.0:
                    e = tuple(1 if j == c else 0 for j in range(dim_in))
                    terms.append((a[r, c], e))
            comps.append(terms)
        return cls(dim_in, dim_out, comps)

    def to_json(self) -> list:
        return [
            [{"coef": coef, "exps": list(exps)} for coef, exps in comp]
            for comp in self.components
        ]

    @classmethod
    def from_json(cls, components, dim_in: int) -> "PolynomialMap":
        comps = [
            [(term["coef"], term["exps"]) for term in comp] for comp in components
        ]
        return cls(dim_in, len(comps), comps)


def lift_map(obs_map: PolynomialMap, field_map: PolynomialMap) -> PolynomialMap:
    """The directional derivative x -> obs'(x) . field(x), exact."""
    if obs_map.dim_in != field_map.dim_in or field_map.dim_out != field_map.dim_in:
        raise DimensionError("lift needs a field on the observable's domain")
    n = obs_map.dim_in
    field_comps = field_map._components
    out = []
    for comp in obs_map._components:
        acc: TermDict = {}
        for var in range(n):
            d = _diff_terms(comp, var)
            if not d or not field_comps[var]:
                continue
            acc = _add_terms(acc, _mul_terms(d, field_comps[var]))
        out.append([(c, e) for e, c in acc.items()])
    return PolynomialMap(n, obs_map.dim_out, out)


class VectorField:
    """A time-structured polynomial vector field on an n-dimensional chart.

    Either autonomous (one polynomial map, defined for all t) or piecewise
    in time (contiguous intervals, one polynomial map each).  The
    ``smoothness_order`` is bookkeeping for how many derivative orders
    downstream lifts may consume.
    """

    exact = True

    def __init__(self, pieces: Sequence[tuple[float, float, PolynomialMap]],
                 smoothness_order: int = DEFAULT_SMOOTHNESS_ORDER,
                 _autonomous: bool = False):
        if smoothness_order < 1:
            raise ValueError("smoothness_order must be >= 1")
        pieces = tuple(pieces)
        if not pieces:
            raise ValueError("a vector field needs at least one piece")
        dim = pieces[0][2].dim_in
        for _, _, pm in pieces:
            if pm.dim_in != dim or pm.dim_out != dim:
                raise DimensionError("every piece must map R^n -> R^n for one n")
        if not _autonomous:
            for (a, b, _) in pieces:
                if not (a < b):
                    raise ValueError(f"empty time piece [{a}, {b}]")
            for (_, b, _), (a2, _, _) in zip(pieces, pieces[1:]):
                if b != a2:
                    raise ValueError("time pieces must be contiguous and ordered")
        self.dim = dim
        self.smoothness_order = int(smoothness_order)
        self.pieces = pieces
        self.is_autonomous = _autonomous

    @classmethod
    def autonomous(cls, pm: PolynomialMap,
                   smoothness_order: int = DEFAULT_SMOOTHNESS_ORDER) -> "VectorField":
        return cls(((-math.inf, math.inf, pm),), smoothness_order, _autonomous=True)

    @classmethod
    def piecewise(cls, pieces, smoothness_order: int = DEFAULT_SMOOTHNESS_ORDER) -> "VectorField":
        return cls(tuple(pieces), smoothness_order, _autonomous=False)

    @property
    def window(self) -> tuple[float, float]:
        return (self.pieces[0][0], self.pieces[-1][1])

    def piece_at(self, t: float) -> PolynomialMap:
        """Active polynomial piece at time t (right-continuous at breakpoints)."""
        if self.is_autonomous:
            return self.pieces[0][2]
        lo, hi = self.window
        if not (lo <= t <= hi):
            raise TimeWindowError(f"t={t} outside the field's window [{lo}, {hi}]")
        for a, b, pm in self.pieces:
            if a <= t < b:
                return pm
        return self.pieces[-1][2]  # t == hi

    def piece_for_interval(self, a: float, b: float) -> PolynomialMap:
        return self.piece_at(0.5 * (a + b))

    def breakpoints_between(self, a: float, b: float) -> list[float]:
        """Interior piece boundaries strictly between a and b (any order)."""
        if self.is_autonomous:
            return []
        lo, hi = min(a, b), max(a, b)
        cuts = [p[0] for p in self.pieces[1:]]
        return [c for c in cuts if lo < c < hi]

    def check_window(self, *times: float) -> None:
        lo, hi = self.window
        for t in times:
            if not (lo <= t <= hi):
                raise TimeWindowError(f"t={t} outside the field's window [{lo}, {hi}]")

    def scaled(self, s: float) -> "VectorField":
        pieces = tuple((a, b, pm.scaled(s)) for a, b, pm in self.pieces)
        return VectorField(pieces, self.smoothness_order, _autonomous=self.is_autonomous)

    def __repr__(self) -> str:
        kind = "autonomous" if self.is_autonomous else f"{len(self.pieces)} pieces"
        return f"VectorField(dim={self.dim}, {kind})"

    def to_json(self) -> dict:
        doc: dict = {"dim": self.dim, "smoothness_order": self.smoothness_order}
        if self.is_autonomous:
            doc["components"] = self.pieces[0][2].to_json()
        else:
            doc["time_pieces"] = [
                {"t0": a, "t1": b, "components": pm.to_json()}
                for a, b, pm in self.pieces
            ]
        return doc


def add_fields(v: VectorField, w: VectorField, coeff_v: float = 1.0,
               coeff_w: float = 1.0) -> VectorField:
    """Pointwise linear combination coeff_v*V + coeff_w*W, piece-aware."""
    if v.dim != w.dim:
        raise DimensionError("fields have different dimensions")
    order = min(v.smoothness_order, w.smoothness_order)
    if v.is_autonomous and w.is_autonomous:
        pm = v.pieces[0][2].scaled(coeff_v).add(w.pieces[0][2], 1.0, coeff_w)
        return VectorField.autonomous(pm, order)
    lo = max(v.window[0], w.window[0])
    hi = min(v.window[1], w.window[1])
    if not (lo < hi):
        raise ValueError("fields have disjoint time windows")
    cuts = sorted(set(v.breakpoints_between(lo, hi) + w.breakpoints_between(lo, hi)))
    edges = [lo] + cuts + [hi]
    pieces = []
    for a, b in zip(edges, edges[1:]):
        mid = 0.5 * (a + b)
        pm = v.piece_at(mid).scaled(coeff_v).add(w.piece_at(mid), 1.0, coeff_w)
        pieces.append((a, b, pm))
    return VectorField.piecewise(pieces, order)


class Observable:
    """A polynomial map from chart points to R^e with declared derivative budget.

    ``max_derivative_order`` tracks how many derivative orders remain for
    lifts to consume; polynomial derivatives themselves are exact at every
    order.
    """

    def __init__(self, poly_map: PolynomialMap,
                 max_derivative_order: int = DEFAULT_OBSERVABLE_ORDER):
        if max_derivative_order < 0:
            raise ValueError("max_derivative_order must be >= 0")
        self.map = poly_map
        self.max_derivative_order = int(max_derivative_order)

    @property
    def dim_in(self) -> int:
        return self.map.dim_in

    @property
    def dim_out(self) -> int:
        return self.map.dim_out

    def __call__(self, q) -> np.ndarray:
        return self.map(as_point(q, self.map.dim_in))

    def derivative(self, q) -> np.ndarray:
        return self.map.jacobian(as_point(q, self.map.dim_in))

    @classmethod
    def identity(cls, dim: int, max_derivative_order: int = DEFAULT_OBSERVABLE_ORDER) -> "Observable":
        return cls(PolynomialMap.identity(dim), max_derivative_order)

    @classmethod
    def coordinate(cls, dim: int, axis: int,
                   max_derivative_order: int = DEFAULT_OBSERVABLE_ORDER) -> "Observable":
        """The scalar observable picking out coordinate ``axis`` (0-based)."""
        if not 0 <= axis < dim:
            raise DimensionError(f"axis {axis} out of range for dim {dim}")
        e = tuple(1 if j == axis else 0 for j in range(dim))
        return cls(PolynomialMap(dim, 1, [[(1.0, e)]]), max_derivative_order)

    @classmethod
    def constant(cls, values, dim_in: int,
                 max_derivative_order: int = DEFAULT_OBSERVABLE_ORDER) -> "Observable":
        return cls(PolynomialMap.constants(values, dim_in), max_derivative_order)

    @staticmethod
    def linear_combination(a: float, phi: "Observable", b: float, psi: "Observable") -> "Observable":
        order = min(phi.max_derivative_order, psi.max_derivative_order)
        return Observable(phi.map.scaled(a).add(psi.map, 1.0, b), order)

    def __repr__(self) -> str:
        return (f"Observable({self.dim_in}->{self.dim_out}, "
                f"order={self.max_derivative_order})")


# ---------------------------------------------------------------------------
# Operations

def eval_field(field: VectorField, t: float, q) -> np.ndarray:
    """Value of the active polynomial piece at (t, q)."""
    point = as_point(q, field.dim)
    return field.piece_at(t)(point)


def field_jacobian(field: VectorField, t: float, q) -> np.ndarray:
    """Exact Jacobian of the active piece; entry (r, c) is dV_r/dx_c."""
    point = as_point(q, field.dim)
    return field.piece_at(t).jacobian(point)


def apply_lift(field: VectorField, t: float, obs: Observable) -> Observable:
    """The observable q -> obs'(q) . V_t(q); consumes one derivative order."""
    if not getattr(field, "exact", False):
        raise TypeError("lifts require exact polynomial fields")
    if obs.max_derivative_order < 1:
        raise DefectExhaustedError(
            "observable has no derivative orders left for a lift"
        )
    if obs.dim_in != field.dim:
        raise DimensionError("observable and field dimensions disagree")
    lifted = lift_map(obs.map, field.piece_at(t))
    return Observable(lifted, obs.max_derivative_order - 1)


def iterate_lift(fields_seq: Sequence[tuple[VectorField, float]],
                 obs: Observable) -> Observable:
    """Left fold of apply_lift; list position 1 is applied first (innermost)."""
    fields_seq = list(fields_seq)
    if obs.max_derivative_order < len(fields_seq):
        raise DefectExhaustedError(
            f"sequence of {len(fields_seq)} lifts exceeds the available "
            f"derivative order {obs.max_derivative_order}"
        )
    out = obs
    for field, t in fields_seq:
        out = apply_lift(field, t, out)
    return out


# ---------------------------------------------------------------------------
# Finite differences (independent oracle only, never the primary path)

def finite_difference_jacobian(func: Callable[[np.ndarray], np.ndarray], x,
                               step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian with h = eps^(1/3) * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    base = step if step is not None else float(np.finfo(float).eps) ** (1.0 / 3.0)
    f0 = np.atleast_1d(np.asarray(func(x), dtype=float))
    jac = np.zeros((f0.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        h = base * max(1.0, abs(x[i])) if step is None else step
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)
    return jac


# ---------------------------------------------------------------------------
# Sampled local boundedness witness

@dataclass(frozen=True, eq=False)
class LocallyBoundedWitness:
    """Sampled bound on k-fold lift compositions over a ball.

    ``bound_C`` is the max over sampled ball points (and, for piecewise
    fields, sampled decreasing time tuples) of the norm of the order-fold
    lift of the observable.  It is a sampled estimate, not a certificate.
    """

    center: np.ndarray
    radius: float
    bound_C: float
    order: int


def sample_lift_bound(field: VectorField, obs: Observable, order: int, center,
                      radius: float, num_points: int = 128,
                      num_time_tuples: int = 8, seed: int = 0) -> LocallyBoundedWitness:
    """Estimate the lift-composition bound by sampling the ball."""
    center = as_point(center, field.dim)
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    n = field.dim
    direction = rng.normal(size=(num_points, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=(num_points, 1)) ** (1.0 / n)
    points = center + direction * radii

    if field.is_autonomous:
        lifted = iterate_lift([(field, 0.0)] * order, obs)
        bound = max(float(np.linalg.norm(lifted(p))) for p in points)
    else:
        lo, hi = field.window
        bound = 0.0
        for _ in range(num_time_tuples):
            taus = np.sort(rng.uniform(lo, hi, size=order))[::-1]
            lifted = iterate_lift([(field, t) for t in taus], obs)
            bound = max(bound, max(float(np.linalg.norm(lifted(p))) for p in points))
    return LocallyBoundedWitness(center=center, radius=float(radius),
                                 bound_C=bound, order=int(order))


# ---------------------------------------------------------------------------
# Builtin catalog (closed-form flows make these the golden-test fields)

def zero_field(dim: int) -> VectorField:
    return VectorField.autonomous(PolynomialMap.zeros(dim, dim))


def constant_field(values) -> VectorField:
    values = np.asarray(values, dtype=float)
    return VectorField.autonomous(PolynomialMap.constants(values, len(values)))


def linear_field(matrix) -> VectorField:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError("linear field needs a square matrix")
    return VectorField.autonomous(PolynomialMap.linear(a))


def rotation2d() -> VectorField:
    """Planar rotation x' = (-y, x); flow is the rotation by angle t."""
    return linear_field([[0.0, -1.0], [1.0, 0.0]])


def heisenberg_fields() -> tuple[VectorField, VectorField]:
    """The Heisenberg pair V1 = (1, 0, -y/2), V2 = (0, 1, x/2) on R^3."""
    v1 = VectorField.autonomous(PolynomialMap(3, 3, [
        [(1.0, (0, 0, 0))],
        [],
        [(-0.5, (0, 1, 0))],
    ]))
    v2 = VectorField.autonomous(PolynomialMap(3, 3, [
        [],
        [(1.0, (0, 0, 0))],
        [(0.5, (1, 0, 0))],
    ]))
    return v1, v2


def unicycle_fields() -> tuple[VectorField, VectorField]:
    """Chained-form unicycle on R^3: (1, 0, y) and (0, 1, 0)."""
    g1 = VectorField.autonomous(PolynomialMap(3, 3, [
        [(1.0, (0, 0, 0))],
        [],
        [(1.0, (0, 1, 0))],
    ]))
    g2 = VectorField.autonomous(PolynomialMap(3, 3, [
        [],
        [(1.0, (0, 0, 0))],
        [],
    ]))
    return g1, g2


def brockett_fields() -> tuple[VectorField, VectorField]:
    """Brockett integrator on R^3: (1, 0, -y) and (0, 1, x)."""
    b1 = VectorField.autonomous(PolynomialMap(3, 3, [
        [(1.0, (0, 0, 0))],
        [],
        [(-1.0, (0, 1, 0))],
    ]))
    b2 = VectorField.autonomous(PolynomialMap(3, 3, [
        [],
        [(1.0, (0, 0, 0))],
        [(1.0, (1, 0, 0))],
    ]))
    return b1, b2


_BUILTIN_BUILDERS: dict[str, Callable[[], tuple[VectorField, ...]]] = {
    "rotation2d": lambda: (rotation2d(),),
    "heisenberg": heisenberg_fields,
    "unicycle": unicycle_fields,
    "brockett": brockett_fields,
}

BUILTIN_SYSTEM_NAMES = tuple(sorted(_BUILTIN_BUILDERS))


def builtin_system(name: str) -> tuple[VectorField, ...]:
    """Catalog fields addressable by name string."""
    try:
        builder = _BUILTIN_BUILDERS[name]
    except KeyError:
        raise KeyError(
            f"unknown builtin system {name!r}; available: {', '.join(BUILTIN_SYSTEM_NAMES)}"
        ) from None
    return tuple(builder())


# ---------------------------------------------------------------------------
# JSON loading

def vector_field_from_json(doc: dict) -> VectorField:
    """Build a field from {"dim": n, "components": ...} or {"time_pieces": ...}."""
    dim = int(doc["dim"])
    order = int(doc.get("smoothness_order", DEFAULT_SMOOTHNESS_ORDER))
    if "time_pieces" in doc:
        pieces = [
            (float(p["t0"]), float(p["t1"]),
             PolynomialMap.from_json(p["components"], dim))
            for p in doc["time_pieces"]
        ]
        return VectorField.piecewise(pieces, order)
    return VectorField.autonomous(
        PolynomialMap.from_json(doc["components"], dim), order
    )


def observable_from_json(doc: dict) -> Observable:
    dim = int(doc["dim"])
    order = int(doc.get("max_derivative_order", DEFAULT_OBSERVABLE_ORDER))
    return Observable(PolynomialMap.from_json(doc["components"], dim), order)


def load_system(source: str) -> tuple[VectorField, ...]:
    """Resolve a builtin name or a JSON file into a tuple of fields.

    A file may hold a single field document or {"fields": [field, ...]}.
    """
    if source in _BUILTIN_BUILDERS:
        return builtin_system(source)
    path = Path(source)
    if not path.exists():
        raise KeyError(
            f"{source!r} is neither a builtin system nor an existing file"
        )
    doc = json.loads(path.read_text())
    if isinstance(doc, dict) and "fields" in doc:
        fields = tuple(vector_field_from_json(f) for f in doc["fields"])
    else:
        fields = (vector_field_from_json(doc),)
    dims = {f.dim for f in fields}
    if len(dims) != 1:
        raise DimensionError("system fields have mixed dimensions")
    return fields
