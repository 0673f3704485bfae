"""Command-line interface: load systems, run operations, emit CSV/JSON.

Output is deterministic: identical argv and inputs produce byte-identical
text (CSV values carry 17 significant digits, JSON uses shortest-repr
floats and stable key order).  Exit codes: 0 success, 2 validation error,
3 numerical failure (blow-up or planner stall).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import chrono, liealg, paramflow, reach
from .errors import (
    BlowUpError,
    ChronoflowError,
    DegenerateProbe,
    StalledError,
)
from .fields import Observable, as_point, load_system
from .flow import FlowMap, FlowSolver, flow_with_pushforward

OUTPUT_DIR_ENV = "CHRONOFLOW_OUTPUT_DIR"
MAX_ORDER = 4
MAX_LEVELS = 16


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_point(text: str) -> np.ndarray:
    try:
        return as_point([float(part) for part in text.split(",")])
    except ValueError as exc:
        raise ValueError(f"cannot parse point {text!r}: {exc}") from None


def _solver(args) -> FlowSolver:
    return FlowSolver(steps_per_unit_time=args.steps_per_unit)


def _pick_field(fields, index: int):
    if not 1 <= index <= len(fields):
        raise IndexError(
            f"field index {index} out of range; system has {len(fields)} fields"
        )
    return fields[index - 1]


def _observable(fields, obs_coord: int | None) -> Observable:
    dim = fields[0].dim
    if obs_coord is None:
        return Observable.identity(dim)
    if not 1 <= obs_coord <= dim:
        raise IndexError(f"observable coordinate {obs_coord} out of range for dim {dim}")
    return Observable.coordinate(dim, obs_coord - 1)


def _check_order(k: int, fields) -> None:
    cap = min(MAX_ORDER, min(f.smoothness_order for f in fields))
    if not 1 <= k <= cap:
        raise ValueError(f"order k={k} outside the supported range 1..{cap}")


def _write_output(text: str, args) -> None:
    if args.output in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(args.output)
    if not path.is_absolute():
        base = os.environ.get(OUTPUT_DIR_ENV)
        if base:
            path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Subcommands

def cmd_flow(args) -> str:
    fields = load_system(args.system)
    field = _pick_field(fields, args.field)
    q = _parse_point(args.q)
    fm = FlowMap(field, args.t0, args.t, _solver(args))
    endpoint, pushforward = flow_with_pushforward(fm, q)
    if args.format == "json":
        return _json_text({
            "endpoint": [float(x) for x in endpoint],
            "pushforward": [[float(x) for x in row] for row in pushforward],
        })
    n = len(endpoint)
    header = "i,endpoint," + ",".join(f"pf_{j + 1}" for j in range(n))
    rows = [header]
    for i in range(n):
        rows.append(
            f"{i + 1},{_fmt(endpoint[i])},"
            + ",".join(_fmt(v) for v in pushforward[i])
        )
    return "\n".join(rows) + "\n"


def cmd_volterra(args) -> str:
    fields = load_system(args.system)
    field = _pick_field(fields, args.field)
    _check_order(args.k, (field,))
    obs = _observable((field,), args.obs_coord)
    q = _parse_point(args.q)
    solver = _solver(args)
    witness = None
    if args.witness_radius is not None:
        from .fields import sample_lift_bound
        witness = sample_lift_bound(field, obs, args.k, q, args.witness_radius)
    t_values = [args.t_max * (j + 1) / args.grid for j in range(args.grid)]
    reports = chrono.remainder_table(field, obs, q, args.t0, args.k, t_values,
                                     solver, args.nodes, witness)
    if args.format == "csv":
        return chrono.reports_to_csv(reports)
    return _json_text({"k": args.k, "rows": [r.to_json() for r in reports]})


def cmd_order_probe(args) -> str:
    fields = load_system(args.system)
    solver = _solver(args)
    q = _parse_point(args.q)
    if args.levels > MAX_LEVELS or args.levels < 4:
        raise ValueError(f"levels must be in 4..{MAX_LEVELS}")

    if args.residual == "remainder":
        field = _pick_field(fields, args.field)
        _check_order(args.k, (field,))
        obs = _observable((field,), args.obs_coord)

        def sample(t: float) -> float:
            return chrono.remainder_eval(field, obs, q, 0.0, t, args.k, solver,
                                         args.nodes).remainder_norm

        try:
            estimate = chrono.order_probe(sample, args.t_max, args.levels)
        except DegenerateProbe as probe:
            estimate = chrono.degenerate_estimate(probe.t_grid, probe.norms)
    elif args.residual == "flow-bracket":
        expr = liealg.BracketExpression.parse(args.expr)
        estimate = liealg.bracket_asymptotics_check(expr, fields, q, args.t_max,
                                                    args.levels, solver)
    else:  # inverse-expansion
        field = _pick_field(fields, args.field)
        estimate = liealg.inverse_expansion_check(field, q, args.t_max,
                                                  args.levels, solver)

    if args.format == "csv":
        return "\n".join(estimate.to_csv_rows()) + "\n"
    return chrono.estimate_to_json(estimate) + "\n"


def cmd_bracket(args) -> str:
    fields = load_system(args.system)
    expr = liealg.BracketExpression.parse(args.expr)
    q = _parse_point(args.q)
    value = liealg.eval_bracket_expression(expr, fields, args.t, q)
    if args.format == "json":
        return _json_text({"expr": str(expr), "value": [float(x) for x in value]})
    rows = ["i,value"] + [f"{i + 1},{_fmt(v)}" for i, v in enumerate(value)]
    return "\n".join(rows) + "\n"


def cmd_flow_bracket(args) -> str:
    fields = load_system(args.system)
    expr = liealg.BracketExpression.parse(args.expr)
    q = _parse_point(args.q)
    solver = _solver(args)
    t_values = [args.t_max * (j + 1) / args.grid for j in range(args.grid)]
    endpoints = [liealg.flow_bracket(expr, fields, t, q, solver) for t in t_values]
    if args.format == "json":
        return _json_text({
            "expr": str(expr),
            "rows": [
                {"t": t, "endpoint": [float(x) for x in p]}
                for t, p in zip(t_values, endpoints)
            ],
        })
    n = fields[0].dim
    rows = ["t," + ",".join(f"q_{j + 1}" for j in range(n))]
    for t, p in zip(t_values, endpoints):
        rows.append(_fmt(t) + "," + ",".join(_fmt(v) for v in p))
    return "\n".join(rows) + "\n"


def cmd_param_deriv(args) -> str:
    fields = load_system(args.system)
    base = _pick_field(fields, args.field)
    perturbation = _pick_field(fields, args.perturb)
    q = _parse_point(args.q)
    solver = _solver(args)
    system = paramflow.PerturbedSystem(base, perturbation, args.t0, args.t)
    inner = paramflow.param_derivative(system, q, paramflow.IN_FORMULA, solver,
                                       args.nodes)
    outer = paramflow.param_derivative(system, q, paramflow.OUT_FORMULA, solver,
                                       args.nodes)
    oracle = paramflow.fd_param_derivative(system, q, args.epsilon, solver)
    if args.format == "json":
        return _json_text({
            "in_formula": [float(x) for x in inner],
            "out_formula": [float(x) for x in outer],
            "finite_difference": [float(x) for x in oracle],
        })
    rows = ["i,in_formula,out_formula,finite_difference"]
    for i in range(len(inner)):
        rows.append(f"{i + 1},{_fmt(inner[i])},{_fmt(outer[i])},{_fmt(oracle[i])}")
    return "\n".join(rows) + "\n"


def cmd_rank(args) -> str:
    fields = load_system(args.system)
    system = reach.AffineControlSystem.of(fields)
    q = _parse_point(args.q)
    if not 1 <= args.max_degree <= MAX_ORDER:
        raise ValueError(f"max-degree must be in 1..{MAX_ORDER}")
    report = reach.bracket_rank(system, q, args.max_degree, args.rel_tol)
    if args.format == "json":
        return _json_text(report.to_json())
    n = system.dim
    rows = ["expr," + ",".join(f"v_{j + 1}" for j in range(n))]
    for expr, value in report.brackets:
        rows.append(f"\"{expr}\"," + ",".join(_fmt(v) for v in value))
    return "\n".join(rows) + "\n"


def cmd_plan(args) -> str:
    fields = load_system(args.system)
    system = reach.AffineControlSystem.of(fields)
    q0 = _parse_point(args.q0)
    target = _parse_point(args.target)
    if not 1 <= args.max_degree <= MAX_ORDER:
        raise ValueError(f"max-degree must be in 1..{MAX_ORDER}")
    result = reach.plan_reach(system, q0, target, args.epsilon, args.max_degree,
                              args.max_iters, _solver(args),
                              step_fraction=args.step_fraction)
    if args.format == "json":
        return _json_text(result.to_json())
    return result.schedule.to_csv()


def cmd_simulate(args) -> str:
    fields = load_system(args.system)
    system = reach.AffineControlSystem.of(fields)
    q0 = _parse_point(args.q0)
    text = Path(args.schedule).read_text()
    if args.schedule.endswith(".csv"):
        schedule = reach.ControlSchedule.from_csv(text)
    else:
        doc = json.loads(text)
        if isinstance(doc, dict) and "schedule" in doc:
            doc = doc["schedule"]
        schedule = reach.ControlSchedule.from_json(doc)
    endpoint = reach.simulate_schedule(system, q0, schedule, _solver(args))
    if args.format == "json":
        return _json_text({"endpoint": [float(x) for x in endpoint]})
    rows = ["i,endpoint"] + [f"{i + 1},{_fmt(v)}" for i, v in enumerate(endpoint)]
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chronoflow",
        description="Flows, Volterra truncations, bracket asymptotics, and "
                    "bracket-generating reachability at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, nodes_default=16):
        p.add_argument("--system", required=True,
                       help="builtin system name or path to a JSON system file")
        p.add_argument("--steps-per-unit", type=int, default=1000,
                       help="RK4 substeps per unit time (default 1000)")
        p.add_argument("--nodes", type=int, default=nodes_default,
                       help=f"Gauss-Legendre nodes per level (default {nodes_default})")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--output", default="-",
                       help="output path ('-' for stdout); relative paths are "
                            f"resolved under ${OUTPUT_DIR_ENV} when set")

    p = sub.add_parser("flow", help="flow endpoint and pushforward at one point")
    common(p)
    p.add_argument("--field", type=int, default=1, help="1-based field index")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--q", required=True, help="comma-separated start point")
    p.set_defaults(fn=cmd_flow)

    p = sub.add_parser("volterra", help="truncation remainder table over a t-grid")
    common(p)
    p.add_argument("--field", type=int, default=1)
    p.add_argument("--obs-coord", type=int, default=None,
                   help="1-based coordinate observable (default: identity)")
    p.add_argument("--k", type=int, required=True, help="truncation order (1..4)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--grid", type=int, default=8, help="number of grid points")
    p.add_argument("--q", required=True)
    p.add_argument("--witness-radius", type=float, default=None,
                   help="sample a boundedness witness on this ball to emit bounds")
    p.set_defaults(fn=cmd_volterra)

    p = sub.add_parser("order-probe", help="fit the decay order of a residual")
    common(p)
    p.add_argument("--residual", required=True,
                   choices=("remainder", "flow-bracket", "inverse-expansion"))
    p.add_argument("--field", type=int, default=1)
    p.add_argument("--obs-coord", type=int, default=None)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--expr", default="[V1,V2]",
                   help="bracket expression for the flow-bracket residual")
    p.add_argument("--q", required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--levels", type=int, default=8, help="dyadic levels (4..16)")
    p.set_defaults(fn=cmd_order_probe)

    p = sub.add_parser("bracket", help="evaluate an iterated bracket at a point")
    common(p)
    p.add_argument("--expr", required=True, help='e.g. "V1" or "[[V1,V2],V1]"')
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--q", required=True)
    p.set_defaults(fn=cmd_bracket)

    p = sub.add_parser("flow-bracket", help="commutator-of-flows endpoint table")
    common(p)
    p.add_argument("--expr", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--grid", type=int, default=8)
    p.set_defaults(fn=cmd_flow_bracket)

    p = sub.add_parser("param-deriv",
                       help="flow derivative in a perturbation direction")
    common(p, nodes_default=32)
    p.add_argument("--field", type=int, default=1, help="base field index")
    p.add_argument("--perturb", type=int, default=2, help="perturbation field index")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--epsilon", type=float, default=1e-4,
                   help="finite-difference step for the oracle")
    p.set_defaults(fn=cmd_param_deriv)

    p = sub.add_parser("rank", help="bracket-generating rank test at a point")
    common(p)
    p.add_argument("--q", required=True)
    p.add_argument("--max-degree", type=int, default=2)
    p.add_argument("--rel-tol", type=float, default=reach.DEFAULT_RANK_TOL)
    p.set_defaults(fn=cmd_rank)

    p = sub.add_parser("plan", help="greedy bracket-motion planner")
    common(p)
    p.add_argument("--q0", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--max-degree", type=int, default=2)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--step-fraction", type=float, default=reach.DEFAULT_STEP_FRACTION)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("simulate", help="simulate a schedule file from a point")
    common(p)
    p.add_argument("--q0", required=True)
    p.add_argument("--schedule", required=True,
                   help="schedule file: .csv, bare JSON list, or plan JSON output")
    p.set_defaults(fn=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = args.fn(args)
    except (BlowUpError, StalledError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ChronoflowError, KeyError, IndexError, ValueError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_output(text, args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
