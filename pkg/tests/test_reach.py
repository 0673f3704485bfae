"""Tests for control schedules, bracket rank, and the reachability planner."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from chronoflow import (
    AffineControlSystem,
    BracketExpression,
    ControlSchedule,
    FlowSolver,
    PlannerPreconditionError,
    Segment,
    bracket_motion,
    bracket_rank,
    canonical_bracket_basis,
    constant_field,
    heisenberg_fields,
    plan_reach,
    simulate_schedule,
)

SOLVER = FlowSolver(400)
HEIS = AffineControlSystem.of(heisenberg_fields())
CONSTANTS = AffineControlSystem.of([
    constant_field([1.0, 0.0, 0.0]),
    constant_field([0.0, 1.0, 0.0]),
])


def test_simulate_empty_schedule():
    q0 = np.array([0.3, 0.4, 0.5])
    assert_allclose(simulate_schedule(HEIS, q0, ControlSchedule(()), SOLVER), q0)


def test_simulate_commutator_square():
    t = 0.2
    sched = ControlSchedule((
        Segment(1, 1, t), Segment(2, 1, t), Segment(1, -1, t), Segment(2, -1, t),
    ))
    end = simulate_schedule(HEIS, [0.0, 0.0, 0.0], sched, SOLVER)
    assert np.linalg.norm(end - np.array([0.0, 0.0, t * t])) <= 1e-9


def test_simulate_single_segment():
    sched = ControlSchedule((Segment(1, 1, 1.0),))
    end = simulate_schedule(HEIS, [0.0, 1.0, 0.0], sched, SOLVER)
    assert np.linalg.norm(end - np.array([1.0, 1.0, -0.5])) <= 1e-9


def test_simulate_validates_segments():
    with pytest.raises(IndexError):
        simulate_schedule(HEIS, [0.0, 0.0, 0.0],
                          ControlSchedule((Segment(3, 1, 0.1),)), SOLVER)
    with pytest.raises(ValueError):
        simulate_schedule(HEIS, [0.0, 0.0, 0.0],
                          ControlSchedule((Segment(1, 2, 0.1),)), SOLVER)
    with pytest.raises(ValueError):
        simulate_schedule(HEIS, [0.0, 0.0, 0.0],
                          ControlSchedule((Segment(1, 1, -0.1),)), SOLVER)


def test_concatenation_consistency():
    rng = np.random.default_rng(4)
    segs = tuple(
        Segment(int(rng.integers(1, 3)), int(rng.choice([-1, 1])),
                float(rng.uniform(0.05, 0.3)))
        for _ in range(6)
    )
    first, second = ControlSchedule(segs[:3]), ControlSchedule(segs[3:])
    q0 = np.array([0.1, -0.2, 0.05])
    mid = simulate_schedule(HEIS, q0, first, SOLVER)
    end_split = simulate_schedule(HEIS, mid, second, SOLVER)
    end_concat = simulate_schedule(HEIS, q0, first.concat(second), SOLVER)
    assert np.linalg.norm(end_split - end_concat) <= 1e-9


def test_canonical_basis_dedup():
    basis = canonical_bracket_basis(2, 3)
    assert [str(e) for e in basis] == [
        "V1", "V2", "[V1,V2]", "[V1,[V1,V2]]", "[V2,[V1,V2]]",
    ]


def test_bracket_rank_heisenberg_full():
    rng = np.random.default_rng(12)
    for _ in range(5):
        q = rng.uniform(-1, 1, 3)
        assert bracket_rank(HEIS, q, 2).numerical_rank == 3


def test_bracket_rank_constant_fields():
    report = bracket_rank(CONSTANTS, [0.2, 0.4, 0.6], 3)
    assert report.numerical_rank == 2


def test_bracket_rank_single_field():
    single = AffineControlSystem.of([heisenberg_fields()[0]])
    report = bracket_rank(single, [1.0, 1.0, 1.0], 2)
    assert report.numerical_rank == 1


def test_rank_monotone_in_degree():
    ranks = [bracket_rank(HEIS, [0.0, 0.0, 0.0], d).numerical_rank
             for d in (1, 2, 3)]
    assert ranks == sorted(ranks)


def test_bracket_motion_schedule_and_displacement():
    motion = bracket_motion(HEIS, BracketExpression.parse("[V1,V2]"), 0.04)
    assert [(s.field_index, s.sign) for s in motion.segments] == [
        (1, 1), (2, 1), (1, -1), (2, -1)
    ]
    assert all(abs(s.duration - 0.2) <= 1e-15 for s in motion.segments)
    end = simulate_schedule(HEIS, [0.0, 0.0, 0.0], motion, SOLVER)
    assert np.linalg.norm(end - np.array([0.0, 0.0, 0.04])) <= 1e-9


def test_bracket_motion_leaf_and_reversal():
    leaf = bracket_motion(HEIS, BracketExpression.parse("V1"), 0.7)
    assert leaf.segments == (Segment(1, 1, 0.7),)
    reverse = bracket_motion(HEIS, BracketExpression.parse("[V1,V2]"), 0.04,
                             sign=-1)
    end = simulate_schedule(HEIS, [0.0, 0.0, 0.0], reverse, SOLVER)
    assert np.linalg.norm(end - np.array([0.0, 0.0, -0.04])) <= 1e-9


def test_plan_trivial_target():
    result = plan_reach(HEIS, [0.1, 0.2, 0.3], [0.1, 0.2, 0.3], 1e-3, 2, 50,
                        SOLVER)
    assert result.schedule.segments == ()
    assert result.residual == 0.0
    assert result.iterations == 0


def test_plan_pure_bracket_target():
    result = plan_reach(HEIS, [0.0, 0.0, 0.0], [0.0, 0.0, 0.04], 1e-3, 2, 200,
                        SOLVER)
    assert result.residual <= 1e-3


def test_plan_mixed_target():
    result = plan_reach(HEIS, [0.0, 0.0, 0.0], [0.05, -0.03, 0.04], 1e-2, 2,
                        200, SOLVER)
    assert result.residual <= 1e-2
    assert result.iterations <= 200


def test_plan_endpoint_matches_independent_resimulation():
    result = plan_reach(HEIS, [0.0, 0.0, 0.0], [0.02, 0.05, -0.01], 1e-2, 2,
                        200, SOLVER)
    replay = simulate_schedule(HEIS, [0.0, 0.0, 0.0], result.schedule, SOLVER)
    assert np.linalg.norm(replay - result.endpoint) <= 1e-9


def test_plan_schedules_are_admissible():
    result = plan_reach(HEIS, [0.0, 0.0, 0.0], [0.03, 0.02, 0.02], 1e-2, 2,
                        200, SOLVER)
    for seg in result.schedule.segments:
        assert seg.sign in (-1, 1)
        assert seg.duration > 0
        assert 1 <= seg.field_index <= 2


def test_plan_precondition_rank_failure():
    with pytest.raises(PlannerPreconditionError):
        plan_reach(CONSTANTS, [0.0, 0.0, 0.0], [0.0, 0.0, 0.1], 1e-3, 3, 50,
                   SOLVER)


def test_plan_stalls_at_machine_precision_target():
    # residuals near roundoff cannot improve, so the halving valve trips
    from chronoflow import StalledError
    with pytest.raises(StalledError) as info:
        plan_reach(HEIS, [0.0, 0.0, 0.0], [1e-15, 0.0, 0.0], 1e-300, 2, 500,
                   FlowSolver(100))
    assert info.value.best.residual <= 1e-12
    assert info.value.best.schedule.segments == ()


def test_involutive_ceiling_constant_fields():
    # every reachable endpoint stays in q0 + span(fields)
    rng = np.random.default_rng(8)
    q0 = np.array([0.5, -0.5, 0.25])
    for _ in range(10):
        segs = tuple(
            Segment(int(rng.integers(1, 3)), int(rng.choice([-1, 1])),
                    float(rng.uniform(0.05, 0.5)))
            for _ in range(5)
        )
        end = simulate_schedule(CONSTANTS, q0, ControlSchedule(segs), SOLVER)
        assert abs(end[2] - q0[2]) <= 1e-12


def test_schedule_csv_json_roundtrip():
    sched = ControlSchedule((Segment(1, 1, 0.25), Segment(2, -1, 0.125)))
    assert ControlSchedule.from_csv(sched.to_csv()) == sched
    assert ControlSchedule.from_json(sched.to_json()) == sched


def test_rank_report_serialization():
    report = bracket_rank(HEIS, [0.0, 0.0, 0.0], 2)
    doc = report.to_json()
    assert doc["numerical_rank"] == 3
    assert [b["expr"] for b in doc["brackets"]] == ["V1", "V2", "[V1,V2]"]
