from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from ismpc.footsteps import (
    CandidateRequest,
    CruiseParams,
    FootstepPlan,
    KinematicLimits,
    Pose,
    ReferenceVelocity,
    Side,
    VelocitySchedule,
    generate_candidates,
    generate_timing,
    integrate_omega,
    integrate_template,
    kinematic_rows,
    plan_from_offsets,
    regular_plan,
    rotation,
    solve_orientation_qp,
    solve_placement_qp,
    step_duration,
    wrap_angle,
)

CRUISE = CruiseParams()
LIMITS = KinematicLimits()


@pytest.mark.parametrize("v,expected", [(0.15, 0.8), (0.30, 0.5), (0.0, 2.0)])
def test_timing_rule_examples(v, expected):
    assert step_duration(v, CRUISE) == pytest.approx(expected, abs=1e-12)


def test_timing_rule_rejects_bad_input():
    with pytest.raises(ValueError):
        step_duration(-0.1, CRUISE)
    with pytest.raises(ValueError):
        CruiseParams(v_bar=0.2)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_faster_means_shorter_steps(a, b):
    lo, hi = sorted((a, b))
    assert step_duration(hi, CRUISE) <= step_duration(lo, CRUISE)


def test_generate_timing_constant_speed():
    stamps = generate_timing(VelocitySchedule.constant(0.3), 1.0, 3.2, CRUISE)
    np.testing.assert_allclose(stamps, [1.5, 2.0, 2.5, 3.0])


def test_generate_timing_uses_speed_at_step_start():
    sched = VelocitySchedule(((0.0, ReferenceVelocity(0.15)), (1.0, ReferenceVelocity(0.3))))
    np.testing.assert_allclose(generate_timing(sched, 0.0, 3.0, CRUISE), [0.8, 1.6, 2.1, 2.6])


def test_schedule_validation_and_lookup():
    with pytest.raises(ValueError):
        VelocitySchedule(((0.0, ReferenceVelocity()), (0.0, ReferenceVelocity(0.1))))
    sched = VelocitySchedule(((0.0, ReferenceVelocity(0.1)), (2.0, ReferenceVelocity(0.2, omega=0.3))))
    assert sched.at(1.99).vx == 0.1
    assert sched.at(2.0).vx == 0.2
    assert sched.max_speed() == pytest.approx(0.2)
    assert integrate_omega(sched, 1.0, 3.0) == pytest.approx(0.3)


def _unicycle_oracle(sched: VelocitySchedule, pose0: Pose, t0: float, t1: float) -> np.ndarray:
    knots = [t0] + sched.breakpoints(t0, t1) + [t1]
    s = np.array([pose0.x, pose0.y, pose0.theta])
    for a, b in zip(knots, knots[1:]):
        v = sched.at(a)

        def f(t, s, v=v):
            c, sn = math.cos(s[2]), math.sin(s[2])
            return [c * v.vx - sn * v.vy, sn * v.vx + c * v.vy, v.omega]

        s = solve_ivp(f, (a, b), s, rtol=1e-12, atol=1e-13, method="DOP853").y[:, -1]
    return s


@settings(max_examples=20)
@given(
    st.floats(-0.4, 0.4), st.floats(-0.2, 0.2), st.floats(-1.0, 1.0), st.floats(-1, 1), st.floats(0.1, 3.0)
)
def test_template_integration_matches_ode(vx, vy, w, theta0, T):
    sched = VelocitySchedule(((0.0, ReferenceVelocity(vx, vy, w)), (T / 2, ReferenceVelocity(vy, vx, -w))))
    pose = integrate_template(sched, Pose(0.1, -0.2, theta0), 0.0, T)
    ref = _unicycle_oracle(sched, Pose(0.1, -0.2, theta0), 0.0, T)
    np.testing.assert_allclose([pose.x, pose.y, pose.theta], ref, atol=1e-9)


def test_template_circle():
    # v = 0.2, omega = 0.4: a full turn returns to the start, radius 0.5
    T = 2 * math.pi / 0.4
    sched = VelocitySchedule.constant(0.2, 0.0, 0.4)
    half = integrate_template(sched, Pose(0.0, 0.0), 0.0, T / 2)
    full = integrate_template(sched, Pose(0.0, 0.0), 0.0, T)
    assert half.y == pytest.approx(1.0, abs=1e-12)
    assert abs(full.x) < 1e-12 and abs(full.y) < 1e-12


def _orientation_oracle(omega, theta0, limits):
    d = np.clip(omega, -limits.theta_max, limits.theta_max)
    return theta0 + np.cumsum(d)


@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=8), st.floats(-3, 3))
def test_orientation_qp_matches_clipped_differences(omega, theta0):
    got = solve_orientation_qp(omega, theta0, LIMITS)
    np.testing.assert_allclose(got, _orientation_oracle(np.array(omega), theta0, LIMITS), atol=1e-9)


def _project_to_box(delta, theta, side, limits):
    lo, hi = limits.displacement_box(side)
    R = rotation(theta)
    return R @ np.clip(R.T @ delta, lo, hi)


@given(
    st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.6, 0.6)), min_size=1, max_size=6),
    st.sampled_from([Side.LEFT, Side.RIGHT]),
    st.floats(-1, 1),
)
def test_placement_qp_matches_boxwise_projection(steps, side, theta0):
    deltas = np.array([[a, b] for a, b, _ in steps])
    thetas = theta0 + np.cumsum([c for _, _, c in steps])
    start = Pose(0.3, -0.1, theta0)
    got = solve_placement_qp(deltas, start, side, thetas, LIMITS)
    prev, prev_theta, s = start.position, theta0, side
    for j in range(len(steps)):
        d = _project_to_box(deltas[j], prev_theta, s, LIMITS)
        np.testing.assert_allclose(got[j], prev + d, atol=1e-8)
        prev, prev_theta, s = prev + d, thetas[j], s.other()


def test_placement_single_step_brute_force_grid():
    start = Pose(0.0, 0.0, 0.3)
    target = np.array([0.4, 0.1])
    got = solve_placement_qp(target[None, :], start, Side.LEFT, [0.3], LIMITS)[0]
    lo, hi = LIMITS.displacement_box(Side.LEFT)
    R = rotation(0.3)
    best, arg = math.inf, None
    for u in np.linspace(lo[0], hi[0], 301):
        for w in np.linspace(lo[1], hi[1], 301):
            p = R @ np.array([u, w])
            c = float(np.sum((p - target) ** 2))
            if c < best:
                best, arg = c, p
    assert float(np.sum((got - target) ** 2)) <= best + 1e-12
    np.testing.assert_allclose(got, arg, atol=2e-3)


def test_kinematic_rows_contain_feasible_nominal_gait():
    F = 4
    xs = 0.1 * np.arange(1, F + 1)
    start = Pose(0.0, 0.0, 0.0)
    # supporting on the left foot at the origin, the right foot lands 0.18 m to the right
    ys = np.array([-0.18, 0.0, -0.18, 0.0])
    A, lo, hi = kinematic_rows(F, start, Side.LEFT, [0.0] * F, LIMITS)
    ax = A @ np.concatenate([xs, ys])
    assert np.all(ax >= lo - 1e-12) and np.all(ax <= hi + 1e-12)


def test_wrap_angle():
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(-math.pi / 4) == pytest.approx(-math.pi / 4)


def test_plan_validation():
    with pytest.raises(ValueError):
        FootstepPlan((Pose(0.0, 0.0), Pose(0.0, 0.0)), (Side.LEFT, Side.LEFT), (0.0, 1.0))
    with pytest.raises(ValueError):
        FootstepPlan((Pose(0.0, 0.0), Pose(0.0, 0.0)), (Side.LEFT, Side.RIGHT), (1.0, 1.0))
    with pytest.raises(ValueError):
        FootstepPlan((Pose(0.0, 0.0),), (Side.LEFT,), (0.0,), ss_fraction=0.0)


def test_regular_plan_phases_and_center_path():
    plan = regular_plan(4, 0.15, 0.18, 0.5, ss_fraction=0.8, initial_ds=0.5)
    assert plan.phase(0.2) == (-1, 0.0)
    assert plan.phase(0.7) == (0, 0.0)
    j, s = plan.phase(0.95)
    assert j == 0 and s == pytest.approx(0.5)
    np.testing.assert_allclose(plan.centered_zmp(0.95), [0.075, 0.0], atol=1e-12)
    np.testing.assert_allclose(plan.centered_zmp(0.25), [0.0, -0.045], atol=1e-12)
    assert plan.phase(10.0) == (4, 0.0)
    # the ZMP crosses 0.18 m laterally in 0.1 s of double support
    assert plan.max_zmp_speed() == pytest.approx(1.8)


@given(st.lists(st.floats(-1.0, 4.0), min_size=1, max_size=50))
def test_vectorized_phases_match_scalar(times):
    plan = regular_plan(5, 0.15, 0.18, 0.5)
    j, s = plan.phases(np.array(times))
    for t, jj, ss in zip(times, j, s):
        pj, ps = plan.phase(t)
        assert (pj, ps) == (int(jj), pytest.approx(float(ss), abs=1e-12))


def test_centered_path_is_continuous():
    plan = plan_from_offsets([0.0, 0.15, 0.3, 0.15, 0.0], 0.18, 0.5)
    ts = np.linspace(0.0, 3.5, 3501)
    path = np.array([plan.centered_zmp(t) for t in ts])
    assert np.max(np.abs(np.diff(path, axis=0))) < plan.max_zmp_speed() * 0.001 + 1e-9


def _check_kinematics(support, side, thetas, positions):
    prev, prev_theta, s = support.position, support.theta, side
    for j in range(len(thetas)):
        lo, hi = LIMITS.displacement_box(s)
        local = rotation(prev_theta).T @ (positions[j] - prev)
        assert np.all(local >= lo - 1e-8) and np.all(local <= hi + 1e-8)
        assert abs(thetas[j] - prev_theta) <= LIMITS.theta_max + 1e-9
        prev, prev_theta, s = positions[j], thetas[j], s.other()


def test_candidates_for_straight_cruise():
    support = Pose(0.0, -0.09, 0.0)
    req = CandidateRequest(VelocitySchedule.constant(0.15), support, Side.RIGHT, 0.0, 3.2)
    stamps, thetas, pos, sides = generate_candidates(req)
    np.testing.assert_allclose(stamps, [0.8, 1.6, 2.4, 3.2])
    assert sides == [Side.LEFT, Side.RIGHT, Side.LEFT, Side.RIGHT]
    np.testing.assert_allclose(np.diff(np.vstack([support.position, pos])[:, 0]), 0.12, atol=1e-9)
    np.testing.assert_allclose(pos[:, 1], [0.09, -0.09, 0.09, -0.09], atol=1e-9)
    np.testing.assert_allclose(thetas, 0.0, atol=1e-12)


@given(st.floats(-0.3, 0.3), st.floats(-0.1, 0.1), st.floats(-0.8, 0.8), st.sampled_from([Side.LEFT, Side.RIGHT]))
def test_candidates_respect_kinematic_limits(vx, vy, w, side):
    support = Pose(0.2, 0.1, 0.4)
    req = CandidateRequest(VelocitySchedule.constant(vx, vy, w), support, side, 1.0, 4.2)
    stamps, thetas, pos, sides = generate_candidates(req)
    assert len(stamps) >= 1
    _check_kinematics(support, side, thetas, pos)


def test_no_candidates_when_preview_is_short():
    req = CandidateRequest(VelocitySchedule.constant(0.0), Pose(0.0, 0.0), Side.LEFT, 0.0, 1.0)
    stamps, thetas, pos, sides = generate_candidates(req)
    assert stamps == [] and pos.shape == (0, 2)
