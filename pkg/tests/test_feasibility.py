from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ismpc.feasibility import (
    FeasibilityInterval,
    PiecewiseLinear,
    ZmpBoundProfile,
    bound_profile,
    centered_tail,
    discrete_interval,
    exp_weighted_integral,
    feasibility_interval,
    feasibility_margin,
    interval_width,
    quadrature_dcm,
    recursive_feasibility_preview_bound,
    track_regions,
    witness_trajectory,
)
from ismpc.footsteps import regular_plan
from ismpc.lip import DEFAULT_GRAVITY, LipParams
from ismpc.qp import QpProblem, QpStatus, solve
from ismpc.tails import Tail, build_stability_row

P = LipParams(0.78, 0.01)


def _random_pl(rng, t0, t1, n):
    times = np.sort(rng.uniform(t0, t1, size=n))
    return PiecewiseLinear(times, rng.normal(scale=0.1, size=n))


def test_piecewise_linear_validation():
    with pytest.raises(ValueError):
        PiecewiseLinear(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        PiecewiseLinear(np.array([]), np.array([]))
    f = PiecewiseLinear(np.array([0.0, 1.0]), np.array([0.0, 2.0]))
    assert f(0.5) == 1.0 and f(5.0) == 2.0 and f.shifted(1.0)(-1.0) == 1.0


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.5), st.floats(0.1, 2.0))
def test_closed_form_weighted_integral_matches_quadrature(seed, a, span):
    rng = np.random.default_rng(seed)
    f = _random_pl(rng, -0.5, 3.0, int(rng.integers(1, 8)))
    b = a + span
    got = exp_weighted_integral(f, P.eta, a, a, b)
    ref = quadrature_dcm(f, P.eta, a, span, list(f.times))
    assert got == pytest.approx(ref, abs=1e-8)


def test_infinite_integral_of_constant_tail():
    f = PiecewiseLinear.constant(0.3, 1.0)
    # eta * int_1^inf exp(-eta t) 0.3 dt = 0.3 exp(-eta)
    assert exp_weighted_integral(f, P.eta, 0.0, 1.0) == pytest.approx(0.3 * math.exp(-P.eta), abs=1e-14)
    with pytest.raises(ValueError):
        exp_weighted_integral(f, P.eta, 0.0, 1.0, 0.5)


@pytest.mark.parametrize("seed", range(20))
def test_interval_width_is_footstep_independent(seed):
    rng = np.random.default_rng(seed)
    eta, Tc, dz = rng.uniform(2.0, 6.0), rng.uniform(0.2, 2.0), rng.uniform(0.01, 0.1)
    params = LipParams(DEFAULT_GRAVITY / eta**2)
    centre = _random_pl(rng, 0.0, Tc, 6)
    bounds = ZmpBoundProfile(centre.shifted(-dz / 2), centre.shifted(dz / 2))
    iv = feasibility_interval(bounds, rng.normal(), params, Tc)
    assert iv.width == pytest.approx(dz * (1 - math.exp(-eta * Tc)), abs=1e-9)
    assert interval_width(params, Tc, dz) == pytest.approx(iv.width, abs=1e-12)


def test_interval_width_nominal_value():
    params = LipParams(DEFAULT_GRAVITY / 3.5464**2)
    assert interval_width(params, 0.5, 0.04) == pytest.approx(0.033209, abs=1e-6)


def test_bound_profile_rejects_uneven_width():
    b = ZmpBoundProfile(PiecewiseLinear.constant(0.0), PiecewiseLinear.constant(0.05))
    b.check_constant_width(0.05)
    with pytest.raises(ValueError):
        b.check_constant_width(0.04)


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_witness_reproduces_dcm_and_respects_bounds(seed, frac):
    rng = np.random.default_rng(seed)
    Tc, dz = 0.8, 0.04
    centre = _random_pl(rng, 0.0, Tc, 5)
    bounds = ZmpBoundProfile(centre.shifted(-dz / 2), centre.shifted(dz / 2))
    tail = float(rng.normal(scale=0.1))
    iv = feasibility_interval(bounds, tail, P, Tc)
    xu = iv.lower + frac * iv.width
    w = witness_trajectory(xu, bounds, iv, P, Tc, tail)
    ts = np.linspace(0.0, Tc, 201)
    zs = np.array([w(t) for t in ts])
    lo = np.array([bounds.lower(t) for t in ts])
    hi = np.array([bounds.upper(t) for t in ts])
    assert np.all(zs >= lo - 1e-12) and np.all(zs <= hi + 1e-12)
    knots = list(centre.times) + [Tc]
    val = quadrature_dcm(w, P.eta, 0.0, Tc, knots) + tail * math.exp(-P.eta * Tc)
    assert val == pytest.approx(xu, abs=1e-9)


def test_witness_rejects_outside_point():
    b = ZmpBoundProfile(PiecewiseLinear.constant(-0.02), PiecewiseLinear.constant(0.02))
    iv = feasibility_interval(b, 0.0, P, 0.5)
    with pytest.raises(ValueError):
        witness_trajectory(iv.upper + 1e-3, b, iv, P, 0.5, 0.0)


def test_interval_and_margin_helpers():
    iv = FeasibilityInterval(-0.1, 0.2)
    assert iv.contains(0.0) and not iv.contains(0.3) and iv.contains(0.2 + 1e-9, tol=1e-8)
    assert feasibility_margin(0.15, iv) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        FeasibilityInterval(1.0, 0.0)


def test_preview_bound_formula():
    eta, dz, vmax, tc = 3.5464, 0.04, 0.3, 0.5
    params = LipParams(DEFAULT_GRAVITY / eta**2)
    expected = tc + math.log(2 * vmax / (eta * dz)) / eta
    assert recursive_feasibility_preview_bound(params, tc, vmax, dz) == pytest.approx(expected, rel=1e-4)
    # slow tails need no extra preview
    assert recursive_feasibility_preview_bound(params, tc, 0.01, dz) == tc
    with pytest.raises(ValueError):
        recursive_feasibility_preview_bound(params, tc, 0.0, dz)


def test_tracked_regions_have_constant_width():
    plan = regular_plan(8, 0.15, 0.18, 0.5, ss_fraction=0.8, initial_ds=0.5)
    ivs = track_regions(np.arange(0.0, 3.0, 0.1), plan, P, 0.5, 1.43, 0.04, axis=1)
    np.testing.assert_allclose([iv.width for iv in ivs], interval_width(P, 0.5, 0.04), atol=1e-9)
    tail = centered_tail(plan, 0.0, 0.5, 1.43, 0, P.sample_time)
    assert tail.times[0] == pytest.approx(0.5)
    b = bound_profile(plan, 0.0, 0.5, 0, 0.04, P.sample_time)
    b.check_constant_width(0.04)


def _axis_qp_feasible(row, lo, hi, z0, xu, dt):
    C = row.coeffs.size
    L = np.tril(np.ones((C, C))) * dt
    problem = QpProblem(
        np.eye(C),
        np.zeros(C),
        eq_matrix=row.coeffs[None, :],
        eq_rhs=[row.rhs(xu, z0)],
        ineq_matrix=L,
        ineq_lower=lo - z0,
        ineq_upper=hi - z0,
    )
    return solve(problem).status is not QpStatus.INFEASIBLE


@pytest.mark.parametrize(
    "tail", [Tail.truncated(), Tail.periodic(), Tail.anticipative([0.3] * 20), Tail.anticipative([0.2] * 30, anchor=0.05)]
)
def test_discrete_interval_predicts_qp_solvability(tail, rng):
    C = 30
    row = build_stability_row(tail, P, C)
    for _ in range(40):
        centre = np.cumsum(rng.normal(scale=0.003, size=C))
        lo, hi = centre - 0.02, centre + 0.02
        z0 = float(rng.uniform(lo[0] - 0.005, hi[0] + 0.005))
        iv = discrete_interval(row, lo, hi, z0, P.sample_time)
        for xu in (iv.lower - 1e-4, iv.lower + 1e-4, 0.5 * (iv.lower + iv.upper), iv.upper - 1e-4, iv.upper + 1e-4):
            assert _axis_qp_feasible(row, lo, hi, z0, xu, P.sample_time) == iv.contains(xu)
