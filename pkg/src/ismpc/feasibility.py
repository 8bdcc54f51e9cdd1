"""Feasibility regions of the stability-constrained QP.

Two views of the same question are provided.

The continuous view treats the ZMP bounds over the control horizon and the
tail as functions of time. The admissible DCM values then form an interval
whose width is ``d_z (1 - exp(-eta Tc))`` whatever the footstep sequence.

The discrete view is exact for the QP actually solved: the initial ZMP is
the measured one, the ZMP is piecewise linear on the sampling grid and the
tail is expressed in velocities. It is what decides whether an iteration
is solvable and is used for the margins logged during a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .footsteps import FootstepPlan
from .lip import LipParams
from .tails import StabilityConstraintRow


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through knots, held constant outside them."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("knot times and values must be nonempty 1-D arrays of equal length")
        if np.any(np.diff(t) < 0):
            raise ValueError("knot times must be non-decreasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float, t0: float = 0.0) -> PiecewiseLinear:
        return cls(np.array([t0]), np.array([value]))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def shifted(self, offset: float) -> PiecewiseLinear:
        return PiecewiseLinear(self.times, self.values + offset)


def _ramp_integral(p: float, q: float, a: float, b: float, eta: float, ref: float) -> float:
    """eta * int_a^b exp(-eta (t - ref)) (p + q (t - a)) dt."""
    ea, eb = math.exp(-eta * (a - ref)), math.exp(-eta * (b - ref))
    return p * (ea - eb) + q * ((ea - eb) / eta - (b - a) * eb)


def exp_weighted_integral(f: PiecewiseLinear, eta: float, ref: float, a: float, b: float = math.inf) -> float:
    """Closed form of ``eta * int_a^b exp(-eta (t - ref)) f(t) dt`` for piecewise-linear ``f``."""
    if b < a:
        raise ValueError("integration bounds reversed")
    cuts = [a] + [float(t) for t in f.times if a < t < b] + ([b] if math.isfinite(b) else [])
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        p0, p1 = f(lo), f(hi)
        q = (p1 - p0) / (hi - lo) if hi > lo else 0.0
        total += _ramp_integral(p0, q, lo, hi, eta, ref)
    if not math.isfinite(b):
        total += f(cuts[-1]) * math.exp(-eta * (cuts[-1] - ref))
    return total


@dataclass(frozen=True)
class ZmpBoundProfile:
    lower: PiecewiseLinear
    upper: PiecewiseLinear

    def width(self, t: float) -> float:
        return self.upper(t) - self.lower(t)

    def check_constant_width(self, dz: float, tol: float = 1e-12) -> None:
        for t in np.concatenate([self.lower.times, self.upper.times]):
            if abs(self.width(float(t)) - dz) > tol:
                raise ValueError(f"bound width {self.width(float(t))} != {dz} at t={t}")


@dataclass(frozen=True)
class FeasibilityInterval:
    lower: float
    upper: float
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, xu: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= xu <= self.upper + tol


def feasibility_margin(xu: float, interval: FeasibilityInterval) -> float:
    return min(xu - interval.lower, interval.upper - xu)


def interval_width(params: LipParams, Tc: float, dz: float) -> float:
    return dz * (1.0 - math.exp(-params.eta * Tc))


def feasibility_interval(
    bounds: ZmpBoundProfile,
    tail: PiecewiseLinear | float,
    params: LipParams,
    Tc: float,
    t_k: float = 0.0,
) -> FeasibilityInterval:
    """DCM interval for ZMP bounds on [t_k, t_k + Tc] followed by a given ZMP tail position."""
    eta = params.eta
    tail_pl = tail if isinstance(tail, PiecewiseLinear) else PiecewiseLinear.constant(float(tail), t_k + Tc)
    t_end = t_k + Tc
    tail_part = exp_weighted_integral(tail_pl, eta, t_k, t_end)
    lo = exp_weighted_integral(bounds.lower, eta, t_k, t_k, t_end) + tail_part
    hi = exp_weighted_integral(bounds.upper, eta, t_k, t_k, t_end) + tail_part
    return FeasibilityInterval(lo, hi, t_k)


@dataclass(frozen=True)
class WitnessTrajectory:
    """Feasible ZMP path certifying membership: shifted upper bound, then the tail."""

    bounds: ZmpBoundProfile
    shift: float
    tail: PiecewiseLinear
    t_k: float
    Tc: float

    def __call__(self, t: float) -> float:
        if t <= self.t_k + self.Tc:
            return self.bounds.upper(t) - self.shift
        return self.tail(t)


def witness_trajectory(
    xu: float,
    bounds: ZmpBoundProfile,
    interval: FeasibilityInterval,
    params: LipParams,
    Tc: float,
    tail: PiecewiseLinear | float,
    t_k: float = 0.0,
    tol: float = 1e-12,
) -> WitnessTrajectory:
    if feasibility_margin(xu, interval) < -tol:
        raise ValueError(f"xu={xu} lies outside [{interval.lower}, {interval.upper}]")
    shift = (interval.upper - xu) / (1.0 - math.exp(-params.eta * Tc))
    tail_pl = tail if isinstance(tail, PiecewiseLinear) else PiecewiseLinear.constant(float(tail), t_k + Tc)
    return WitnessTrajectory(bounds, shift, tail_pl, t_k, Tc)


def recursive_feasibility_preview_bound(params: LipParams, Tc: float, v_max: float, dz: float) -> float:
    """Preview length that suffices for recursive feasibility with the anticipative tail."""
    if v_max <= 0 or dz <= 0:
        raise ValueError("v_max and dz must be positive")
    eta = params.eta
    return Tc + max(0.0, math.log(2.0 * v_max / (eta * dz)) / eta)


def default_v_max(plan: FootstepPlan) -> float:
    return plan.max_zmp_speed()


def bound_profile(
    plan: FootstepPlan, t_k: float, Tc: float, axis: int, dz: float, sample_time: float
) -> ZmpBoundProfile:
    """Axis bounds around the centered ZMP path, sampled on the control grid."""
    times = t_k + sample_time * np.arange(round(Tc / sample_time) + 1)
    center = np.array([plan.centered_zmp(float(t))[axis] for t in times])
    return ZmpBoundProfile(PiecewiseLinear(times, center - dz / 2), PiecewiseLinear(times, center + dz / 2))


def centered_tail(plan: FootstepPlan, t_k: float, Tc: float, Tp: float, axis: int, sample_time: float) -> PiecewiseLinear:
    """Anticipative tail as a position: centered path on [Tc, Tp], then held (truncated residual)."""
    times = t_k + Tc + sample_time * np.arange(round((Tp - Tc) / sample_time) + 1)
    return PiecewiseLinear(times, np.array([plan.centered_zmp(float(t))[axis] for t in times]))


def track_regions(
    times: Sequence[float],
    plan: FootstepPlan,
    params: LipParams,
    Tc: float,
    Tp: float,
    dz: float,
    axis: int = 0,
    check_width: bool = True,
) -> list[FeasibilityInterval]:
    """Feasibility intervals along a run for the anticipative tail (continuous view)."""
    out = []
    expected = interval_width(params, Tc, dz)
    for t in times:
        b = bound_profile(plan, float(t), Tc, axis, dz, params.sample_time)
        iv = feasibility_interval(b, centered_tail(plan, float(t), Tc, Tp, axis, params.sample_time), params, Tc, float(t))
        if check_width and abs(iv.width - expected) > 1e-9:
            raise AssertionError(f"interval width {iv.width} differs from {expected} at t={t}")
        out.append(iv)
    return out


def discrete_interval(
    row: StabilityConstraintRow,
    lower: np.ndarray,
    upper: np.ndarray,
    zmp_now: float,
    sample_time: float,
    time: float = 0.0,
) -> FeasibilityInterval:
    """Exact DCM interval for which one axis of the QP is solvable.

    The row reads ``c . v = gain xu - zmp_gain z_0 + offset`` with
    ``v_i = (z_{i+1} - z_i) / delta`` and box bounds on ``z_1..z_C``. Summing by
    parts, ``c . v = (sum_j (c_{j-1} - c_j) z_j - c_0 z_0) / delta`` with
    ``c_C = 0``, so each ``z_j`` ranges independently over its box.
    """
    c = np.asarray(row.coeffs, dtype=float)
    w = (c - np.append(c[1:], 0.0)) / sample_time
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    s_min = float(np.sum(np.minimum(w * lo, w * hi))) - c[0] * zmp_now / sample_time
    s_max = float(np.sum(np.maximum(w * lo, w * hi))) - c[0] * zmp_now / sample_time
    zw = row.zmp_factor * zmp_now
    a = (s_min + zw - row.rhs_offset) / row.rhs_state_gain
    b = (s_max + zw - row.rhs_offset) / row.rhs_state_gain
    return FeasibilityInterval(min(a, b), max(a, b), time)


def quadrature_dcm(zmp: Callable[[float], float], eta: float, t_k: float, horizon: float, knots: Sequence[float] = ()) -> float:
    """Numerical ``eta * int exp(-eta (t - t_k)) zmp(t) dt`` over [t_k, t_k + horizon] (test oracle)."""
    pts = [t for t in knots if t_k < t < t_k + horizon]
    val, _ = integrate.quad(
        lambda t: eta * math.exp(-eta * (t - t_k)) * zmp(t),
        t_k,
        t_k + horizon,
        points=pts or None,
        limit=max(200, 4 * len(pts) + 50),
        epsabs=1e-13,
        epsrel=1e-12,
    )
    return val
