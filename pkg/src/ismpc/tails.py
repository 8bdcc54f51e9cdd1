"""Tails and the stability constraint they induce.

The stability constraint ties the current DCM to the exponentially weighted
sum of all future ZMP velocities. Only the first C samples are decision
variables; the rest (the tail) is a conjecture. Each tail yields one linear
equality per axis, written either as a weighted sum of the controlled
velocities or as an equivalent condition on the DCM at the end of the
control horizon.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .footsteps import FootstepPlan
from .lip import DecomposedState, LipParams


class TailKind(enum.Enum):
    TRUNCATED = "truncated"
    PERIODIC = "periodic"
    ANTICIPATIVE = "anticipative"


@dataclass(frozen=True)
class Tail:
    """Conjectured ZMP velocities after the control horizon.

    ``preview`` holds the samples C..P-1 of an anticipative tail. After the
    preview, ``residual`` decides between zero velocities and repeating the
    preview block with period P-C.

    With ``anchor`` set, the tail is tied to positions rather than to the
    ZMP reached at the end of the control horizon: over sample C the ZMP
    returns to ``anchor`` (the centered path at sample C+1) and then follows
    ``preview[1:]``.
    """

    kind: TailKind
    preview: tuple[float, ...] = ()
    residual: TailKind = TailKind.TRUNCATED
    period_samples: int | None = None
    anchor: float | None = None

    def __post_init__(self) -> None:
        if self.kind is not TailKind.ANTICIPATIVE and self.preview:
            raise ValueError("only anticipative tails carry preview samples")
        if self.residual is TailKind.ANTICIPATIVE:
            raise ValueError("residual must be truncated or periodic")
        if self.kind is TailKind.ANTICIPATIVE and self.residual is TailKind.PERIODIC and not self.preview:
            raise ValueError("periodic residual needs a nonempty preview block")
        if not all(math.isfinite(v) for v in self.preview):
            raise ValueError("tail preview must be finite")
        if self.anchor is not None:
            if self.kind is not TailKind.ANTICIPATIVE or self.residual is not TailKind.TRUNCATED or not self.preview:
                raise ValueError("only anticipative tails with a preview and truncated residual can be anchored")
            if not math.isfinite(self.anchor):
                raise ValueError("tail anchor must be finite")

    @classmethod
    def truncated(cls) -> Tail:
        return cls(TailKind.TRUNCATED)

    @classmethod
    def periodic(cls, period_samples: int | None = None) -> Tail:
        return cls(TailKind.PERIODIC, period_samples=period_samples)

    @classmethod
    def anticipative(
        cls, preview: Sequence[float], residual: TailKind = TailKind.TRUNCATED, anchor: float | None = None
    ) -> Tail:
        return cls(TailKind.ANTICIPATIVE, tuple(float(v) for v in preview), residual, anchor=anchor)

    def check_speed(self, v_max: float) -> None:
        if any(abs(v) > v_max for v in self.preview):
            raise ValueError(f"tail velocity exceeds v_max={v_max}")

    def check_horizon(self, horizon_C: int) -> None:
        if self.kind is TailKind.PERIODIC and self.period_samples not in (None, horizon_C):
            raise ValueError(
                f"periodic tail replicates the control horizon; period {self.period_samples} != C={horizon_C}"
            )


@dataclass(frozen=True)
class StabilityConstraintRow:
    """Linear equality ``coeffs . v = rhs_state_gain * xu - zmp_factor * xz + rhs_offset`` on one axis.

    ``zmp_gain`` overrides the factor on ``xz`` when it differs from the one on
    ``xu`` (anchored tails only).
    """

    coeffs: np.ndarray
    rhs_state_gain: float
    rhs_offset: float
    zmp_gain: float | None = None

    @property
    def zmp_factor(self) -> float:
        return self.rhs_state_gain if self.zmp_gain is None else self.zmp_gain

    def rhs(self, xu: float, zmp: float) -> float:
        return self.rhs_state_gain * xu - self.zmp_factor * zmp + self.rhs_offset

    def residual(self, velocities: np.ndarray, xu: float, zmp: float) -> float:
        return float(self.coeffs @ velocities) - self.rhs(xu, zmp)


def tail_weighted_sum(tail: Tail, decay: float, horizon_C: int) -> float:
    """Known part of sum_{i>=C} decay^i * v_i (zero unless the tail is anticipative)."""
    if tail.kind is not TailKind.ANTICIPATIVE or not tail.preview:
        return 0.0
    if tail.anchor is not None:
        raise ValueError("the weighted sum of an anchored tail depends on the ZMP at the horizon end")
    block = np.asarray(tail.preview)
    s = float(decay**horizon_C * np.dot(decay ** np.arange(block.size), block))
    if tail.residual is TailKind.PERIODIC:
        s /= 1.0 - decay**block.size
    return s


def horizon_weights(params: LipParams, horizon_C: int) -> np.ndarray:
    return params.decay ** np.arange(horizon_C)


def build_stability_row(
    tail: Tail, params: LipParams, horizon_C: int, current: DecomposedState | None = None
) -> StabilityConstraintRow:
    """Stability constraint in causal form.

    The state enters only through ``xu - xz``, so ``current`` is optional and
    unused; it is accepted so callers can pass what they have.
    """
    if horizon_C < 1:
        raise ValueError("control horizon must have at least one sample")
    tail.check_horizon(horizon_C)
    decay = params.decay
    gain = params.eta / (1.0 - decay)
    coeffs = horizon_weights(params, horizon_C)
    if tail.kind is TailKind.TRUNCATED:
        return StabilityConstraintRow(coeffs, gain, 0.0)
    if tail.kind is TailKind.PERIODIC:
        # the infinite sum of a C-periodic sequence is the window sum over (1 - decay^C)
        return StabilityConstraintRow(coeffs, gain * (1.0 - decay**horizon_C), 0.0)
    if tail.anchor is not None:
        # v_C = (anchor - z_C) / delta with z_C = z_0 + delta * sum(v): fold it into the row
        dC = decay**horizon_C
        rest = Tail.anticipative(tail.preview[1:]) if len(tail.preview) > 1 else Tail.truncated()
        known = tail_weighted_sum(rest, decay, horizon_C + 1)
        dt = params.sample_time
        return StabilityConstraintRow(coeffs - dC, gain, -dC * tail.anchor / dt - known, gain - dC / dt)
    return StabilityConstraintRow(coeffs, gain, -tail_weighted_sum(tail, decay, horizon_C))


def build_terminal_row(tail: Tail, params: LipParams, horizon_C: int) -> StabilityConstraintRow:
    """Terminal form of the same constraint, as a row on the controlled velocities.

    With ``e_i = xu^{k+i} - xz^{k+i}`` the exact discretization gives
    ``e_C = E^C e_0 - (E-1)/eta * sum_i E^(C-1-i) v_i`` with ``E = exp(eta delta)``.
    Requiring ``e_C`` to equal the tail value yields the returned row.
    """
    tail.check_horizon(horizon_C)
    if tail.anchor is not None:
        raise ValueError("anchored tails have no terminal form here; use the stability row")
    E = math.exp(params.eta * params.sample_time)
    coeffs = (E - 1.0) / params.eta * E ** np.arange(horizon_C - 1, -1, -1, dtype=float)
    EC = E**horizon_C
    if tail.kind is TailKind.TRUNCATED:
        return StabilityConstraintRow(coeffs, EC, 0.0)
    if tail.kind is TailKind.PERIODIC:
        return StabilityConstraintRow(coeffs, EC - 1.0, 0.0)
    offset = terminal_offset(tail, params, horizon_C)
    return StabilityConstraintRow(coeffs, EC, -offset)


def terminal_offset(tail: Tail, params: LipParams, horizon_C: int) -> float:
    """Anticipative terminal offset ``(1-decay)/eta * E^C * sum_{i>=C} decay^i v_i``."""
    decay = params.decay
    return (1.0 - decay) / params.eta * tail_weighted_sum(tail, decay, horizon_C) / decay**horizon_C


def terminal_constraint_value(
    tail: Tail,
    params: LipParams,
    zmp_at_C: float,
    current: DecomposedState | None = None,
    horizon_C: int | None = None,
) -> float:
    """Required DCM at the end of the control horizon."""
    if tail.kind is TailKind.TRUNCATED:
        return zmp_at_C
    if tail.kind is TailKind.PERIODIC:
        if current is None:
            raise ValueError("periodic terminal value needs the current state")
        return zmp_at_C + current.unstable - current.zmp_pos
    if horizon_C is None:
        raise ValueError("anticipative terminal value needs the control horizon")
    return zmp_at_C + terminal_offset(tail, params, horizon_C)


def build_anticipative_preview(
    plan: FootstepPlan, t_k: float, params: LipParams, horizon_C: int, preview_P: int, axis: int
) -> np.ndarray:
    """Velocity samples C..P-1 of the ZMP path through the region centers."""
    if preview_P < horizon_C:
        raise ValueError(f"preview P={preview_P} shorter than control horizon C={horizon_C}")
    dt = params.sample_time
    times = t_k + dt * np.arange(horizon_C, preview_P + 1)
    centers = np.array([plan.centered_zmp(float(t))[axis] for t in times])
    return np.diff(centers) / dt


def anticipative_tail(
    plan: FootstepPlan,
    t_k: float,
    params: LipParams,
    horizon_C: int,
    preview_P: int,
    axis: int,
    residual: TailKind = TailKind.TRUNCATED,
    anchored: bool = False,
) -> Tail:
    preview = build_anticipative_preview(plan, t_k, params, horizon_C, preview_P, axis)
    if residual is TailKind.PERIODIC and preview.size == 0:
        residual = TailKind.TRUNCATED
    if anchored and preview.size:
        k0 = round(t_k / params.sample_time)
        anchor = float(plan.centered_zmp((k0 + horizon_C + 1) * params.sample_time)[axis])
        return Tail.anticipative(preview, TailKind.TRUNCATED, anchor)
    return Tail.anticipative(preview, residual)


def weighted_zmp_integral(zmp: Callable[[float], float], eta: float, horizon: float | None = None) -> float:
    """Quadrature of ``eta * int_0^H exp(-eta t) zmp(t) dt`` with ``H = 20/eta`` by default."""
    H = 20.0 / eta if horizon is None else horizon
    val, _ = integrate.quad(lambda t: eta * math.exp(-eta * t) * zmp(t), 0.0, H, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    value: float
    expected: float
    tol: float

    @property
    def error(self) -> float:
        return abs(self.value - self.expected)

    @property
    def ok(self) -> bool:
        return self.error <= self.tol


def verify_exponential_weighting_properties(params: LipParams, tol: float = 1e-6) -> list[PropertyCheck]:
    """Numerically check the four basic properties of the exponentially weighted ZMP integral."""
    eta = params.eta
    T = 0.5
    step = lambda t: 1.0  # noqa: E731
    ramp = lambda t: t  # noqa: E731
    shifted_ramp = lambda t: max(0.0, t - T)  # noqa: E731
    a, b = 0.7, -1.3
    sine = lambda t: math.sin(2.0 * t)  # noqa: E731
    combo = lambda t: a * ramp(t) + b * sine(t)  # noqa: E731
    H = 20.0 / eta
    checks = [
        PropertyCheck(
            "linearity",
            weighted_zmp_integral(combo, eta, H),
            a * weighted_zmp_integral(ramp, eta, H) + b * weighted_zmp_integral(sine, eta, H),
            tol,
        ),
        PropertyCheck("unit step", weighted_zmp_integral(step, eta, H), 1.0, tol),
        PropertyCheck("unit ramp", weighted_zmp_integral(ramp, eta, H), 1.0 / eta, tol),
        PropertyCheck(
            "time shift",
            weighted_zmp_integral(shifted_ramp, eta, H + T),
            math.exp(-eta * T) * weighted_zmp_integral(ramp, eta, H),
            tol,
        ),
        PropertyCheck("shifted ramp", weighted_zmp_integral(shifted_ramp, eta, H + T), math.exp(-eta * T) / eta, tol),
    ]
    return checks
