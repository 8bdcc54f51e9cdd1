"""Linear inverted pendulum with ZMP dynamic extension.

Each horizontal axis obeys ``xc'' = eta^2 (xc - xz)`` with the ZMP velocity as
input. Propagation uses the exact closed form for a ZMP that is linear in time
over one sample, so every routine here is consistent with the piecewise-linear
ZMP assumed by the controller and the feasibility analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_GRAVITY = 9.81


@dataclass(frozen=True)
class LipParams:
    com_height: float = 0.78
    sample_time: float = 0.01
    gravity: float = DEFAULT_GRAVITY

    def __post_init__(self) -> None:
        if not (self.gravity > 0 and self.com_height > 0 and self.sample_time > 0):
            raise ValueError(
                f"LIP parameters must be positive: g={self.gravity}, "
                f"h_c={self.com_height}, delta={self.sample_time}"
            )

    @property
    def eta(self) -> float:
        return math.sqrt(self.gravity / self.com_height)

    @property
    def decay(self) -> float:
        """Per-sample exponential weight exp(-eta * delta)."""
        return math.exp(-self.eta * self.sample_time)


@dataclass(frozen=True)
class LipAxisState:
    com_pos: float = 0.0
    com_vel: float = 0.0
    zmp_pos: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.com_pos, self.com_vel, self.zmp_pos)):
            raise ValueError(f"non-finite LIP state {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.com_pos, self.com_vel, self.zmp_pos])


@dataclass(frozen=True)
class PlanarState:
    x_axis: LipAxisState = field(default_factory=LipAxisState)
    y_axis: LipAxisState = field(default_factory=LipAxisState)
    time: float = 0.0

    def axis(self, index: int) -> LipAxisState:
        return self.x_axis if index == 0 else self.y_axis

    def check_aligned(self, sample_time: float, tol: float = 1e-9) -> None:
        k = round(self.time / sample_time)
        if abs(k * sample_time - self.time) > tol:
            raise ValueError(f"time {self.time} is not on the {sample_time} s grid")


@dataclass(frozen=True)
class DecomposedState:
    stable: float
    unstable: float
    zmp_pos: float


def decompose(state: LipAxisState, params: LipParams) -> DecomposedState:
    eta = params.eta
    return DecomposedState(
        stable=state.com_pos - state.com_vel / eta,
        unstable=state.com_pos + state.com_vel / eta,
        zmp_pos=state.zmp_pos,
    )


def recompose(d: DecomposedState, params: LipParams) -> LipAxisState:
    return LipAxisState(
        com_pos=0.5 * (d.stable + d.unstable),
        com_vel=0.5 * params.eta * (d.unstable - d.stable),
        zmp_pos=d.zmp_pos,
    )


def unstable_component(state: LipAxisState, params: LipParams) -> float:
    return state.com_pos + state.com_vel / params.eta


def transition_matrices(params: LipParams, dt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact discretization ``s+ = A s + B * zmp_vel`` of the extended LIP over ``dt``.

    State ordering is (com_pos, com_vel, zmp_pos).
    """
    dt = params.sample_time if dt is None else dt
    eta = params.eta
    ch, sh = math.cosh(eta * dt), math.sinh(eta * dt)
    A = np.array(
        [
            [ch, sh / eta, 1.0 - ch],
            [eta * sh, ch, -eta * sh],
            [0.0, 0.0, 1.0],
        ]
    )
    B = np.array([dt - sh / eta, 1.0 - ch, dt])
    return A, B


def step_exact(state: LipAxisState, zmp_vel: float, params: LipParams, dt: float | None = None) -> LipAxisState:
    if not math.isfinite(zmp_vel):
        raise ValueError("zmp velocity must be finite")
    dt = params.sample_time if dt is None else dt
    eta = params.eta
    ch, sh = math.cosh(eta * dt), math.sinh(eta * dt)
    # xc(t) = xz0 + v t + (xc0 - xz0) cosh + (dxc0 - v)/eta sinh
    offset = state.com_pos - state.zmp_pos
    rel_vel = state.com_vel - zmp_vel
    return LipAxisState(
        com_pos=state.zmp_pos + zmp_vel * dt + offset * ch + rel_vel * sh / eta,
        com_vel=zmp_vel + offset * eta * sh + rel_vel * ch,
        zmp_pos=state.zmp_pos + zmp_vel * dt,
    )


def propagate_unstable(xu: float, zmp_start: float, zmp_vel: float, params: LipParams) -> float:
    """Advance the DCM over one sample under the ZMP ramp ``zmp_start + zmp_vel * t``."""
    ed = math.exp(params.eta * params.sample_time)
    eta, dt = params.eta, params.sample_time
    return ed * xu - (ed - 1.0) * zmp_start - zmp_vel * (ed - 1.0 - eta * dt) / eta


@dataclass(frozen=True)
class VelocitySequence:
    """Infinite ZMP velocity sequence: a finite prefix then a zero or periodic suffix.

    ``suffix`` is ``None`` for a truncated sequence; otherwise the block is
    repeated forever after the prefix.
    """

    prefix: tuple[float, ...] = ()
    suffix: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        values = list(self.prefix) + list(self.suffix or ())
        if not all(math.isfinite(v) for v in values):
            raise ValueError("velocity sequence must be finite")
        if self.suffix is not None and len(self.suffix) == 0:
            raise ValueError("periodic suffix must have at least one sample")

    @classmethod
    def of(cls, prefix: Sequence[float], suffix: Sequence[float] | None = None) -> VelocitySequence:
        return cls(tuple(float(v) for v in prefix), None if suffix is None else tuple(float(v) for v in suffix))

    def shifted(self) -> VelocitySequence:
        """Drop the first sample (a periodic suffix rotates when the prefix is empty)."""
        if self.prefix:
            return VelocitySequence(self.prefix[1:], self.suffix)
        if self.suffix is None:
            return self
        return VelocitySequence((), self.suffix[1:] + self.suffix[:1])

    def first(self) -> float:
        if self.prefix:
            return self.prefix[0]
        return self.suffix[0] if self.suffix else 0.0

    def take(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        m = min(n, len(self.prefix))
        out[:m] = self.prefix[:m]
        if self.suffix is not None and n > m:
            reps = -(-(n - m) // len(self.suffix))
            out[m:] = np.tile(self.suffix, reps)[: n - m]
        return out


def weighted_velocity_sum(seq: VelocitySequence, decay: float, start: int = 0) -> float:
    """Closed form of sum_i decay^(start + i) * v_i over the whole sequence."""
    prefix = np.asarray(seq.prefix, dtype=float)
    total = float(np.dot(decay ** np.arange(len(prefix)), prefix)) if len(prefix) else 0.0
    if seq.suffix is not None:
        block = np.asarray(seq.suffix, dtype=float)
        period = len(block)
        block_sum = float(np.dot(decay ** np.arange(period), block))
        total += decay ** len(prefix) * block_sum / (1.0 - decay**period)
    return decay**start * total


def stable_initialization(seq: VelocitySequence, zmp_start: float, params: LipParams) -> float:
    """DCM value that keeps the CoM bounded w.r.t. the ZMP driven by ``seq``."""
    decay = params.decay
    return zmp_start + (1.0 - decay) / params.eta * weighted_velocity_sum(seq, decay)
