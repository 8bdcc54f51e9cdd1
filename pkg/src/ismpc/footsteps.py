"""Candidate footstep generation from high-level reference velocities.

Timing comes first (a step lasts longer when the commanded speed is low),
then orientations and positions are chosen by two small QPs that follow the
trajectory of an omnidirectional template robot while respecting the
kinematic limits of the biped.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qp import QpProblem, solve

TIME_EPS = 1e-9


class PlanningError(RuntimeError):
    pass


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def sign(self) -> float:
        """Coronal offset sign of this foot relative to the walking path."""
        return 1.0 if self is Side.LEFT else -1.0

    def other(self) -> Side:
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def wrap_angle(theta: float) -> float:
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class ReferenceVelocity:
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.vx, self.vy, self.omega)):
            raise ValueError(f"non-finite reference velocity {self}")

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class VelocitySchedule:
    """Piecewise-constant reference velocity: each entry holds from its start time on."""

    segments: tuple[tuple[float, ReferenceVelocity], ...] = ((0.0, ReferenceVelocity()),)

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("velocity schedule needs at least one segment")
        times = [t for t, _ in self.segments]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"schedule times must be strictly increasing: {times}")

    @classmethod
    def constant(cls, vx: float = 0.0, vy: float = 0.0, omega: float = 0.0) -> VelocitySchedule:
        return cls(((0.0, ReferenceVelocity(vx, vy, omega)),))

    def at(self, t: float) -> ReferenceVelocity:
        current = self.segments[0][1]
        for start, vel in self.segments:
            if start <= t + TIME_EPS:
                current = vel
            else:
                break
        return current

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return [t for t, _ in self.segments if t0 < t < t1]

    def max_speed(self) -> float:
        return max(v.speed for _, v in self.segments)


@dataclass(frozen=True)
class CruiseParams:
    v_bar: float = 0.15
    ts_bar: float = 0.8
    ls_bar: float = 0.12
    alpha: float = 0.1

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.ts_bar <= 0:
            raise ValueError("alpha and ts_bar must be positive")
        if abs(self.v_bar - self.ls_bar / self.ts_bar) > 1e-9:
            raise ValueError(f"cruise parameters inconsistent: v_bar={self.v_bar} != {self.ls_bar}/{self.ts_bar}")


@dataclass(frozen=True)
class KinematicLimits:
    theta_max: float = math.pi / 8
    ell: float = 0.18
    da_x: float = 0.3
    da_y: float = 0.07

    def __post_init__(self) -> None:
        if min(self.theta_max, self.ell, self.da_x, self.da_y) <= 0:
            raise ValueError(f"kinematic limits must be positive: {self}")

    def displacement_box(self, support_side: Side) -> tuple[np.ndarray, np.ndarray]:
        """Bounds on the next footstep displacement, expressed in the support foot frame."""
        center = np.array([0.0, -support_side.sign * self.ell])
        half = 0.5 * np.array([self.da_x, self.da_y])
        return center - half, center + half


def step_duration(v: float, cruise: CruiseParams) -> float:
    if v < 0:
        raise ValueError("speed must be non-negative")
    return cruise.ts_bar * (cruise.alpha + cruise.v_bar) / (cruise.alpha + v)


def generate_timing(
    schedule: VelocitySchedule, last_step_time: float, preview_end: float, cruise: CruiseParams
) -> list[float]:
    """Footstep timestamps after ``last_step_time`` that fit in the preview window."""
    stamps: list[float] = []
    t = last_step_time
    while True:
        t = t + step_duration(schedule.at(t).speed, cruise)
        if t > preview_end + TIME_EPS:
            return stamps
        stamps.append(t)


def _advance(pose: Pose, vel: ReferenceVelocity, dt: float) -> Pose:
    th0 = pose.theta
    if abs(vel.omega) < 1e-12:
        c, s = math.cos(th0), math.sin(th0)
        return Pose(pose.x + (c * vel.vx - s * vel.vy) * dt, pose.y + (s * vel.vx + c * vel.vy) * dt, th0)
    th1 = th0 + vel.omega * dt
    w = vel.omega
    dx = (vel.vx * (math.sin(th1) - math.sin(th0)) + vel.vy * (math.cos(th1) - math.cos(th0))) / w
    dy = (-vel.vx * (math.cos(th1) - math.cos(th0)) + vel.vy * (math.sin(th1) - math.sin(th0))) / w
    return Pose(pose.x + dx, pose.y + dy, th1)


def integrate_template(schedule: VelocitySchedule, pose0: Pose, t0: float, t1: float) -> Pose:
    """Pose of the omnidirectional template robot at ``t1`` (exact for piecewise-constant input)."""
    if t1 < t0 - TIME_EPS:
        raise ValueError("t1 must not precede t0")
    pose, t = pose0, t0
    for tb in schedule.breakpoints(t0, t1) + [t1]:
        if tb > t:
            pose = _advance(pose, schedule.at(t), tb - t)
            t = tb
    return pose


def template_trajectory(schedule: VelocitySchedule, pose0: Pose, t0: float, times: Sequence[float]) -> list[Pose]:
    poses, pose, t = [], pose0, t0
    for tq in times:
        pose = integrate_template(schedule, pose, t, tq)
        t = tq
        poses.append(pose)
    return poses


def integrate_omega(schedule: VelocitySchedule, t0: float, t1: float) -> float:
    total, t = 0.0, t0
    for tb in schedule.breakpoints(t0, t1) + [t1]:
        if tb > t:
            total += schedule.at(t).omega * (tb - t)
            t = tb
    return total


def _difference_matrix(F: int) -> np.ndarray:
    return np.eye(F) - np.eye(F, k=-1)


def solve_orientation_qp(omega_integrals: Sequence[float], theta0: float, limits: KinematicLimits) -> np.ndarray:
    omega = np.asarray(omega_integrals, dtype=float)
    F = omega.size
    if F == 0:
        return np.zeros(0)
    D = _difference_matrix(F)
    e1 = np.zeros(F)
    e1[0] = theta0
    problem = QpProblem(
        hessian=2.0 * D.T @ D,
        linear_cost=-2.0 * D.T @ (omega + e1),
        ineq_matrix=D,
        ineq_lower=e1 - limits.theta_max,
        ineq_upper=e1 + limits.theta_max,
    )
    sol = solve(problem)
    if not sol.ok:
        raise PlanningError(f"orientation QP failed: {sol.status.value}")
    return sol.primal


def solve_placement_qp(
    deltas: np.ndarray,
    start_foot: Pose,
    start_side: Side,
    orientations: Sequence[float],
    limits: KinematicLimits,
) -> np.ndarray:
    """Footstep positions (F x 2) closest to the target displacements under the kinematic boxes.

    ``orientations[j]`` is the orientation of the j-th new footstep; the
    first box is expressed in the frame of ``start_foot``.
    """
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 2)
    F = deltas.shape[0]
    if F == 0:
        return np.zeros((0, 2))
    D = _difference_matrix(F)
    Z = np.zeros((F, F))
    # variable order (x_1..x_F, y_1..y_F)
    H = 2.0 * np.block([[D.T @ D, Z], [Z, D.T @ D]])
    tx = deltas[:, 0].copy()
    ty = deltas[:, 1].copy()
    tx[0] += start_foot.x
    ty[0] += start_foot.y
    g = -2.0 * np.concatenate([D.T @ tx, D.T @ ty])
    A, lo, hi = kinematic_rows(F, start_foot, start_side, orientations, limits)
    sol = solve(QpProblem(H, g, ineq_matrix=A, ineq_lower=lo, ineq_upper=hi))
    if not sol.ok:
        raise PlanningError(f"footstep placement QP failed: {sol.status.value}")
    return np.column_stack([sol.primal[:F], sol.primal[F:]])


def kinematic_rows(
    F: int, start_foot: Pose, start_side: Side, orientations: Sequence[float], limits: KinematicLimits
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilateral rows on (x_1..x_F, y_1..y_F) for consecutive-footstep kinematic boxes."""
    A = np.zeros((2 * F, 2 * F))
    lo = np.zeros(2 * F)
    hi = np.zeros(2 * F)
    side = start_side
    prev_theta = start_foot.theta
    for j in range(F):
        box_lo, box_hi = limits.displacement_box(side)
        c, s = math.cos(prev_theta), math.sin(prev_theta)
        # R^T (f_j - f_{j-1})
        rot_t = np.array([[c, s], [-s, c]])
        for r in range(2):
            A[2 * j + r, j] = rot_t[r, 0]
            A[2 * j + r, F + j] = rot_t[r, 1]
            if j > 0:
                A[2 * j + r, j - 1] = -rot_t[r, 0]
                A[2 * j + r, F + j - 1] = -rot_t[r, 1]
        offset = rot_t @ start_foot.position if j == 0 else np.zeros(2)
        lo[2 * j : 2 * j + 2] = box_lo + offset
        hi[2 * j : 2 * j + 2] = box_hi + offset
        prev_theta = orientations[j]
        side = side.other()
    return A, lo, hi


@dataclass(frozen=True)
class FootstepPlan:
    """Footsteps with timing.

    ``timestamps[j]`` is the start of single support on footstep j. The step
    from j to j+1 spends ``ss_fraction`` of its duration in single support on j
    and the rest in double support while the ZMP region moves to j+1. After
    the last footstep the robot stands on it. When ``initial_other`` is given,
    the robot stands on both feet from ``start_time`` to ``timestamps[0]``.
    """

    poses: tuple[Pose, ...]
    sides: tuple[Side, ...]
    timestamps: tuple[float, ...]
    ss_fraction: float = 0.6
    initial_other: Pose | None = None
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if not (len(self.poses) == len(self.sides) == len(self.timestamps)) or not self.poses:
            raise ValueError("poses, sides and timestamps must be nonempty and of equal length")
        if any(a == b for a, b in zip(self.sides, self.sides[1:])):
            raise ValueError("footstep sides must alternate")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("footstep timestamps must be strictly increasing")
        if not 0.0 < self.ss_fraction <= 1.0:
            raise ValueError("ss_fraction must lie in (0, 1]")
        if self.initial_other is not None and self.start_time > self.timestamps[0] + TIME_EPS:
            raise ValueError("start_time is after the first footstep")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def durations(self) -> tuple[float, ...]:
        ts = self.timestamps
        return tuple(b - a for a, b in zip(ts, ts[1:]))

    def ds_start(self, j: int) -> float:
        """Start of the double support that ends on footstep j (its touchdown)."""
        T = self.timestamps[j] - self.timestamps[j - 1]
        return self.timestamps[j - 1] + self.ss_fraction * T

    def phase(self, t: float) -> tuple[int, float]:
        """(j, sigma): the region is footstep j blended by sigma toward j+1; j=-1 is the initial stance."""
        ts = self.timestamps
        if t < ts[0] - TIME_EPS:
            return (-1, 0.0) if self.initial_other is not None else (0, 0.0)
        j = bisect.bisect_right(ts, t + TIME_EPS) - 1
        if j >= len(ts) - 1:
            return len(ts) - 1, 0.0
        tds = self.ds_start(j + 1)
        if t <= tds + TIME_EPS:
            return j, 0.0
        return j, min(1.0, (t - tds) / (ts[j + 1] - tds))

    def phases(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`phase` over an array of times."""
        times = np.asarray(times, dtype=float)
        ts = np.asarray(self.timestamps)
        last = len(ts) - 1
        j = np.searchsorted(ts, times + TIME_EPS, side="right") - 1
        sigma = np.zeros(times.shape)
        before = times < ts[0] - TIME_EPS
        j = np.where(before, -1 if self.initial_other is not None else 0, j)
        moving = (j >= 0) & (j < last) & ~before
        jm = j[moving]
        t_next = ts[jm + 1]
        tds = ts[jm] + self.ss_fraction * (t_next - ts[jm])
        sig = np.where(times[moving] <= tds + TIME_EPS, 0.0, np.minimum(1.0, (times[moving] - tds) / (t_next - tds)))
        sigma[moving] = sig
        j = np.minimum(j, last)
        return j, sigma

    def with_poses(self, poses: Sequence[Pose]) -> FootstepPlan:
        return FootstepPlan(
            tuple(poses), self.sides, self.timestamps, self.ss_fraction, self.initial_other, self.start_time
        )

    def initial_box(self, dz_x: float, dz_y: float) -> tuple[np.ndarray, float, np.ndarray]:
        """Center, orientation and half sizes of the region covering both initial feet."""
        f0, f1 = self.poses[0], self.initial_other
        theta = f0.theta
        rot_t = rotation(theta).T
        corners = []
        for f in (f0, f1):
            for sx in (-0.5, 0.5):
                for sy in (-0.5, 0.5):
                    local = rotation(f.theta - theta) @ np.array([sx * dz_x, sy * dz_y])
                    corners.append(rot_t @ f.position + local)
        corners = np.array(corners)
        lo, hi = corners.min(axis=0), corners.max(axis=0)
        return rotation(theta) @ (0.5 * (lo + hi)), theta, 0.5 * (hi - lo)

    def centered_zmp(self, t: float) -> np.ndarray:
        """ZMP path through the middle of the admissible regions.

        During the initial stance the path slides linearly from the midpoint
        of the two feet to the first support foot.
        """
        j, sigma = self.phase(t)
        if j < 0:
            mid = 0.5 * (self.poses[0].position + self.initial_other.position)
            span = self.timestamps[0] - self.start_time
            frac = 1.0 if span <= 0 else min(1.0, max(0.0, (t - self.start_time) / span))
            return mid + frac * (self.poses[0].position - mid)
        p = self.poses[j].position
        if sigma > 0.0:
            p = (1.0 - sigma) * p + sigma * self.poses[j + 1].position
        return p

    def max_zmp_speed(self) -> float:
        """Largest centered-ZMP speed along the plan (displacement over double-support time)."""
        best = 0.0
        for j in range(1, len(self.poses)):
            tds = self.timestamps[j] - self.ds_start(j)
            if tds > 0:
                d = np.abs(self.poses[j].position - self.poses[j - 1].position)
                best = max(best, float(d.max()) / tds)
        if self.initial_other is not None:
            span = self.timestamps[0] - self.start_time
            if span > 0:
                mid = 0.5 * (self.poses[0].position + self.initial_other.position)
                best = max(best, float(np.abs(self.poses[0].position - mid).max()) / span)
        return best

    def check_min_duration(self, cruise: CruiseParams, v_max: float) -> None:
        floor = step_duration(v_max, cruise)
        for d in self.durations:
            if d < floor - TIME_EPS:
                raise ValueError(f"step duration {d} below the timing-rule minimum {floor}")


def regular_plan(
    n_steps: int,
    step_length: float,
    step_width: float,
    step_duration_s: float,
    first_side: Side = Side.RIGHT,
    ss_fraction: float = 0.8,
    initial_ds: float = 0.5,
    lateral_step: float = 0.0,
    start_time: float = 0.0,
) -> FootstepPlan:
    """Evenly spaced straight-line gait starting from both feet side by side at x=0.

    The first support foot keeps its initial place; every later footstep
    advances by ``step_length``. The robot stops on the last footstep.
    """
    poses, sides, stamps = [], [], []
    side = first_side
    t = start_time + initial_ds
    for j in range(n_steps + 1):
        x = step_length * j
        y = side.sign * step_width / 2 + lateral_step * j
        poses.append(Pose(x, y, 0.0))
        sides.append(side)
        stamps.append(t)
        t += step_duration_s
        side = side.other()
    other = Pose(0.0, first_side.other().sign * step_width / 2, 0.0)
    return FootstepPlan(tuple(poses), tuple(sides), tuple(stamps), ss_fraction, other, start_time)


def plan_from_offsets(
    offsets: Sequence[float],
    step_width: float,
    step_duration_s: float,
    first_side: Side = Side.RIGHT,
    ss_fraction: float = 0.8,
    initial_ds: float = 0.5,
    start_time: float = 0.0,
) -> FootstepPlan:
    """Straight gait with footstep j placed at sagittal coordinate ``offsets[j]``."""
    poses, sides, stamps = [], [], []
    side = first_side
    for j, x in enumerate(offsets):
        poses.append(Pose(float(x), side.sign * step_width / 2, 0.0))
        sides.append(side)
        stamps.append(start_time + initial_ds + j * step_duration_s)
        side = side.other()
    other = Pose(float(offsets[0]), first_side.other().sign * step_width / 2, 0.0)
    return FootstepPlan(tuple(poses), tuple(sides), tuple(stamps), ss_fraction, other, start_time)


@dataclass(frozen=True)
class CandidateRequest:
    schedule: VelocitySchedule
    support: Pose
    support_side: Side
    support_time: float
    preview_end: float
    cruise: CruiseParams = field(default_factory=CruiseParams)
    limits: KinematicLimits = field(default_factory=KinematicLimits)


def generate_candidates(req: CandidateRequest) -> tuple[list[float], np.ndarray, np.ndarray, list[Side]]:
    """Timestamps, orientations, positions (F x 2) and sides of the next footsteps."""
    stamps = generate_timing(req.schedule, req.support_time, req.preview_end, req.cruise)
    F = len(stamps)
    if F == 0:
        return [], np.zeros(0), np.zeros((0, 2)), []
    bounds = [req.support_time] + stamps
    omega_int = [integrate_omega(req.schedule, a, b) for a, b in zip(bounds, bounds[1:])]
    thetas = solve_orientation_qp(omega_int, req.support.theta, req.limits)
    half = np.array([0.0, req.limits.ell / 2])
    sides = []
    side = req.support_side
    for _ in range(F):
        side = side.other()
        sides.append(side)
    # the template path runs ell/2 beside the support foot
    start = req.support.position - req.support_side.sign * rotation(req.support.theta) @ half
    path = template_trajectory(
        req.schedule, Pose(start[0], start[1], req.support.theta), req.support_time, stamps
    )
    prev_path = start
    prev_offset = req.support_side.sign * rotation(req.support.theta) @ half
    deltas = np.zeros((F, 2))
    for j in range(F):
        offset = sides[j].sign * rotation(thetas[j]) @ half
        deltas[j] = path[j].position - prev_path + offset - prev_offset
        prev_path, prev_offset = path[j].position, offset
    positions = solve_placement_qp(deltas, req.support, req.support_side, thetas, req.limits)
    return stamps, thetas, positions, sides
