"""Per-iteration QP of the MPC gait generator.

Decision vector: ``(vx_0..vx_{C-1}, vy_0..vy_{C-1}, xf_1..xf_F', yf_1..yf_F')``
where ``v`` are ZMP velocities over the control horizon and ``f`` are the
footsteps whose admissible region enters the horizon but has not landed
yet. With ``footsteps_fixed`` the footstep block is empty.

ZMP constraints bind at the end of every sample (i = 1..C); since the ZMP is
linear within each sample this also covers the continuous-time constraint.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .footsteps import FootstepPlan, KinematicLimits, Pose, rotation
from .lip import LipAxisState, LipParams, PlanarState, decompose, step_exact, transition_matrices
from .qp import ActiveSetSolver, QpProblem, QpSolution, QpStatus
from .tails import (
    StabilityConstraintRow,
    Tail,
    TailKind,
    anticipative_tail,
    build_stability_row,
    build_terminal_row,
)


class ControllerKind(enum.Enum):
    ISMPC = "ismpc"
    STANDARD = "standard"
    STANDARD_CENTERING = "standard_centering"


class ConstraintForm(enum.Enum):
    STABILITY = "stability"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class MpcConfig:
    horizon_C: int = 100
    preview_P: int = 100
    sample_time: float = 0.01
    dz_x: float = 0.04
    dz_y: float = 0.04
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    beta: float = 1e4
    tail_kind: TailKind = TailKind.PERIODIC
    tail_residual: TailKind = TailKind.TRUNCATED
    tail_anchored: bool = False
    footsteps_fixed: bool = True
    controller: ControllerKind = ControllerKind.ISMPC
    constraint_form: ConstraintForm = ConstraintForm.STABILITY
    centering_weight: float = 0.0
    qp_tol: float = 1e-8

    def __post_init__(self) -> None:
        if not self.preview_P >= self.horizon_C >= 1:
            raise ValueError(f"need preview_P >= horizon_C >= 1, got P={self.preview_P}, C={self.horizon_C}")
        if self.dz_x <= 0 or self.dz_y <= 0:
            raise ValueError("ZMP region dimensions must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.sample_time <= 0:
            raise ValueError("sample_time must be positive")
        if self.centering_weight < 0:
            raise ValueError("centering_weight must be non-negative")

    @property
    def control_horizon(self) -> float:
        return self.horizon_C * self.sample_time

    @property
    def preview_horizon(self) -> float:
        return self.preview_P * self.sample_time


@dataclass(frozen=True)
class ZmpRegionSchedule:
    """Admissible ZMP region at samples i = 1..C.

    ``center = offset + weights @ f`` where ``f`` stacks the free footsteps
    listed in ``free_indices`` (one coordinate at a time). ``theta`` and
    ``half_dims`` are known.
    """

    times: np.ndarray
    theta: np.ndarray
    half_dims: np.ndarray
    offset: np.ndarray
    weights: np.ndarray
    free_indices: tuple[int, ...]
    phase: tuple[tuple[int, float], ...]

    @property
    def n_free(self) -> int:
        return len(self.free_indices)

    def centers(self, footsteps: np.ndarray | None = None) -> np.ndarray:
        """Region centers (C x 2) for given free footstep positions (F' x 2)."""
        if self.n_free == 0 or footsteps is None:
            return self.offset.copy()
        return self.offset + self.weights @ np.asarray(footsteps).reshape(-1, 2)

    def axis_bounds(self, axis: int, footsteps: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample bounds on one ZMP coordinate (bounding box of the rotated region)."""
        c = self.centers(footsteps)[:, axis]
        cos, sin = np.abs(np.cos(self.theta)), np.abs(np.sin(self.theta))
        if axis == 0:
            half = cos * self.half_dims[:, 0] + sin * self.half_dims[:, 1]
        else:
            half = sin * self.half_dims[:, 0] + cos * self.half_dims[:, 1]
        return c - half, c + half

    @property
    def axis_aligned(self) -> bool:
        return bool(np.all(np.abs(np.sin(self.theta)) < 1e-12))


def region_at(plan: FootstepPlan, t: float, dz_x: float, dz_y: float) -> tuple[int, float, float, np.ndarray]:
    """(j, sigma, theta, half_dims) of the admissible region at time t."""
    j, sigma = plan.phase(t)
    if j < 0:
        _, theta, half = plan.initial_box(dz_x, dz_y)
        return j, 0.0, theta, half
    th = plan.poses[j].theta
    if sigma > 0.0:
        th = (1.0 - sigma) * th + sigma * plan.poses[j + 1].theta
    return j, sigma, th, np.array([dz_x / 2, dz_y / 2])


def build_region_schedule(
    plan: FootstepPlan,
    t_k: float,
    horizon_C: int,
    sample_time: float,
    dz_x: float,
    dz_y: float,
    free_from: int | None = None,
) -> ZmpRegionSchedule:
    """Regions over the control horizon; footsteps with index >= ``free_from`` become variables."""
    k0 = round(t_k / sample_time)
    times = (k0 + np.arange(1, horizon_C + 1)) * sample_time
    js, sigmas = plan.phases(times)
    poses = np.array([(p.x, p.y, p.theta) for p in plan.poses])
    nxt = np.minimum(js + 1, len(plan.poses) - 1)
    cur = np.maximum(js, 0)
    thetas = (1.0 - sigmas) * poses[cur, 2] + sigmas * poses[nxt, 2]
    halves = np.tile([dz_x / 2, dz_y / 2], (horizon_C, 1))
    initial = js < 0
    if np.any(initial):
        center0, theta0, half0 = plan.initial_box(dz_x, dz_y)
        thetas[initial] = theta0
        halves[initial] = half0
    free: list[int] = []
    if free_from is not None:
        touched = set(js[js >= 0].tolist()) | set((js[(js >= 0) & (sigmas > 0)] + 1).tolist())
        free = sorted(j for j in touched if j >= max(free_from, 1))
    col = np.full(len(plan.poses), -1)
    col[free] = np.arange(len(free))
    offset = np.zeros((horizon_C, 2))
    weights = np.zeros((horizon_C, len(free)))
    rows = np.arange(horizon_C)
    for idx, w in ((cur, 1.0 - sigmas), (nxt, sigmas)):
        use = ~initial & (w != 0.0)
        is_free = use & (col[idx] >= 0)
        fixed = use & (col[idx] < 0)
        weights[rows[is_free], col[idx[is_free]]] += w[is_free]
        offset[fixed] += w[fixed, None] * poses[idx[fixed], :2]
    if np.any(initial):
        offset[initial] = center0
    return ZmpRegionSchedule(
        times=times,
        theta=thetas,
        half_dims=halves,
        offset=offset,
        weights=weights,
        free_indices=tuple(free),
        phase=tuple(zip(js.tolist(), sigmas.tolist())),
    )


@dataclass(frozen=True)
class QpLayout:
    horizon_C: int
    n_free: int

    @property
    def n(self) -> int:
        return 2 * self.horizon_C + 2 * self.n_free

    def vel(self, axis: int) -> slice:
        C = self.horizon_C
        return slice(axis * C, (axis + 1) * C)

    def foot(self, axis: int) -> slice:
        s = 2 * self.horizon_C
        return slice(s + axis * self.n_free, s + (axis + 1) * self.n_free)


def _integration_matrix(C: int, dt: float) -> np.ndarray:
    """Row i-1 maps velocities to the ZMP displacement after i samples."""
    return dt * np.tril(np.ones((C, C)))


def build_zmp_constraints(
    schedule: ZmpRegionSchedule, current_zmp: np.ndarray, horizon_C: int, sample_time: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two bilateral rows per sample, ordered sample-major, on the full decision vector."""
    lay = QpLayout(horizon_C, schedule.n_free)
    C = horizon_C
    L = _integration_matrix(C, sample_time)
    cos, sin = np.cos(schedule.theta), np.sin(schedule.theta)
    # rows of R(theta)^T: (cos, sin) and (-sin, cos)
    rot = np.stack([np.stack([cos, sin], axis=1), np.stack([-sin, cos], axis=1)], axis=1)  # C x 2 x 2
    A = np.zeros((C, 2, lay.n))
    for r in range(2):
        for ax in range(2):
            A[:, r, lay.vel(ax)] = rot[:, r, ax][:, None] * L
            if schedule.n_free:
                A[:, r, lay.foot(ax)] = -rot[:, r, ax][:, None] * schedule.weights
    const = np.einsum("irc,ic->ir", rot, np.asarray(current_zmp)[None, :] - schedule.offset)
    lo = -schedule.half_dims - const
    hi = schedule.half_dims - const
    return A.reshape(2 * C, lay.n), lo.reshape(-1), hi.reshape(-1)


def build_kinematic_constraints(
    plan: FootstepPlan, free_indices: tuple[int, ...], limits: KinematicLimits, horizon_C: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rotated displacement boxes between each free footstep and its predecessor."""
    F = len(free_indices)
    lay = QpLayout(horizon_C, F)
    col = {j: c for c, j in enumerate(free_indices)}
    A = np.zeros((2 * F, lay.n))
    lo = np.zeros(2 * F)
    hi = np.zeros(2 * F)
    xs, ys = lay.foot(0).start, lay.foot(1).start
    for c, j in enumerate(free_indices):
        prev = plan.poses[j - 1]
        rot_t = rotation(prev.theta).T
        box_lo, box_hi = limits.displacement_box(plan.sides[j - 1])
        const = np.zeros(2)
        for r in range(2):
            A[2 * c + r, xs + c] = rot_t[r, 0]
            A[2 * c + r, ys + c] = rot_t[r, 1]
        if j - 1 in col:
            p = col[j - 1]
            for r in range(2):
                A[2 * c + r, xs + p] = -rot_t[r, 0]
                A[2 * c + r, ys + p] = -rot_t[r, 1]
        else:
            const = rot_t @ prev.position
        lo[2 * c : 2 * c + 2] = box_lo + const
        hi[2 * c : 2 * c + 2] = box_hi + const
    return A, lo, hi


@dataclass(frozen=True)
class AssembledQp:
    problem: QpProblem
    layout: QpLayout
    schedule: ZmpRegionSchedule
    rows: tuple[StabilityConstraintRow, ...]
    tails: tuple[Tail, ...]


class _CostBuilder:
    def __init__(self, n: int):
        self.H = np.zeros((n, n))
        self.g = np.zeros(n)

    def add_least_squares(self, M: np.ndarray, m0: np.ndarray, weight: float) -> None:
        """Add ``weight * ||M x + m0||^2`` (Hessian convention 1/2 x'Hx)."""
        self.H += 2.0 * weight * (M.T @ M)
        self.g += 2.0 * weight * (M.T @ m0)


def tails_for(plan: FootstepPlan, t_k: float, lip: LipParams, config: MpcConfig) -> tuple[Tail, Tail]:
    kind = config.tail_kind
    if kind is TailKind.TRUNCATED:
        return Tail.truncated(), Tail.truncated()
    if kind is TailKind.PERIODIC:
        return Tail.periodic(config.horizon_C), Tail.periodic(config.horizon_C)
    return tuple(
        anticipative_tail(
            plan, t_k, lip, config.horizon_C, config.preview_P, axis, config.tail_residual, config.tail_anchored
        )
        for axis in range(2)
    )


class MpcController:
    """Owns the solver workspace and warm-start memory; drive from one thread."""

    def __init__(self, config: MpcConfig, lip: LipParams):
        if abs(config.sample_time - lip.sample_time) > 1e-12:
            raise ValueError("controller and LIP sample times differ")
        self.config = config
        self.lip = lip
        self.solver = ActiveSetSolver(tol=config.qp_tol)
        self._warm: tuple[tuple[int, int], ...] = ()
        self._warm_key: tuple[int, int] | None = None
        self._jerk = self._jerk_prediction() if config.controller is not ControllerKind.ISMPC else None

    def _jerk_prediction(self) -> tuple[np.ndarray, np.ndarray]:
        """CoM jerk at samples 0..C-1 as ``Phi @ s0 + Gamma @ v`` per axis."""
        C = self.config.horizon_C
        A, B = transition_matrices(self.lip)
        eta2 = self.lip.eta**2
        Phi = np.zeros((C, 3))
        Gamma = np.zeros((C, C))
        impulse = []  # A^m B for m = 0..C-1
        v = B.copy()
        for _ in range(C):
            impulse.append(v)
            v = A @ v
        Ai = np.eye(3)
        # jerk_i = eta^2 (dxc_i - v_i), dxc_i being the second row of the predicted state
        for i in range(C):
            Phi[i] = eta2 * Ai[1]
            for l in range(i):
                Gamma[i, l] = eta2 * impulse[i - 1 - l][1]
            Gamma[i, i] = -eta2
            Ai = A @ Ai
        return Phi, Gamma

    def reset(self) -> None:
        self._warm = ()
        self._warm_key = None

    def assemble_qp(
        self,
        state: PlanarState,
        plan: FootstepPlan,
        free_from: int | None = None,
        tails: tuple[Tail, Tail] | None = None,
    ) -> AssembledQp:
        cfg, lip = self.config, self.lip
        C = cfg.horizon_C
        state.check_aligned(cfg.sample_time)
        if cfg.footsteps_fixed:
            free_from = None
        schedule = build_region_schedule(plan, state.time, C, cfg.sample_time, cfg.dz_x, cfg.dz_y, free_from)
        lay = QpLayout(C, schedule.n_free)
        zmp = np.array([state.x_axis.zmp_pos, state.y_axis.zmp_pos])
        A_z, lo_z, hi_z = build_zmp_constraints(schedule, zmp, C, cfg.sample_time)
        A_k, lo_k, hi_k = build_kinematic_constraints(plan, schedule.free_indices, cfg.limits, C)
        cost = _CostBuilder(lay.n)
        if cfg.controller is ControllerKind.ISMPC:
            cost.H[: 2 * C, : 2 * C] += 2.0 * np.eye(2 * C)
        else:
            Phi, Gamma = self._jerk
            for ax in range(2):
                M = np.zeros((C, lay.n))
                M[:, lay.vel(ax)] = Gamma
                cost.add_least_squares(M, Phi @ state.axis(ax).as_array(), 1.0)
        if cfg.centering_weight > 0.0:
            L = _integration_matrix(C, cfg.sample_time)
            for ax in range(2):
                M = np.zeros((C, lay.n))
                M[:, lay.vel(ax)] = L
                if lay.n_free:
                    M[:, lay.foot(ax)] = -schedule.weights
                cost.add_least_squares(M, zmp[ax] - schedule.offset[:, ax], cfg.centering_weight)
        if lay.n_free:
            targets = np.array([plan.poses[j].position for j in schedule.free_indices])
            for ax in range(2):
                M = np.zeros((lay.n_free, lay.n))
                M[:, lay.foot(ax)] = np.eye(lay.n_free)
                cost.add_least_squares(M, -targets[:, ax], cfg.beta)
        rows: tuple[StabilityConstraintRow, ...] = ()
        used_tails: tuple[Tail, ...] = ()
        eq_A = np.zeros((0, lay.n))
        eq_b = np.zeros(0)
        if cfg.controller is ControllerKind.ISMPC:
            used_tails = tails if tails is not None else tails_for(plan, state.time, lip, cfg)
            builder = build_stability_row if cfg.constraint_form is ConstraintForm.STABILITY else build_terminal_row
            rows = tuple(builder(used_tails[ax], lip, C) for ax in range(2))
            eq_A = np.zeros((2, lay.n))
            eq_b = np.zeros(2)
            for ax in range(2):
                d = decompose(state.axis(ax), lip)
                eq_A[ax, lay.vel(ax)] = rows[ax].coeffs
                eq_b[ax] = rows[ax].rhs(d.unstable, d.zmp_pos)
        problem = QpProblem(
            hessian=cost.H,
            linear_cost=cost.g,
            eq_matrix=eq_A,
            eq_rhs=eq_b,
            ineq_matrix=np.vstack([A_z, A_k]),
            ineq_lower=np.concatenate([lo_z, lo_k]),
            ineq_upper=np.concatenate([hi_z, hi_k]),
        )
        return AssembledQp(problem, lay, schedule, rows, used_tails)

    def iterate(
        self,
        state: PlanarState,
        plan: FootstepPlan,
        free_from: int | None = None,
        tails: tuple[Tail, Tail] | None = None,
    ) -> MpcIterationResult:
        qp = self.assemble_qp(state, plan, free_from, tails)
        key = (qp.layout.horizon_C, qp.layout.n_free)
        warm = self._warm if key == self._warm_key else ()
        sol = self.solver.solve(qp.problem, warm)
        if sol.status is QpStatus.MAX_ITER and warm:
            sol = self.solver.solve(qp.problem, ())
        if not sol.ok:
            self.reset()
            return MpcIterationResult(state, None, (0.0, 0.0), {}, sol, qp)
        self._warm = _shift_active_set(sol.active_set, self.config.horizon_C)
        self._warm_key = key
        lay = qp.layout
        vx = float(sol.primal[lay.vel(0)][0])
        vy = float(sol.primal[lay.vel(1)][0])
        nxt = PlanarState(
            step_exact(state.x_axis, vx, self.lip),
            step_exact(state.y_axis, vy, self.lip),
            round(state.time / self.lip.sample_time + 1) * self.lip.sample_time,
        )
        feet = {}
        for c, j in enumerate(qp.schedule.free_indices):
            feet[j] = (float(sol.primal[lay.foot(0)][c]), float(sol.primal[lay.foot(1)][c]))
        return MpcIterationResult(state, nxt, (vx, vy), feet, sol, qp)

    def iterate_standard_mpc(self, state: PlanarState, plan: FootstepPlan, free_from: int | None = None):
        if self.config.controller is ControllerKind.ISMPC:
            raise ValueError("controller configured as IS-MPC; build one with a standard-MPC config")
        return self.iterate(state, plan, free_from)


def standard_config(config: MpcConfig, centering_weight: float = 0.0) -> MpcConfig:
    kind = ControllerKind.STANDARD_CENTERING if centering_weight > 0 else ControllerKind.STANDARD
    return replace(config, controller=kind, centering_weight=centering_weight)


def _shift_active_set(active: tuple[tuple[int, int], ...], horizon_C: int) -> tuple[tuple[int, int], ...]:
    """Move active ZMP rows back one sample; kinematic rows are not carried over."""
    out = []
    for row, side in active:
        if 2 <= row < 2 * horizon_C:
            out.append((row - 2, side))
    return tuple(out)


@dataclass(frozen=True)
class MpcIterationResult:
    state: PlanarState
    next_state: PlanarState | None
    first_inputs: tuple[float, float]
    planned_footsteps: dict[int, tuple[float, float]]
    solution: QpSolution
    qp: AssembledQp

    @property
    def status(self) -> QpStatus:
        return self.solution.status

    @property
    def ok(self) -> bool:
        return self.solution.ok

    def footsteps_array(self) -> np.ndarray:
        return np.array([self.planned_footsteps[j] for j in sorted(self.planned_footsteps)]).reshape(-1, 2)


def com_segment(state: PlanarState, inputs: tuple[float, float], lip: LipParams, n: int = 10) -> np.ndarray:
    """Samples (t, xc, yc, xz, yz) of the continuous trajectory over one control interval."""
    out = np.zeros((n + 1, 5))
    for s in range(n + 1):
        tau = lip.sample_time * s / n
        sx = step_exact(state.x_axis, inputs[0], lip, tau) if tau > 0 else state.x_axis
        sy = step_exact(state.y_axis, inputs[1], lip, tau) if tau > 0 else state.y_axis
        out[s] = (state.time + tau, sx.com_pos, sy.com_pos, sx.zmp_pos, sy.zmp_pos)
    return out


def stationary_state(pose: Pose, time: float = 0.0) -> PlanarState:
    return PlanarState(LipAxisState(pose.x, 0.0, pose.x), LipAxisState(pose.y, 0.0, pose.y), time)
