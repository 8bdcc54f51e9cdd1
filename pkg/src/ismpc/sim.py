"""Scenario runner: configuration, closed-loop simulation, logging and comparison.

Configuration files are line oriented::

    # comment
    name = my_run
    lip.com_height = 0.78
    mpc.control_horizon = 1.0
    reference.0 = 0.0, 0.1, 0.0, 0.0

Every key is ``section.field`` (or a top-level field); list values are
comma separated. See ``CONFIG_KEYS`` for the accepted keys.
"""

from __future__ import annotations

import csv
import math
import time as _time
import warnings
from dataclasses import astuple, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .controller import (
    ConstraintForm,
    ControllerKind,
    MpcConfig,
    MpcController,
    MpcIterationResult,
    tails_for,
)
from .feasibility import discrete_interval
from .footsteps import (
    CandidateRequest,
    CruiseParams,
    FootstepPlan,
    KinematicLimits,
    PlanningError,
    Pose,
    ReferenceVelocity,
    Side,
    VelocitySchedule,
    generate_candidates,
    plan_from_offsets,
    regular_plan,
)
from .lip import LipAxisState, LipParams, PlanarState, unstable_component
from .qp import QpStatus
from .tails import TailKind, build_stability_row, build_terminal_row

DIVERGENCE_THRESHOLD = 0.5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PlanSpec:
    """Fixed footstep plan description; ``kind`` is regular, offsets or explicit."""

    kind: str = "regular"
    steps: int = 20
    step_length: float = 0.15
    step_width: float = 0.18
    step_duration: float = 0.5
    lateral_step: float = 0.0
    offsets: tuple[float, ...] = ()
    explicit: tuple[tuple[Pose, Side, float], ...] = ()
    initial_other: Pose | None = None


@dataclass(frozen=True)
class GaitParams:
    ss_fraction: float = 0.6
    initial_ds: float = 0.5
    first_support: Side = Side.RIGHT


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    duration: float = 10.0
    lip: LipParams = field(default_factory=LipParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    cruise: CruiseParams = field(default_factory=CruiseParams)
    schedule: VelocitySchedule = field(default_factory=VelocitySchedule)
    gait: GaitParams = field(default_factory=GaitParams)
    plan: PlanSpec | None = None
    rng_seed: int = 0
    description: str = ""
    # bound on |ZMP velocity| per axis; only checked on the run log, never a QP constraint
    zmp_speed_bound: float | None = None

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.zmp_speed_bound is not None and not self.zmp_speed_bound > 0:
            raise ConfigError("analysis.zmp_speed_bound must be positive")
        if abs(self.mpc.sample_time - self.lip.sample_time) > 1e-12:
            raise ConfigError("mpc and lip sample times differ")
        for t, _ in self.schedule.segments:
            if t > self.duration:
                raise ConfigError(f"reference change at t={t} is after the end of the run")

    @property
    def uses_fixed_plan(self) -> bool:
        return self.plan is not None

    def fixed_plan(self) -> FootstepPlan:
        if self.plan is None:
            raise ConfigError("scenario has no fixed plan")
        return build_fixed_plan(self.plan, self.gait)


def build_fixed_plan(spec: PlanSpec, gait: GaitParams) -> FootstepPlan:
    if spec.kind == "regular":
        return regular_plan(
            spec.steps,
            spec.step_length,
            spec.step_width,
            spec.step_duration,
            gait.first_support,
            gait.ss_fraction,
            gait.initial_ds,
            spec.lateral_step,
        )
    if spec.kind == "offsets":
        if not spec.offsets:
            raise ConfigError("plan.offsets is empty")
        return plan_from_offsets(
            spec.offsets, spec.step_width, spec.step_duration, gait.first_support, gait.ss_fraction, gait.initial_ds
        )
    if spec.kind == "explicit":
        if not spec.explicit:
            raise ConfigError("explicit plan has no footstep.N entries")
        poses, sides, stamps = zip(*spec.explicit)
        try:
            return FootstepPlan(tuple(poses), tuple(sides), tuple(stamps), gait.ss_fraction, spec.initial_other, 0.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown plan kind {spec.kind!r}")


# --- configuration parsing ------------------------------------------------------


def _float(v: str) -> float:
    return float(v)


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.split(",") if x.strip())


CONFIG_KEYS: dict[str, type | object] = {
    "name": str,
    "description": str,
    "duration": _float,
    "rng_seed": _int,
    "lip.com_height": _float,
    "lip.sample_time": _float,
    "lip.gravity": _float,
    "mpc.horizon_C": _int,
    "mpc.preview_P": _int,
    "mpc.control_horizon": _float,
    "mpc.preview_horizon": _float,
    "mpc.dz_x": _float,
    "mpc.dz_y": _float,
    "mpc.beta": _float,
    "mpc.tail": TailKind,
    "mpc.tail_residual": TailKind,
    "mpc.tail_anchored": _bool,
    "mpc.footsteps_fixed": _bool,
    "mpc.controller": ControllerKind,
    "mpc.constraint_form": ConstraintForm,
    "mpc.centering_weight": _float,
    "mpc.qp_tol": _float,
    "limits.theta_max": _float,
    "limits.ell": _float,
    "limits.da_x": _float,
    "limits.da_y": _float,
    "cruise.v_bar": _float,
    "cruise.ts_bar": _float,
    "cruise.ls_bar": _float,
    "cruise.alpha": _float,
    "gait.ss_fraction": _float,
    "gait.initial_ds": _float,
    "gait.first_support": Side,
    "plan.kind": str,
    "plan.steps": _int,
    "plan.step_length": _float,
    "plan.step_width": _float,
    "plan.step_duration": _float,
    "plan.lateral_step": _float,
    "plan.offsets": _floats,
    "plan.initial_other": _floats,
    "analysis.zmp_speed_bound": _float,
}


def parse_config_text(text: str, source: str = "<string>") -> Scenario:
    values: dict[str, object] = {}
    references: dict[int, tuple[float, ...]] = {}
    footsteps: dict[int, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        where = f"{source}:{lineno}"
        if key.startswith("reference.") or key.startswith("footstep."):
            section, idx = key.split(".", 1)
            try:
                n = int(idx)
            except ValueError:
                raise ConfigError(f"{where}: index of {key!r} is not an integer") from None
            target = references if section == "reference" else footsteps
            if n in target:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            if section == "reference":
                try:
                    nums = _floats(value)
                except ValueError as exc:
                    raise ConfigError(f"{where}: {exc}") from None
                if len(nums) != 4:
                    raise ConfigError(f"{where}: reference needs t, vx, vy, omega")
                references[n] = nums
            else:
                parts = [p.strip() for p in value.split(",")]
                if len(parts) != 5:
                    raise ConfigError(f"{where}: footstep needs x, y, theta, side, t")
                footsteps[n] = parts
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    try:
        return _build_scenario(values, references, footsteps)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _section(values: dict[str, object], prefix: str) -> dict[str, object]:
    return {k[len(prefix) + 1 :]: v for k, v in values.items() if k.startswith(prefix + ".")}


def _build_scenario(values, references, footsteps) -> Scenario:
    lip = LipParams(**_section(values, "lip"))
    mpc_raw = _section(values, "mpc")
    limits = KinematicLimits(**_section(values, "limits"))
    dt = lip.sample_time
    for secs, samples in (("control_horizon", "horizon_C"), ("preview_horizon", "preview_P")):
        if secs in mpc_raw:
            if samples in mpc_raw:
                raise ConfigError(f"give either mpc.{secs} or mpc.{samples}, not both")
            mpc_raw[samples] = round(mpc_raw.pop(secs) / dt)
    if "horizon_C" in mpc_raw and "preview_P" not in mpc_raw:
        mpc_raw["preview_P"] = mpc_raw["horizon_C"]
    if "tail" in mpc_raw:
        mpc_raw["tail_kind"] = mpc_raw.pop("tail")
    mpc = MpcConfig(sample_time=dt, limits=limits, **mpc_raw)
    cruise_raw = _section(values, "cruise")
    if "v_bar" not in cruise_raw and ("ls_bar" in cruise_raw or "ts_bar" in cruise_raw):
        base = CruiseParams()
        cruise_raw["v_bar"] = cruise_raw.get("ls_bar", base.ls_bar) / cruise_raw.get("ts_bar", base.ts_bar)
    cruise = CruiseParams(**cruise_raw)
    gait = GaitParams(**_section(values, "gait"))
    schedule = VelocitySchedule()
    if references:
        segs = []
        for n in sorted(references):
            t, vx, vy, om = references[n]
            segs.append((t, ReferenceVelocity(vx, vy, om)))
        schedule = VelocitySchedule(tuple(segs))
    plan_raw = _section(values, "plan")
    plan = None
    if plan_raw or footsteps:
        other = plan_raw.pop("initial_other", None)
        if other is not None and len(other) != 3:
            raise ConfigError("plan.initial_other needs x, y, theta")
        explicit = []
        for n in sorted(footsteps):
            x, y, th, side, t = footsteps[n]
            explicit.append((Pose(float(x), float(y), float(th)), Side(side.lower()), float(t)))
        if explicit:
            plan_raw.setdefault("kind", "explicit")
        plan = PlanSpec(
            explicit=tuple(explicit),
            initial_other=None if other is None else Pose(*other),
            **plan_raw,
        )
        if not mpc.footsteps_fixed:
            raise ConfigError("a fixed footstep plan requires mpc.footsteps_fixed = true")
    elif mpc.footsteps_fixed:
        raise ConfigError("generated footsteps require mpc.footsteps_fixed = false")
    top = {k: values[k] for k in ("name", "description", "duration", "rng_seed") if k in values}
    if "analysis.zmp_speed_bound" in values:
        top["zmp_speed_bound"] = values["analysis.zmp_speed_bound"]
    scenario = Scenario(lip=lip, mpc=mpc, cruise=cruise, schedule=schedule, gait=gait, plan=plan, **top)
    if plan is not None:
        scenario.fixed_plan()
    return scenario


def load_config(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config_text(text, str(p))


# --- run log ----------------------------------------------------------------------


@dataclass(frozen=True)
class LogRecord:
    t: float
    xc: float
    yc: float
    dxc: float
    dyc: float
    xz: float
    yz: float
    xu: float
    yu: float
    xu_min: float
    xu_max: float
    yu_min: float
    yu_max: float
    margin_x: float
    margin_y: float
    qp_status: str
    support_phase: str
    active_footstep_index: int


CSV_COLUMNS = tuple(f.name for f in fields(LogRecord))


@dataclass
class RunLog:
    scenario: str
    sample_time: float
    records: list[LogRecord] = field(default_factory=list)
    exit_reason: str = "completed"
    footsteps: FootstepPlan | None = None
    approximate_margins: bool = False
    wall_time: float = 0.0
    zmp_speed_bound: float | None = None

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def completed(self) -> bool:
        return self.exit_reason == "completed"

    def max_com_zmp_offset(self) -> float:
        if not self.records:
            return 0.0
        return float(
            max(np.max(np.abs(self.column("xc") - self.column("xz"))), np.max(np.abs(self.column("yc") - self.column("yz"))))
        )

    def max_zmp_speed(self) -> float:
        """Largest per-axis ZMP speed between consecutive logged samples."""
        if len(self.records) < 2:
            return 0.0
        return float(
            max(np.max(np.abs(np.diff(self.column(c)))) for c in ("xz", "yz")) / self.sample_time
        )

    def min_margin(self) -> float:
        if not self.records:
            return math.nan
        return float(min(np.min(self.column("margin_x")), np.min(self.column("margin_y"))))

    def divergence_time(self, threshold: float = DIVERGENCE_THRESHOLD) -> float | None:
        for r in self.records:
            if abs(r.xc - r.xz) > threshold or abs(r.yc - r.yz) > threshold:
                return r.t
        return None

    @property
    def diverged(self) -> bool:
        return self.exit_reason == "diverged" or self.divergence_time() is not None


def emit_csv(log: RunLog, path: str | Path) -> None:
    if not log.records:
        raise ValueError("refusing to write an empty run log")
    p = Path(path)
    try:
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in log.records:
                w.writerow([_fmt(v) for v in astuple(r)])
    except OSError as exc:
        raise OSError(f"cannot write CSV {p}: {exc}") from exc


def _fmt(v: object) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def read_csv(path: str | Path, scenario: str = "", sample_time: float = 0.01) -> RunLog:
    log = RunLog(scenario, sample_time)
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for row in reader:
            vals = [float(x) for x in row[:15]] + [row[15], row[16], int(row[17])]
            log.records.append(LogRecord(*vals))
    return log


@dataclass(frozen=True)
class RunComparison:
    samples: int
    max_com_delta: float
    max_zmp_delta: float
    first_exceeding: float | None
    verdict_a: str
    verdict_b: str


def verdict(log: RunLog, threshold: float = DIVERGENCE_THRESHOLD) -> str:
    if log.divergence_time(threshold) is not None or log.exit_reason == "diverged":
        return "divergent"
    if log.exit_reason == "infeasible":
        return "infeasible"
    return "stable"


def compare_runs(a: RunLog, b: RunLog, threshold: float = DIVERGENCE_THRESHOLD) -> RunComparison:
    if abs(a.sample_time - b.sample_time) > 1e-12:
        raise ValueError("runs use different sample times")
    n = min(len(a), len(b))
    if len(a) != len(b):
        warnings.warn(f"run lengths differ ({len(a)} vs {len(b)}); comparing the first {n} samples", stacklevel=2)
    dcom = dzmp = 0.0
    first = None
    for ra, rb in zip(a.records[:n], b.records[:n]):
        dc = max(abs(ra.xc - rb.xc), abs(ra.yc - rb.yc))
        dz = max(abs(ra.xz - rb.xz), abs(ra.yz - rb.yz))
        dcom, dzmp = max(dcom, dc), max(dzmp, dz)
        if first is None and dc > threshold:
            first = ra.t
    return RunComparison(n, dcom, dzmp, first, verdict(a, threshold), verdict(b, threshold))


# --- running ----------------------------------------------------------------------


def initial_state(plan: FootstepPlan) -> PlanarState:
    """Robot at rest with CoM and ZMP halfway between the initial feet."""
    if plan.initial_other is not None:
        mid = 0.5 * (plan.poses[0].position + plan.initial_other.position)
    else:
        mid = plan.poses[0].position
    x, y = float(mid[0]), float(mid[1])
    return PlanarState(LipAxisState(x, 0.0, x), LipAxisState(y, 0.0, y), plan.start_time)


def _phase_label(plan: FootstepPlan, t: float) -> tuple[str, int]:
    j, sigma = plan.phase(t)
    if j < 0:
        return "initial_double", 0
    if sigma > 0.0:
        return "double", j
    return "single", j


class _GeneratedPlanner:
    """Keeps landed footsteps and regenerates the candidates ahead of them."""

    def __init__(self, scenario: Scenario):
        self.s = scenario
        gait = scenario.gait
        ell = scenario.mpc.limits.ell
        side = gait.first_support
        self.poses = [Pose(0.0, side.sign * ell / 2, 0.0)]
        self.sides = [side]
        self.stamps = [gait.initial_ds]
        self.other = Pose(0.0, side.other().sign * ell / 2, 0.0)

    def plan(self, t_k: float) -> FootstepPlan:
        s = self.s
        req = CandidateRequest(
            schedule=s.schedule,
            support=self.poses[-1],
            support_side=self.sides[-1],
            support_time=self.stamps[-1],
            preview_end=t_k + s.mpc.preview_horizon,
            cruise=s.cruise,
            limits=s.mpc.limits,
        )
        stamps, thetas, positions, sides = generate_candidates(req)
        poses = list(self.poses) + [Pose(p[0], p[1], th) for p, th in zip(positions, thetas)]
        return FootstepPlan(
            tuple(poses),
            tuple(self.sides) + tuple(sides),
            tuple(self.stamps) + tuple(stamps),
            s.gait.ss_fraction,
            self.other,
            0.0,
        )

    @property
    def n_landed(self) -> int:
        return len(self.poses)

    def commit(self, plan: FootstepPlan, result: MpcIterationResult | None, t_next: float) -> None:
        """Land every footstep whose double support has started by ``t_next``."""
        while self.n_landed < len(plan) and plan.ds_start(self.n_landed) <= t_next + 1e-9:
            j = self.n_landed
            pose = plan.poses[j]
            if result is not None and j in result.planned_footsteps:
                x, y = result.planned_footsteps[j]
                pose = Pose(x, y, pose.theta)
            self.poses.append(pose)
            self.sides.append(plan.sides[j])
            self.stamps.append(plan.timestamps[j])

    def landed_plan(self) -> FootstepPlan:
        return FootstepPlan(
            tuple(self.poses), tuple(self.sides), tuple(self.stamps), self.s.gait.ss_fraction, self.other, 0.0
        )


def _margins(
    controller: MpcController, state: PlanarState, plan: FootstepPlan, result: MpcIterationResult
) -> tuple[tuple[float, float], tuple[float, float], bool]:
    """Discrete feasibility intervals of both axes at the current state."""
    qp = result.qp
    cfg, lip = controller.config, controller.lip
    rows = qp.rows
    if not rows:
        tails = tails_for(plan, state.time, lip, cfg)
        builder = build_stability_row if cfg.constraint_form is ConstraintForm.STABILITY else build_terminal_row
        rows = tuple(builder(tails[ax], lip, cfg.horizon_C) for ax in range(2))
    feet = None
    if qp.schedule.n_free:
        if result.ok:
            feet = result.footsteps_array()
        else:
            feet = np.array([plan.poses[j].position for j in qp.schedule.free_indices])
    out = []
    for ax in range(2):
        lo, hi = qp.schedule.axis_bounds(ax, feet)
        iv = discrete_interval(rows[ax], lo, hi, state.axis(ax).zmp_pos, cfg.sample_time, state.time)
        out.append((iv.lower, iv.upper))
    approximate = qp.schedule.n_free > 0 or not qp.schedule.axis_aligned
    return out[0], out[1], approximate


def run_scenario(scenario: Scenario, max_steps: int | None = None) -> RunLog:
    """Closed-loop run until the duration, the first infeasible QP, or divergence."""
    lip, cfg = scenario.lip, scenario.mpc
    controller = MpcController(cfg, lip)
    log = RunLog(scenario.name, lip.sample_time, zmp_speed_bound=scenario.zmp_speed_bound)
    planner = None if scenario.uses_fixed_plan else _GeneratedPlanner(scenario)
    fixed = scenario.fixed_plan() if scenario.uses_fixed_plan else None
    state = initial_state(fixed if fixed is not None else planner.landed_plan())
    steps = round(scenario.duration / lip.sample_time)
    if max_steps is not None:
        steps = min(steps, max_steps)
    start = _time.perf_counter()
    for k in range(steps):
        try:
            plan = fixed if fixed is not None else planner.plan(state.time)
        except PlanningError:
            log.exit_reason = "planning_failed"
            break
        free_from = None if fixed is not None else planner.n_landed
        result = controller.iterate(state, plan, free_from)
        (xlo, xhi), (ylo, yhi), approx = _margins(controller, state, plan, result)
        log.approximate_margins |= approx
        xu = unstable_component(state.x_axis, lip)
        yu = unstable_component(state.y_axis, lip)
        phase, active = _phase_label(plan, state.time)
        log.records.append(
            LogRecord(
                t=state.time,
                xc=state.x_axis.com_pos,
                yc=state.y_axis.com_pos,
                dxc=state.x_axis.com_vel,
                dyc=state.y_axis.com_vel,
                xz=state.x_axis.zmp_pos,
                yz=state.y_axis.zmp_pos,
                xu=xu,
                yu=yu,
                xu_min=xlo,
                xu_max=xhi,
                yu_min=ylo,
                yu_max=yhi,
                margin_x=min(xu - xlo, xhi - xu),
                margin_y=min(yu - ylo, yhi - yu),
                qp_status=result.status.value,
                support_phase=phase,
                active_footstep_index=active,
            )
        )
        offset = max(abs(state.x_axis.com_pos - state.x_axis.zmp_pos), abs(state.y_axis.com_pos - state.y_axis.zmp_pos))
        if offset > DIVERGENCE_THRESHOLD:
            log.exit_reason = "diverged"
            break
        if not result.ok:
            log.exit_reason = "infeasible" if result.status is QpStatus.INFEASIBLE else "max_iter"
            break
        if planner is not None:
            planner.commit(plan, result, result.next_state.time)
        state = result.next_state
    log.wall_time = _time.perf_counter() - start
    log.footsteps = fixed if fixed is not None else planner.landed_plan()
    return log


EXIT_CODES = {"completed": 0, "infeasible": 3, "max_iter": 3, "planning_failed": 3, "diverged": 4}


def exit_code(log: RunLog) -> int:
    return EXIT_CODES.get(log.exit_reason, 1)


def summarize(log: RunLog) -> str:
    last = log.records[-1].t if log.records else 0.0
    lines = [
        f"scenario: {log.scenario}",
        f"outcome: {log.exit_reason} at t={last:.2f} s ({len(log)} samples, {log.wall_time:.2f} s wall)",
        f"max |com - zmp|: {log.max_com_zmp_offset():.6f} m",
        f"min feasibility margin: {log.min_margin():.6g} m" + (" (approximate)" if log.approximate_margins else ""),
    ]
    if log.zmp_speed_bound is not None:
        speed = log.max_zmp_speed()
        state = "within" if speed <= log.zmp_speed_bound else "exceeds"
        lines.append(f"max |zmp speed|: {speed:.6g} m/s ({state} bound {log.zmp_speed_bound:g} m/s)")
    return "\n".join(lines)


def with_overrides(scenario: Scenario, **mpc_changes) -> Scenario:
    return replace(scenario, mpc=replace(scenario.mpc, **mpc_changes))


def builtin_names() -> list[str]:
    from .scenarios import BUILTIN_SCENARIOS

    return sorted(BUILTIN_SCENARIOS)


def builtin(name: str) -> Scenario:
    from .scenarios import BUILTIN_SCENARIOS

    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown builtin scenario {name!r}; try list-scenarios")
    return parse_config_text(BUILTIN_SCENARIOS[name].text, f"<builtin {name}>")
