"""Built-in scenarios, written in the same text format accepted by ``ismpc run``."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BuiltinScenario:
    summary: str
    text: str


_FIXED_GAIT = """
lip.com_height = 0.78
lip.sample_time = 0.01
mpc.dz_x = 0.04
mpc.dz_y = 0.04
mpc.footsteps_fixed = true
gait.ss_fraction = 0.8
gait.initial_ds = 1.0
gait.first_support = right
plan.kind = regular
plan.steps = 20
plan.step_length = 0.15
plan.step_width = 0.18
plan.step_duration = 0.5
"""

_FFBB_GAIT = """
lip.com_height = 0.78
lip.sample_time = 0.01
mpc.dz_x = 0.04
mpc.dz_y = 0.04
mpc.footsteps_fixed = true
gait.ss_fraction = 0.8
gait.initial_ds = 1.0
gait.first_support = right
plan.kind = offsets
plan.offsets = 0.0, 0.15, 0.30, 0.15, 0.0, 0.0
plan.step_width = 0.18
plan.step_duration = 0.5
"""

_GENERATED = """
lip.com_height = 0.78
lip.sample_time = 0.01
mpc.dz_x = 0.04
mpc.dz_y = 0.04
mpc.footsteps_fixed = false
mpc.beta = 10000
mpc.control_horizon = 1.6
mpc.preview_horizon = 3.2
mpc.tail = anticipative
limits.theta_max = 0.39269908169872414
limits.ell = 0.18
limits.da_x = 0.3
limits.da_y = 0.07
cruise.v_bar = 0.15
cruise.ts_bar = 0.8
cruise.ls_bar = 0.12
cruise.alpha = 0.1
gait.ss_fraction = 0.6
gait.initial_ds = 1.0
gait.first_support = right
"""


def _fixed(name: str, extra: str, summary: str, base: str = _FIXED_GAIT) -> BuiltinScenario:
    return BuiltinScenario(summary, f"name = {name}\n{base}{extra}")


BUILTIN_SCENARIOS: dict[str, BuiltinScenario] = {
    "sim1_ismpc": _fixed(
        "sim1_ismpc",
        "duration = 10\nmpc.control_horizon = 1.5\nmpc.tail = periodic\nmpc.controller = ismpc\n",
        "regular gait, Tc = 1.5 s, IS-MPC with periodic tail",
    ),
    "sim1_standard": _fixed(
        "sim1_standard",
        "duration = 10\nmpc.control_horizon = 1.5\nmpc.controller = standard\n",
        "regular gait, Tc = 1.5 s, standard MPC (jerk cost, no stability constraint)",
    ),
    "sim2_ismpc": _fixed(
        "sim2_ismpc",
        "duration = 10\nmpc.control_horizon = 1.0\nmpc.tail = periodic\nmpc.controller = ismpc\n",
        "regular gait, Tc = 1.0 s, IS-MPC with periodic tail",
    ),
    "sim2_standard": _fixed(
        "sim2_standard",
        "duration = 10\nmpc.control_horizon = 1.0\nmpc.controller = standard\n",
        "regular gait, Tc = 1.0 s, standard MPC",
    ),
    "sim2bis_ismpc": _fixed(
        "sim2bis_ismpc",
        "duration = 10\nlip.com_height = 1.6\nmpc.control_horizon = 1.5\nmpc.tail = periodic\n",
        "regular gait, CoM height 1.6 m, Tc = 1.5 s, IS-MPC",
        _FIXED_GAIT.replace("lip.com_height = 0.78\n", ""),
    ),
    "sim2bis_standard": _fixed(
        "sim2bis_standard",
        "duration = 10\nlip.com_height = 1.6\nmpc.control_horizon = 1.5\nmpc.controller = standard\n",
        "regular gait, CoM height 1.6 m, Tc = 1.5 s, standard MPC",
        _FIXED_GAIT.replace("lip.com_height = 0.78\n", ""),
    ),
    "sim2ter_ismpc": _fixed(
        "sim2ter_ismpc",
        "duration = 10\nmpc.control_horizon = 1.0\nmpc.tail = periodic\nmpc.centering_weight = 10000\n",
        "regular gait, Tc = 1.0 s, IS-MPC with an extra ZMP-centering cost",
    ),
    "sim2ter_standard": _fixed(
        "sim2ter_standard",
        "duration = 10\nmpc.control_horizon = 1.0\nmpc.controller = standard_centering\nmpc.centering_weight = 10000\n",
        "regular gait, Tc = 1.0 s, standard MPC with an extra ZMP-centering cost",
    ),
    "sim3_truncated": _fixed(
        "sim3_truncated",
        "duration = 10\nmpc.control_horizon = 0.8\nmpc.preview_horizon = 1.6\nmpc.tail = truncated\n",
        "regular gait, Tc = 0.8 s, truncated tail (expected to lose feasibility)",
    ),
    "sim3_periodic": _fixed(
        "sim3_periodic",
        "duration = 10\nmpc.control_horizon = 0.8\nmpc.preview_horizon = 1.6\nmpc.tail = periodic\n",
        "regular gait, Tc = 0.8 s, periodic tail",
    ),
    "sim4_periodic": _fixed(
        "sim4_periodic",
        "duration = 5\nmpc.control_horizon = 0.8\nmpc.preview_horizon = 1.6\nmpc.tail = periodic\n",
        "two steps forward then two back, periodic tail (expected to lose feasibility)",
        _FFBB_GAIT,
    ),
    "sim4_anticipative": _fixed(
        "sim4_anticipative",
        "duration = 5\nmpc.control_horizon = 0.8\nmpc.preview_horizon = 1.6\nmpc.tail = anticipative\n",
        "two steps forward then two back, anticipative tail",
        _FFBB_GAIT,
    ),
    "sim5_speedup": BuiltinScenario(
        "generated footsteps, forward speed 0.1 m/s then 0.3 m/s",
        "name = sim5_speedup\nduration = 12\n" + _GENERATED + "reference.0 = 0.0, 0.1, 0.0, 0.0\nreference.1 = 6.0, 0.3, 0.0, 0.0\n",
    ),
    "sim6_cusp": BuiltinScenario(
        "generated footsteps along a cusp: turn forward, turn backward, then straight back",
        "name = sim6_cusp\nduration = 20\n"
        + _GENERATED
        + "reference.0 = 0.0, 0.2, 0.0, 0.2\n"
        + "reference.1 = 7.853981633974483, -0.2, 0.0, 0.2\n"
        + "reference.2 = 15.707963267948966, -0.2, 0.0, 0.0\n",
    ),
    "single_step": BuiltinScenario(
        "one step from a standing start, Tc = 0.5 s, Tp = 1.0 s, anticipative tail",
        """name = single_step
duration = 2.5
lip.com_height = 0.78
lip.sample_time = 0.01
mpc.dz_x = 0.04
mpc.dz_y = 0.04
mpc.footsteps_fixed = true
mpc.control_horizon = 0.5
mpc.preview_horizon = 1.0
mpc.tail = anticipative
gait.ss_fraction = 0.8
footstep.0 = 0.0, -0.09, 0.0, right, 0.0
footstep.1 = 0.15, 0.09, 0.0, left, 1.0
""",
    ),
    "recursive_feasibility": _fixed(
        "recursive_feasibility",
        "duration = 20\nplan.steps = 42\nmpc.control_horizon = 0.5\nmpc.preview_horizon = 1.43\n"
        "mpc.tail = anticipative\nmpc.tail_anchored = true\n",
        "regular gait, Tc = 0.5 s, anchored anticipative tail with preview above the recursive-feasibility bound",
        _FIXED_GAIT.replace("plan.steps = 20\n", ""),
    ),
    "short_preview": _fixed(
        "short_preview",
        "duration = 20\nplan.steps = 42\nmpc.control_horizon = 0.5\nmpc.preview_horizon = 0.6\n"
        "mpc.tail = anticipative\nmpc.tail_anchored = true\n",
        "same as recursive_feasibility with a preview below the bound (expected to lose feasibility)",
        _FIXED_GAIT.replace("plan.steps = 20\n", ""),
    ),
}
