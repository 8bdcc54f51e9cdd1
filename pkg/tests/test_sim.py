from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from ismpc.cli import main
from ismpc.footsteps import Side, step_duration
from ismpc.scenarios import BUILTIN_SCENARIOS
from ismpc.sim import (
    CSV_COLUMNS,
    ConfigError,
    LogRecord,
    RunLog,
    builtin,
    builtin_names,
    compare_runs,
    emit_csv,
    exit_code,
    load_config,
    parse_config_text,
    read_csv,
    run_scenario,
    summarize,
    verdict,
)
from ismpc.tails import TailKind

SHORT = """
name = short
duration = 1.2
lip.com_height = 0.78
mpc.control_horizon = 1.0
mpc.tail = periodic
mpc.dz_x = 0.04
mpc.dz_y = 0.04
mpc.footsteps_fixed = true
gait.ss_fraction = 0.8
gait.initial_ds = 1.0
plan.kind = regular
plan.steps = 6
"""

ACCEPTANCE_BUILTINS = [
    "sim1_ismpc",
    "sim1_standard",
    "sim2_ismpc",
    "sim2_standard",
    "sim2bis_ismpc",
    "sim2bis_standard",
    "sim3_truncated",
    "sim3_periodic",
    "sim4_periodic",
    "sim4_anticipative",
    "recursive_feasibility",
    "short_preview",
]


def _record(t: float, x: float = 0.0) -> LogRecord:
    return LogRecord(t, x, 0.1, 0.0, 0.0, x, 0.1, x, 0.1, -1.0, 1.0, -1.0, 1.0, 0.5, 0.5, "optimal", "single", 0)


def test_parse_minimal_config():
    s = parse_config_text(SHORT)
    assert s.name == "short" and s.duration == 1.2
    assert s.mpc.horizon_C == 100 and s.mpc.preview_P == 100
    assert s.mpc.tail_kind is TailKind.PERIODIC
    plan = s.fixed_plan()
    assert len(plan) == 7 and plan.timestamps[0] == 1.0


def test_parse_generated_config_with_references():
    s = parse_config_text(BUILTIN_SCENARIOS["sim5_speedup"].text)
    assert not s.uses_fixed_plan
    assert s.schedule.at(7.0).vx == 0.3
    assert s.mpc.preview_P == 320 and s.gait.first_support is Side.RIGHT


def test_every_builtin_parses():
    assert builtin_names() == sorted(BUILTIN_SCENARIOS)
    for name in builtin_names():
        assert builtin(name).name == name


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("duration = 1\nbogus.key = 3\n", "unknown key"),
        ("duration = 1\nduration = 2\n", "duplicate"),
        ("duration = abc\n", "bad value"),
        ("just text\n", "expected 'key = value'"),
        ("duration = 1\nmpc.footsteps_fixed = false\nreference.0 = 0, 1\n", "reference needs"),
        ("duration = 1\nmpc.footsteps_fixed = maybe\n", "bad value"),
        ("duration = 1\nmpc.tail = sideways\n", "bad value"),
        ("duration = 1\nmpc.footsteps_fixed = true\n", "generated footsteps require"),
        ("duration = 1\nplan.kind = regular\nmpc.footsteps_fixed = false\n", "fixed footstep plan requires"),
        ("duration = 1\nmpc.horizon_C = 50\nmpc.control_horizon = 0.5\nplan.kind = regular\n", "either"),
        ("duration = 1\nmpc.horizon_C = 0\nplan.kind = regular\n", "horizon_C"),
        ("duration = 1\nplan.kind = spiral\n", "unknown plan kind"),
        ("duration = 1\nmpc.footsteps_fixed = false\nreference.0 = 5, 0.1, 0, 0\n", "after the end"),
        ("duration = -1\nplan.kind = regular\n", "duration"),
    ],
)
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_csv_schema_and_one_sample_log(tmp_path):
    assert len(CSV_COLUMNS) == 18
    log = RunLog("x", 0.01, [_record(0.0)])
    path = tmp_path / "one.csv"
    emit_csv(log, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].split(",") == list(CSV_COLUMNS)
    with pytest.raises(ValueError):
        emit_csv(RunLog("empty", 0.01), tmp_path / "empty.csv")
    with pytest.raises(OSError, match="missing_dir"):
        emit_csv(log, tmp_path / "missing_dir" / "x.csv")


def test_csv_round_trip_of_real_run(tmp_path):
    log = run_scenario(parse_config_text(SHORT))
    path = tmp_path / "run.csv"
    emit_csv(log, path)
    back = read_csv(path)
    assert len(back) == len(log)
    for a, b in zip(log.records, back.records):
        for name in CSV_COLUMNS:
            va, vb = getattr(a, name), getattr(b, name)
            if isinstance(va, float):
                assert vb == pytest.approx(va, abs=1e-12, rel=1e-12)
            else:
                assert va == vb


def test_runs_are_bit_reproducible():
    a = run_scenario(parse_config_text(SHORT))
    b = run_scenario(parse_config_text(SHORT))
    assert [r for r in a.records] == [r for r in b.records]


def test_one_record_per_sample_and_monotone_time():
    log = run_scenario(parse_config_text(SHORT))
    t = log.column("t")
    assert len(log) == 120 and log.completed
    np.testing.assert_allclose(np.diff(t), 0.01, atol=1e-12)
    assert set(log.column("support_phase")) <= {"initial_double", "single", "double"}


def test_compare_runs_identical_and_truncated():
    log = run_scenario(parse_config_text(SHORT))
    same = compare_runs(log, log)
    assert same.max_com_delta == 0.0 and same.max_zmp_delta == 0.0 and same.first_exceeding is None
    assert same.verdict_a == same.verdict_b == "stable"
    shorter = RunLog("s", 0.01, log.records[:50])
    with pytest.warns(UserWarning, match="lengths differ"):
        cmp = compare_runs(log, shorter)
    assert cmp.samples == 50
    with pytest.raises(ValueError):
        compare_runs(log, RunLog("d", 0.02, log.records))


def test_divergence_verdict_and_exit_codes():
    log = RunLog("d", 0.01, [_record(0.0), LogRecord(*([0.01, 0.6] + [0.0] * 13 + ["optimal", "single", 0]))])
    assert log.divergence_time() == 0.01 and verdict(log) == "divergent"
    log.exit_reason = "diverged"
    assert exit_code(log) == 4
    log.exit_reason = "infeasible"
    assert exit_code(log) == 3
    log.exit_reason = "completed"
    assert exit_code(log) == 0
    assert "scenario: d" in summarize(log)


def test_generated_footsteps_follow_timing_rule():
    s = builtin("sim5_speedup")
    log = run_scenario(s, max_steps=900)
    assert log.exit_reason == "completed"
    plan = log.footsteps
    d = np.array(plan.durations)
    starts = np.array(plan.timestamps[:-1])
    slow = d[starts + 1e-9 < 6.0 - d]
    fast = d[starts >= 6.0]
    np.testing.assert_allclose(slow, step_duration(0.1, s.cruise), atol=1e-9)
    np.testing.assert_allclose(fast, step_duration(0.3, s.cruise), atol=1e-9)
    # forward progress at roughly the reference speed
    x = log.column("xc")
    assert 1.0 < x[-1] < 1.6


def test_generated_run_turns_with_reference():
    log = run_scenario(builtin("sim6_cusp"), max_steps=600)
    assert log.exit_reason == "completed"
    thetas = [p.theta for p in log.footsteps.poses]
    assert max(thetas) > 0.5 and np.all(np.abs(np.diff(thetas)) <= math.pi / 8 + 1e-9)


def test_cli_list_and_bound(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ACCEPTANCE_BUILTINS:
        assert name in out
    assert main(["feasibility-bound", "--eta", "3.5464", "--dz", "0.04", "--vmax", "0.3", "--tc", "0.5"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.5 + math.log(0.6 / (3.5464 * 0.04)) / 3.5464, abs=1e-5)
    assert main(["feasibility-bound", "--eta", "3.5", "--dz", "0", "--vmax", "0.3", "--tc", "0.5"]) == 2


def test_cli_verify_appendix(capsys):
    assert main(["verify-appendix"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5 and all(line.startswith("PASS") for line in out)


def test_cli_run_config_and_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "short.cfg"
    cfg.write_text(SHORT)
    out = tmp_path / "short.csv"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 121
    assert main(["compare", str(out), str(out)]) == 0
    assert "verdicts: stable, stable" in capsys.readouterr().out
    bad = tmp_path / "bad.cfg"
    bad.write_text("duration = x\n")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    assert main(["run-builtin", "no_such_scenario"]) == 2
    infeasible = tmp_path / "inf.cfg"
    infeasible.write_text(BUILTIN_SCENARIOS["short_preview"].text)
    assert main(["run", str(infeasible)]) == 3


def test_cli_divergence_exit_code(tmp_path):
    cfg = tmp_path / "div.cfg"
    cfg.write_text(BUILTIN_SCENARIOS["sim2_standard"].text.replace("duration = 10", "duration = 5"))
    assert main(["run", str(cfg)]) == 4


@pytest.mark.parametrize("name", ["sim2_ismpc", "sim5_speedup"])
def test_shipped_example_configs_match_builtins(name):
    path = Path(__file__).resolve().parents[1] / "configs" / f"{name}.cfg"
    assert load_config(path) == builtin(name)


def test_zmp_speed_bound_is_reported_not_enforced():
    from ismpc.sim import parse_config_text, run_scenario, summarize

    plain = run_scenario(parse_config_text(SHORT))
    tight = parse_config_text(SHORT + "analysis.zmp_speed_bound = 0.05\n")
    assert tight.zmp_speed_bound == 0.05
    log = run_scenario(tight)
    # the bound is analysis only, so the trajectory is unchanged
    assert log.records == plain.records
    zx, zy = log.column("xz"), log.column("yz")
    expected = max(np.abs(np.diff(zx)).max(), np.abs(np.diff(zy)).max()) / 0.01
    assert log.max_zmp_speed() == pytest.approx(expected, rel=1e-12)
    assert log.max_zmp_speed() > 0.05
    assert "exceeds bound 0.05" in summarize(log)
    loose = run_scenario(parse_config_text(SHORT + "analysis.zmp_speed_bound = 100\n"))
    assert "within bound 100" in summarize(loose)
    assert "zmp speed" not in summarize(plain)


@pytest.mark.parametrize("value", ["0", "-1", "fast"])
def test_zmp_speed_bound_rejects_bad_values(value):
    from ismpc.sim import ConfigError, parse_config_text

    with pytest.raises(ConfigError):
        parse_config_text(SHORT + f"analysis.zmp_speed_bound = {value}\n")
