"""Command-line entry point: run scenarios, list builtins, evaluate feasibility bounds."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .feasibility import recursive_feasibility_preview_bound
from .lip import DEFAULT_GRAVITY, LipParams
from .sim import (
    ConfigError,
    Scenario,
    builtin,
    compare_runs,
    emit_csv,
    exit_code,
    load_config,
    read_csv,
    run_scenario,
    summarize,
)
from .tails import verify_exponential_weighting_properties

EXIT_CONFIG_ERROR = 2


def _run(scenario: Scenario, out: str | None) -> int:
    log = run_scenario(scenario)
    print(summarize(log))
    if out:
        emit_csv(log, out)
        print(f"wrote {len(log)} samples to {out}")
    return exit_code(log)


def _cmd_run(args: argparse.Namespace) -> int:
    return _run(load_config(args.config), args.out)


def _cmd_run_builtin(args: argparse.Namespace) -> int:
    return _run(builtin(args.name), args.out)


def _cmd_list(args: argparse.Namespace) -> int:
    from .scenarios import BUILTIN_SCENARIOS

    width = max(len(n) for n in BUILTIN_SCENARIOS)
    for name in sorted(BUILTIN_SCENARIOS):
        print(f"{name:<{width}}  {BUILTIN_SCENARIOS[name].summary}")
    return 0


def _cmd_bound(args: argparse.Namespace) -> int:
    if not (args.eta > 0 and args.tc > 0):
        raise ConfigError("--eta and --tc must be positive")
    params = LipParams(com_height=DEFAULT_GRAVITY / args.eta**2)
    try:
        bound = recursive_feasibility_preview_bound(params, args.tc, args.vmax, args.dz)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{bound:.6f}")
    return 0


def _cmd_appendix(args: argparse.Namespace) -> int:
    params = LipParams(com_height=args.com_height)
    checks = verify_exponential_weighting_properties(params, args.tol)
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name:<13} value={c.value:.12g} expected={c.expected:.12g} err={c.error:.2e}")
    return 0 if all(c.ok for c in checks) else 1


def _cmd_compare(args: argparse.Namespace) -> int:
    try:
        a, b = read_csv(args.a, "a"), read_csv(args.b, "b")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cmp = compare_runs(a, b, args.threshold)
    print(f"samples compared: {cmp.samples}")
    print(f"max |delta com|: {cmp.max_com_delta:.6g} m")
    print(f"max |delta zmp|: {cmp.max_zmp_delta:.6g} m")
    print(f"first sample over threshold: {cmp.first_exceeding}")
    print(f"verdicts: {cmp.verdict_a}, {cmp.verdict_b}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ismpc", description="Intrinsically stable MPC gait generation on the LIP model.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario from a config file")
    r.add_argument("config")
    r.add_argument("--out", help="write the run log as CSV")
    r.set_defaults(func=_cmd_run)

    rb = sub.add_parser("run-builtin", help="run a builtin scenario")
    rb.add_argument("name")
    rb.add_argument("--out", help="write the run log as CSV")
    rb.set_defaults(func=_cmd_run_builtin)

    ls = sub.add_parser("list-scenarios", help="list builtin scenarios")
    ls.set_defaults(func=_cmd_list)

    fb = sub.add_parser("feasibility-bound", help="preview length sufficient for recursive feasibility")
    fb.add_argument("--eta", type=float, required=True, help="LIP natural frequency (1/s)")
    fb.add_argument("--dz", type=float, required=True, help="ZMP region size (m)")
    fb.add_argument("--vmax", type=float, required=True, help="maximum ZMP speed of the tail (m/s)")
    fb.add_argument("--tc", type=float, required=True, help="control horizon (s)")
    fb.set_defaults(func=_cmd_bound)

    va = sub.add_parser("verify-appendix", help="check the exponential-weighting identities numerically")
    va.add_argument("--com-height", type=float, default=0.78)
    va.add_argument("--tol", type=float, default=1e-6)
    va.set_defaults(func=_cmd_appendix)

    cp = sub.add_parser("compare", help="compare two CSV run logs")
    cp.add_argument("a")
    cp.add_argument("b")
    cp.add_argument("--threshold", type=float, default=0.5)
    cp.set_defaults(func=_cmd_compare)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
