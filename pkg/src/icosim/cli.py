"""Command line front end: run scenario files, replay stored traces.

Exit codes: 0 for a verified, violation-free run; 1 when the audit finds
violations, a stored digest does not match, or a replay diverges; 2 for
unusable input (parse errors, refused overrides, missing files).
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import scenario as scenario_mod
from .agents import run_scenario
from .analysis import SignalParams, audit_trace, signaling_advantage
from .errors import DigestMismatch, IcoError, ParseError, RefusedDifferentConfig
from .trace import Trace, parse_trace


def _summary(name: str, spec, trace: Trace, report, out_path) -> list[str]:
    cfg = spec.config
    lines = [
        f"scenario: {name}",
        f"stages: 0..{cfg.u} (lock at {cfg.t}, granularity {cfg.granularity})",
    ]
    fin = trace.records("fin")
    if fin:
        kv = dict(f.split("=", 1) for f in fin[0][1:])
        lines.append(f"final valuation: {kv['V']}")
        lines.append(f"proceeds: {kv['proceeds']}")
    blackout = [d for d in spec.strategies if d.kind == "blackout"]
    reactive = [d for d in spec.strategies if d.kind == "reactive"]
    if len(blackout) == 1 and len(reactive) == 1:
        a = Fraction(cfg.curve.p0) - 1
        b = Fraction(cfg.curve.pt) - 1
        try:
            predicted = signaling_advantage(SignalParams(
                a, b, Fraction(int(blackout[0].params["stake"])),
                Fraction(int(reactive[0].params["v"]))))
        except ValueError:
            predicted = None
        if predicted is not None:
            lines.append(f"predicted share gain from the blind tranche: "
                         f"{predicted} ({float(predicted):.6f})")
    status = "clean" if report.clean else f"{len(report.violations)} violation(s)"
    lines.append(f"audit: {status} over {report.blocks} blocks")
    for v in report.violations:
        stage = "-" if v.stage is None else v.stage
        lines.append(f"  stage {stage}: {v.check}: {v.detail}")
    if report.lag_stages:
        lines.append(f"lagging blocks: {', '.join(map(str, report.lag_stages))}")
    lines.append(f"digest: {trace.digest}")
    if out_path is not None:
        lines.append(f"trace written: {out_path}")
    return lines


def _emit(args, lines: list[str], trace: Trace) -> None:
    if args.report == "full":
        sys.stdout.write(trace.render())
    print("\n".join(lines))


def cmd_run(args) -> int:
    path = Path(args.scenario)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    spec = scenario_mod.parse(text)
    if args.seed is not None:
        spec.seed = args.seed
    result = run_scenario(spec)
    report = audit_trace(result.trace)
    result.trace.audit_lines = report.lines()

    out_path = None
    if not args.audit_only:
        out_dir = Path(args.out or os.environ.get("ICOSIM_OUT", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / f"{path.stem}.trace.tsv"
        out_path.write_text(result.trace.render(), encoding="utf-8")
    _emit(args, _summary(path.name, spec, result.trace, report, out_path),
          result.trace)
    return 0 if report.clean else 1


def cmd_replay(args) -> int:
    path = Path(args.trace)
    try:
        stored = parse_trace(path.read_text(encoding="utf-8"))
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    spec = scenario_mod.parse("\n".join(stored.scenario_lines) + "\n")
    if args.seed is not None and args.seed != spec.seed:
        raise RefusedDifferentConfig(
            f"trace was recorded with seed {spec.seed}; rerun `run` to use "
            f"{args.seed}")
    fresh = run_scenario(spec)
    report = audit_trace(fresh.trace)
    lines = _summary(path.name, spec, fresh.trace, report, None)
    if fresh.trace.digest != stored.digest:
        lines.append(f"replay diverged: stored {stored.digest[:16]}.. "
                     f"recomputed {fresh.trace.digest[:16]}..")
        _emit(args, lines, fresh.trace)
        return 1
    lines.append("replay verified: digests match")
    _emit(args, lines, fresh.trace)
    return 0 if report.clean else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icosim",
        description="Deterministic interactive coin-offering simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="play a scenario file and audit the trace")
    run_p.add_argument("scenario", help="path to a scenario .tsv file")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario's RNG seed")
    run_p.add_argument("--out", default=None,
                       help="directory for the trace file "
                            "(default: $ICOSIM_OUT or the current directory)")
    run_p.add_argument("--audit-only", action="store_true",
                       help="do not write a trace file")
    run_p.add_argument("--report", choices=("summary", "full"),
                       default="summary")
    run_p.set_defaults(func=cmd_run)

    replay_p = sub.add_parser(
        "replay", help="re-run a stored trace and verify its digest")
    replay_p.add_argument("trace", help="path to a stored .trace.tsv file")
    replay_p.add_argument("--seed", type=int, default=None,
                          help="must match the recorded seed; anything else "
                               "is refused")
    replay_p.add_argument("--report", choices=("summary", "full"),
                          default="summary")
    replay_p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return 2
    except RefusedDifferentConfig as err:
        print(f"refused: {err}", file=sys.stderr)
        return 2
    except DigestMismatch as err:
        print(f"digest mismatch: {err}", file=sys.stderr)
        return 1
    except IcoError as err:
        print(f"error: {err.code}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
