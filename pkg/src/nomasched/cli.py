"""Command-line entry point: ``nomasched {gen,run,report,export-lp,oracle}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exact import (FrameGuard, GuardError, HorizonGuard, opt_bruteforce_frame, opt_horizon,
                    opt_ilp_frame, opt_matching_m1)
from .harness import ExperimentSpec, Guards, SpecError, emit_report, report_from_csv, run_experiment
from .model import NomaGroup, export_ilp
from .online import FrameResult
from .scenario import (InstanceFormatError, ScenarioParams, generate_instance, load_instance,
                       save_instance)


class CliError(Exception):
    def __init__(self, kind: str, message: str, **extra):
        super().__init__(message)
        self.payload = {"error": kind, "message": message, **extra}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _guards(overrides: list[str]) -> Guards:
    guards = Guards()
    for item in overrides or []:
        key, _, value = item.partition("=")
        guards = guards.override(key.strip(), value.strip())
    return guards


def cmd_gen(args) -> int:
    data = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    for item in args.param or []:
        key, _, value = item.partition("=")
        data[key.strip()] = _parse_value(value.strip())
    if args.seed is not None:
        data["seed"] = args.seed
    base = ScenarioParams.from_dict(data)
    out = Path(args.out)
    if args.count == 1:
        save_instance(generate_instance(base), out)
        print(out)
        return 0
    out.mkdir(parents=True, exist_ok=True)
    for r in range(args.count):
        path = out / f"instance_{base.seed + r}.json"
        save_instance(generate_instance(base.replace(seed=base.seed + r)), path)
        print(path)
    return 0


def cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.config)
    if args.seed is not None:
        spec = ExperimentSpec.from_dict({**spec.__dict__, "base_seed": args.seed})
    table = run_experiment(spec, _guards(args.guard_override), jobs=args.jobs)
    for path in emit_report(table, args.out, spec.name):
        print(path)
    failed = [r for r in table if r.error is not None]
    for r in failed:
        print(json.dumps({"cell": {"axis_value": r.axis_value, "algorithm": r.algorithm,
                                   "seed": r.seed}, "error": r.error}), file=sys.stderr)
    if failed and args.strict:
        raise CliError("cell_failure", f"{len(failed)} of {len(table)} cells failed",
                       failed=len(failed))
    return 0


def cmd_report(args) -> int:
    out = args.out or str(Path(args.csv).with_suffix(".svg"))
    print(report_from_csv(args.csv, out, args.label or ""))
    return 0


def cmd_export_lp(args) -> int:
    instance = load_instance(args.instance)
    text = export_ilp(instance)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_oracle(args) -> int:
    instance = load_instance(args.instance)
    guards = _guards(args.guard_override)
    fg: FrameGuard | None = guards.frame if guards.enabled else None
    hg: HorizonGuard | None = guards.horizon if guards.enabled else None
    method = args.method
    if method == "auto":
        method = "horizon" if instance.num_frames > 1 else "dp"
    if method == "horizon":
        total, frames = opt_horizon(instance, hg, fg)
    else:
        frames = []
        for t in range(instance.num_frames):
            if method == "dp":
                frames.append(opt_bruteforce_frame(instance, t, guard=fg))
            elif method == "ilp":
                frames.append(opt_ilp_frame(instance, t))
            else:
                match = opt_matching_m1(instance, t)
                frames.append(_matching_result(instance, t, match))
        total = sum(f.nsd for f in frames)
    print(json.dumps({"method": method, "nsd": total, "groups": [
        {"frame": g.frame, "slot": g.slot, "members": list(g.members)}
        for f in frames for g in f.groups]}, indent=1))
    return 0


def _matching_result(instance, t, match) -> FrameResult:
    e = instance.max_energy
    return FrameResult(t, [NomaGroup(j, t, [i], [float(e[i])]) for j, i in sorted(match.items())])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nomasched",
                                     description="Uplink NOMA grouping and power allocation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write random instance files")
    p.add_argument("--config", help="JSON file of scenario parameters")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="scenario parameter override (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int, default=1,
                   help="number of consecutive seeds; >1 writes a directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="execute an experiment spec")
    p.add_argument("--config", required=True, help="JSON experiment spec")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="base seed mixed into every cell seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--guard-override", action="append", metavar="KEY=VALUE",
                   help="e.g. frame.max_devices=12, or 'off' to disable guards")
    p.add_argument("--strict", action="store_true", help="exit nonzero if any cell fails")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="plot a results CSV as SVG")
    p.add_argument("csv")
    p.add_argument("--out")
    p.add_argument("--label")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-lp", help="write the binary-power ILP of an instance")
    p.add_argument("instance")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("oracle", help="solve an instance exactly")
    p.add_argument("instance")
    p.add_argument("--method", choices=["auto", "dp", "ilp", "matching", "horizon"], default="auto")
    p.add_argument("--guard-override", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        payload = exc.payload
    except InstanceFormatError as exc:
        payload = {"error": "instance_format", "message": str(exc), "field": exc.field,
                   "location": exc.location}
    except GuardError as exc:
        payload = {"error": "guard", "message": str(exc)}
    except (SpecError, ValueError, OSError, json.JSONDecodeError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
