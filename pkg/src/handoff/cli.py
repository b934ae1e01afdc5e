"""Command line entry point: ``handoff validate|run|timeline``.

Exit codes: 0 success, 1 mission fault or invalid document, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bundled import DATA
from .dsl import DocumentError, load_scenario
from .events import LogFormatError, parse_log
from .sim import ScenarioError, check_integrity, compute_latency, mission_ok, render_timeline, \
    run_scenario

EXIT_OK, EXIT_FAULT, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.is_file():
        return p
    if not p.parent.parts and (DATA / p.name).is_file():
        return DATA / p.name
    raise FileNotFoundError(path)


def _usage(msg: str) -> int:
    print(f"handoff: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def cmd_validate(args) -> int:
    try:
        path = _resolve(args.scenario)
    except FileNotFoundError:
        return _usage(f"no such scenario file: {args.scenario}")
    try:
        sc = load_scenario(path)
    except DocumentError as exc:
        for d in exc.diagnostics:
            print(f"{path}:{d}", file=sys.stderr)
        return EXIT_FAULT
    for d in sc.warnings:
        print(f"{path}:{d}", file=sys.stderr)
    print(f"{path}: ok ({len(sc.robots)} robots, chain {' -> '.join(sc.chain())})", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        path = _resolve(args.scenario)
    except FileNotFoundError:
        return _usage(f"no such scenario file: {args.scenario}")
    try:
        sc = load_scenario(path)
    except DocumentError as exc:
        for d in exc.diagnostics:
            print(f"{path}:{d}", file=sys.stderr)
        return EXIT_FAULT
    try:
        log = run_scenario(sc, seed=args.seed, realtime_scale=args.realtime)
    except ScenarioError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_FAULT
    text = render_timeline(log, args.format)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            return _usage(f"cannot write {args.out}: {exc.strerror}")
    else:
        sys.stdout.write(text)
    stats = compute_latency(log)
    print(stats.report(), file=sys.stderr)
    for problem in check_integrity(log):
        print(f"integrity: {problem}", file=sys.stderr)
    status = "ok" if mission_ok(log) else "FAULT"
    print(f"mission {status} at t={log.end.get('t')} ms", file=sys.stderr)
    return EXIT_OK if mission_ok(log) else EXIT_FAULT


def cmd_timeline(args) -> int:
    try:
        text = Path(args.log).read_text(encoding="utf-8")
    except OSError:
        return _usage(f"cannot read log file: {args.log}")
    try:
        log = parse_log(text)
    except LogFormatError as exc:
        print(f"{args.log}: {exc}", file=sys.stderr)
        return EXIT_FAULT
    sys.stdout.write(render_timeline(log, args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="handoff",
                     description="Simulate robots handing a mission down a chain of triggers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a scenario and the machines it references")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario and write its event log")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", help="write the log here instead of standard output")
    p.add_argument("--format", choices=("text", "structured"), default="structured")
    p.add_argument("--realtime", type=float, default=None, metavar="SCALE",
                   help="sleep SCALE wall-clock ms per simulated ms (demos only)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("timeline", help="render a previously written structured log")
    p.add_argument("log")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.set_defaults(func=cmd_timeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        return _usage("--seed must be in [0, 2**64)")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
