"""Command-line front end: slice, run, check, and validate flat programs.

Exit codes: 0 success, 1 usage, 2 input error, 3 check failure, 4 fuel
exhaustion.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .interp import evaluate, format_answer
from .reach import FuelExhausted
from .slicer import CheckLimits, check_correct_slice, enumerate_goals, slice_program
from .surface import (
    SurfaceError,
    load_program,
    parse_goal,
    parse_program,
    print_program,
    trace_to_json,
)
from .terms import format_term, term_vars

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_CHECK = 3
EXIT_FUEL = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flslice", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, criterion: bool = False, goal: bool = False) -> None:
        p.add_argument("file", help="flat program (.flc)")
        if criterion:
            p.add_argument("--criterion", required=True, help="slicing criterion, e.g. 'main(Len, xs)'")
        if goal:
            p.add_argument("--goal", required=True, help="goal term, e.g. 'plus(x, Succ(Zero))'")
        p.add_argument("--max-steps", type=int, default=10_000)
        p.add_argument("--max-answers", type=int, default=50)
        p.add_argument("--fuel", type=int, default=None)
        p.add_argument("-o", "--output", default=None, help="write the main output to a file")

    ps = sub.add_parser("slice", help="compute a forward slice")
    common(ps, criterion=True)
    mode = ps.add_mutually_exclusive_group()
    mode.add_argument("--simplified", dest="mode", action="store_const", const="simplified")
    mode.add_argument("--full", dest="mode", action="store_const", const="full")
    ps.set_defaults(mode="simplified")
    ps.add_argument("--trace-json", default=None, help="write the fixpoint trace as JSON")

    pr = sub.add_parser("run", help="evaluate a goal by lazy narrowing")
    common(pr, goal=True)
    pr.add_argument("--deep", action="store_true", help="force constructor arguments too")

    pc = sub.add_parser("check", help="differential check of a slice against the original")
    common(pc, criterion=True)
    pc.add_argument("--slice-file", default=None, help="check this slice instead of slicing internally")
    pc.add_argument("--enum-bound", type=int, default=3, help="constructor size bound for goals")
    pc.add_argument("--json", action="store_true", help="emit the report as JSON")

    pv = sub.add_parser("validate", help="parse and validate a program")
    pv.add_argument("file")
    return parser


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        print(f"flslice: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _emit(text: str, output: Optional[str]) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load(path: str):
    try:
        return load_program(_read(path), path)
    except SurfaceError as exc:
        for d in exc.diagnostics:
            print(str(d), file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _goal(text: str):
    try:
        return parse_goal(text)
    except SurfaceError as exc:
        for d in exc.diagnostics:
            print(str(d), file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def cmd_slice(args: argparse.Namespace) -> int:
    program = _load(args.file)
    criterion = _goal(args.criterion)
    try:
        sliced, trace = slice_program(program, criterion, fuel=args.fuel)
    except FuelExhausted as exc:
        print(f"flslice: {exc}", file=sys.stderr)
        if args.trace_json:
            with open(args.trace_json, "w", encoding="utf-8") as fh:
                fh.write(trace_to_json(exc.trace))
        return EXIT_FUEL
    _emit(print_program(sliced, mode=args.mode), args.output)
    if args.trace_json:
        with open(args.trace_json, "w", encoding="utf-8") as fh:
            fh.write(trace_to_json(trace))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    program = _load(args.file)
    goal = _goal(args.goal)
    result = evaluate(
        goal, program, max_steps=args.max_steps, max_answers=args.max_answers, deep=args.deep
    )
    gv = term_vars(goal)
    lines = [format_answer(a, gv) for a in result.answers]
    lines.append(f"-- answers: {len(result.answers)} ({'exhausted' if result.exhausted else 'truncated'})")
    if result.suspended_paths:
        lines.append(f"-- suspended paths: {result.suspended_paths}")
    if result.top_reached_paths:
        lines.append(f"-- top reached paths: {result.top_reached_paths}")
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    program = _load(args.file)
    criterion = _goal(args.criterion)
    if args.slice_file:
        sliced = _load(args.slice_file)
    else:
        try:
            sliced, _ = slice_program(program, criterion, fuel=args.fuel)
        except FuelExhausted as exc:
            print(f"flslice: {exc}", file=sys.stderr)
            return EXIT_FUEL
    goals = enumerate_goals(criterion, program, size_bound=args.enum_bound)
    limits = CheckLimits(max_steps=args.max_steps, max_answers=args.max_answers)
    report = check_correct_slice(program, sliced, goals, limits)
    if args.json:
        payload = {
            "goals_tested": report.goals_tested,
            "goals_skipped": report.goals_skipped,
            "agreements": report.agreements,
            "divergences": [
                {
                    "goal": format_term(d.goal),
                    "original": d.original,
                    "sliced": d.sliced,
                    "reason": d.reason,
                }
                for d in report.divergences
            ],
            "top_reached": [format_term(t) for t in report.top_reached],
            "structural_violations": report.structural_violations,
            "ok": report.ok,
        }
        _emit(json.dumps(payload, indent=2) + "\n", args.output)
    else:
        lines = []
        for v in report.structural_violations:
            lines.append(f"structural violation: {v}")
        lines.append(f"goals tested: {report.goals_tested} (skipped: {report.goals_skipped})")
        if report.goals_tested == 0:
            lines.append("warning: 0 goals tested (all enumerated goals suspend or exceed limits)")
        lines.append(f"agreements: {report.agreements}")
        lines.append(f"divergences: {len(report.divergences)}")
        for d in report.divergences:
            lines.append(f"  goal {format_term(d.goal)}: {d.reason}")
            lines.append(f"    original: {'; '.join(d.original) or '(none)'}")
            lines.append(f"    sliced:   {'; '.join(d.sliced) or '(none)'}")
        lines.append(f"top reached: {len(report.top_reached)}")
        for t in report.top_reached:
            lines.append(f"  goal {format_term(t)} hit deleted code")
        _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK if report.ok else EXIT_CHECK


def cmd_validate(args: argparse.Namespace) -> int:
    program, diags = parse_program(_read(args.file), args.file)
    for d in diags:
        print(str(d), file=sys.stderr)
    if program is None:
        return EXIT_INPUT
    print(f"ok: {len(program.rules)} rules")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "slice": cmd_slice,
        "run": cmd_run,
        "check": cmd_check,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
