"""Command-line front end: ``cfa analyze``, ``cfa bench`` and ``cfa trace``.

Exit status is 0 on success, 2 on bad input or flags (nothing is written
to standard output), and 3 when an analysis ran out of budget; in that
case the partial report is still printed with ``"partial": true``.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

from . import bench
from .convert import cps_convert
from .cps_concrete import CallStringClock, NatClock, format_trace, run_concrete
from .engine import Budget
from .fj.concrete import format_fj_trace, run_fj
from .fj.syntax import ClassTable, parse_fj
from .mcfa import Policy, run_flat
from .sexp import ParseError

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 2, 3

_EXT_LANG = {".scm": "scheme", ".ss": "scheme", ".cps": "cps", ".fj": "fj", ".java": "fj"}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfa", description="k-CFA and m-CFA for CPS and Featherweight Java")
    sub = p.add_subparsers(dest="command", required=True)

    def add_budget(sp):
        sp.add_argument("--budget-ms", type=float, default=None,
                        help="wall-clock cap per analysis (default: $CFA_BUDGET_MS or 60000)")
        sp.add_argument("--max-transfers", type=int, default=None, help="cap on transfer applications")

    a = sub.add_parser("analyze", help="analyze one program and print a flow report")
    a.add_argument("path", help="program file, or - for standard input")
    a.add_argument("--lang", choices=["cps", "scheme", "fj"], help="input language (default: from extension)")
    a.add_argument("--analysis", choices=list(bench.ALL_ANALYSES),
                   help="kcfa, mcfa, polykcfa (CPS) or fj-kcfa (default: kcfa / fj-kcfa)")
    a.add_argument("--k", type=int, default=None, help="context depth for kcfa / fj-kcfa / polykcfa")
    a.add_argument("--m", type=int, default=None, help="context depth for mcfa / polykcfa")
    a.add_argument("--collapsed", action="store_true", help="fj-kcfa: represent environments by their time")
    a.add_argument("--call-site-only-tick", action="store_true",
                   help="fj-kcfa: advance time only at method calls and restore it on return")
    a.add_argument("--strict-cast", action="store_true", help="fj-kcfa: casts filter flow sets by class")
    a.add_argument("--format", choices=["json", "csv", "text"], default="json")
    a.add_argument("--stats", action="store_true", help="include transfer counts and elapsed time")
    add_budget(a)

    b = sub.add_parser("bench", help="run an analysis matrix over a benchmark family")
    b.add_argument("--family", choices=["worst-case", "paired", "identity", "corpus"], default="worst-case")
    b.add_argument("--n", default="1..4", help="family sizes, e.g. 1..4 or 1,3,5")
    b.add_argument("--analyses", default="kcfa:1,mcfa:1,polykcfa:1,kcfa:0",
                   help="comma-separated name:depth list")
    b.add_argument("--format", choices=["csv", "json", "text"], default="csv")
    add_budget(b)

    t = sub.add_parser("trace", help="run a concrete machine and print its trace")
    t.add_argument("path")
    t.add_argument("--lang", choices=["cps", "scheme", "fj"])
    t.add_argument("--machine", choices=["shared", "flat"], default="shared",
                   help="CPS only: linked environments or flat closures")
    t.add_argument("--clock", choices=["nat", "callstring"], default="nat", help="CPS shared machine time")
    t.add_argument("--steps", type=int, default=10_000)
    t.add_argument("--call-site-only-tick", action="store_true")
    return p


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _lang(path: str, lang: str | None) -> str:
    if lang:
        return lang
    ext = os.path.splitext(path)[1]
    if ext not in _EXT_LANG:
        raise UsageError(f"cannot infer language of {path}; pass --lang")
    return _EXT_LANG[ext]


def parse_sizes(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise ValueError("sizes must be positive")
    return out


def _budget(args) -> Budget:
    base = bench.default_budget()
    ms = args.budget_ms if args.budget_ms is not None else base.max_ms
    return Budget(max_transfers=args.max_transfers, max_ms=ms)


def _analyze(args, out) -> int:
    lang = _lang(args.path, args.lang)
    analysis = args.analysis or ("fj-kcfa" if lang == "fj" else "kcfa")
    if (lang == "fj") != (analysis == "fj-kcfa"):
        raise UsageError(f"analysis {analysis} cannot be used with --lang {lang}")
    if analysis in ("kcfa", "fj-kcfa") and args.m is not None:
        raise UsageError("--m applies to mcfa and polykcfa; use --k")
    if analysis == "mcfa" and args.k is not None:
        raise UsageError("--k applies to kcfa; use --m")
    if analysis != "fj-kcfa" and (args.collapsed or args.call_site_only_tick or args.strict_cast):
        raise UsageError("--collapsed, --call-site-only-tick and --strict-cast apply to fj-kcfa only")
    depth = args.m if args.m is not None else args.k if args.k is not None else 1
    if depth < 0:
        raise UsageError("context depth must be nonnegative")
    program = bench.load_program(_read(args.path), lang)
    spec = bench.AnalysisSpec(analysis, depth, args.collapsed, args.call_site_only_tick, args.strict_cast)
    report = bench.run_analysis(program, spec, _budget(args))
    if args.format == "json":
        if not args.stats:
            report.stats.pop("elapsed_ms", None)
        out.write(report.to_json(stats=args.stats))
    elif args.format == "csv":
        out.write(report.to_csv())
    else:
        out.write(report.to_text())
    return EXIT_BUDGET if report.partial else EXIT_OK


def _family(name: str, sizes: list[int]) -> list[bench.BenchProgram]:
    if name == "corpus":
        return bench.corpus()
    if name == "identity":
        out = []
        for flag, tag in ((True, "identity"), (False, "identity-plain")):
            src = bench.identity_source(flag)
            out.append(bench.BenchProgram(tag, "cps", src, cps_convert(src)))
        return out
    out = []
    for n in sizes:
        if name == "worst-case":
            src = bench.worst_case_source(n)
            out.append(bench.BenchProgram(f"worst-case-{n}", "cps", src, cps_convert(src)))
        else:
            fj, scm = bench.gen_paired_closure(n, n)
            out.append(bench.BenchProgram(f"paired-{n}x{n}.scm", "cps", scm, cps_convert(scm)))
            out.append(bench.BenchProgram(f"paired-{n}x{n}.fj", "fj", fj, parse_fj(fj)))
    return out


def _bench(args, out) -> int:
    try:
        sizes = parse_sizes(args.n)
        specs = bench.parse_analyses(args.analyses)
    except ValueError as e:
        raise UsageError(str(e)) from None
    rows = bench.run_matrix(_family(args.family, sizes), specs, _budget(args))
    if args.format == "csv":
        out.write(bench.rows_to_csv(rows))
    elif args.format == "json":
        out.write(bench.rows_to_json(rows))
    else:
        out.write(bench.rows_to_text(rows))
    return EXIT_OK


def _trace(args, out) -> int:
    if args.steps < 0:
        raise UsageError("--steps must be nonnegative")
    lang = _lang(args.path, args.lang)
    program = bench.load_program(_read(args.path), lang)
    if isinstance(program, ClassTable):
        out.write(format_fj_trace(run_fj(program, args.steps, args.call_site_only_tick)))
    elif args.machine == "flat":
        tr = run_flat(program, args.steps, Policy.TOP_M_FRAMES)
        for s in tr.states:
            out.write(f"{s.call.label}\t{s.env.serial}\t{len(s.env.context)}\n")
        out.write(f"halt\t{tr.result.value!r}\n" if tr.result else "budget-exhausted\n")
    else:
        clock = CallStringClock if args.clock == "callstring" else NatClock
        out.write(format_trace(run_concrete(program, args.steps, clock)))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    handler = {"analyze": _analyze, "bench": _bench, "trace": _trace}[args.command]
    try:
        return handler(args, sys.stdout)
    except (UsageError, ParseError, ValueError) as e:
        print(f"cfa: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as e:
        print(f"cfa: runtime error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
