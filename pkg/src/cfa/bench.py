"""Benchmark families, the bundled corpus and the analysis matrix runner."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Iterable, Sequence

from . import kcfa, mcfa
from .convert import cps_convert
from .cps import CpsProgram, Lam, parse_cps
from .engine import Budget
from .fj import kcfa as fjk
from .fj.syntax import ClassTable, parse_fj
from .report import FlowReport, cps_report, fj_report

__all__ = [
    "AnalysisSpec",
    "BenchProgram",
    "baz_lambda",
    "MetricsRow",
    "corpus",
    "default_budget",
    "gen_paired_closure",
    "gen_worst_case",
    "identity_source",
    "inner_lambda",
    "load_program",
    "parse_analyses",
    "run_analysis",
    "run_matrix",
    "worst_case_source",
]

CPS_ANALYSES = ("kcfa", "mcfa", "polykcfa")
ALL_ANALYSES = CPS_ANALYSES + ("fj-kcfa",)


# ------------------------------------------------------------ generators


def worst_case_source(n: int) -> str:
    """The nested ``((lambda (fi) (fi 0) (fi 1)) (lambda (xi) ...))`` family."""
    if n < 1:
        raise ValueError("n must be at least 1")
    body = "(lambda (z) (z " + " ".join(f"x{i}" for i in range(1, n + 1)) + "))"
    for i in range(n, 0, -1):
        body = f"((lambda (f{i}) (f{i} 0) (f{i} 1)) (lambda (x{i}) {body}))"
    return body + "\n"


def gen_worst_case(n: int) -> CpsProgram:
    return cps_convert(worst_case_source(n))


def inner_lambda(program: CpsProgram) -> Lam:
    """The innermost ``(lambda (z) ...)`` of a worst-case instance."""
    for lam in program.lambdas.values():
        if lam.params and lam.params[0].name == "z":
            return lam
    raise KeyError("no (lambda (z) ...) in program")


def identity_source(with_intervening: bool = True) -> str:
    if with_intervening:
        return ("(define (do-something) 0)\n"
                "(define (identity x) (do-something) x)\n"
                "(identity 3)\n(identity 4)\n")
    return "(define (identity x) x)\n(identity 3)\n(identity 4)\n"


def gen_paired_closure(N: int, M: int) -> tuple[str, str]:
    """``(fj_source, scheme_source)`` for the explicit/implicit closure pair.

    ``foo`` is called with N distinct x objects and passes a closure over
    ``x`` to ``bar``, which applies it to M distinct y objects.  The
    closure builds a second closure ``baz`` over both ``x`` and ``y``.  In
    the OO program that second closure is an explicit ``ClosureXY``
    object whose fields are copied at one allocation site.
    """
    if N < 1 or M < 1:
        raise ValueError("N and M must be at least 1")
    fj = []
    for i in range(1, N + 1):
        fj.append(f"class OX{i} extends Object {{ OX{i}() {{ super(); }} }}")
    for j in range(1, M + 1):
        fj.append(f"class OY{j} extends Object {{ OY{j}() {{ super(); }} }}")
    fj.append("""class ClosureXY extends Object {
  Object x; Object y;
  ClosureXY(Object x, Object y) { super(); this.x = x; this.y = y; }
  Object baz() { Object a = this.x; Object b = this.y; return b; }
}
class ClosureX extends Object {
  Object x;
  ClosureX(Object x) { super(); this.x = x; }
  Object apply(Object y) {
    Object xx = this.x;
    ClosureXY c = new ClosureXY(xx, y);
    Object r = c.baz();
    return r;
  }
}""")
    bar = ["  Object bar(ClosureX g) {"]
    for j in range(1, M + 1):
        bar.append(f"    Object oy{j} = new OY{j}();")
        bar.append(f"    Object s{j} = g.apply(oy{j});")
    bar.append(f"    return s{M};\n  }}")
    fj.append("class Main extends Object {\n  Main() { super(); }\n" + "\n".join(bar) + """
  Object foo(Object x) {
    ClosureX g = new ClosureX(x);
    Object r = this.bar(g);
    return r;
  }
}""")
    main = ["main {", "  Main m = new Main();"]
    for i in range(1, N + 1):
        main.append(f"  Object ox{i} = new OX{i}();")
        main.append(f"  Object r{i} = m.foo(ox{i});")
    main.append(f"  return r{N};\n}}")
    fj.append("\n".join(main))

    scm = ["(define (bar g) " + " ".join(f"(g (lambda (b{j}) b{j}))" for j in range(1, M + 1)) + ")",
           "(define (foo x) (bar (lambda (y) ((lambda () (x y))))))"]
    scm += [f"(foo (lambda (a{i}) a{i}))" for i in range(1, N + 1)]
    return "\n".join(fj) + "\n", "\n".join(scm) + "\n"


def baz_lambda(program: CpsProgram) -> Lam:
    """The nullary user lambda closing ``x`` and ``y`` in the functional twin."""
    for lam in program.lambdas.values():
        names = {v.name for v in lam.free}
        if {"x", "y"} <= names and not lam.is_continuation and len(lam.params) == 1:
            return lam
    raise KeyError("no baz lambda in program")


# ------------------------------------------------------------ corpus


@dataclass(frozen=True)
class BenchProgram:
    name: str
    lang: str  # "cps" or "fj"
    source: str
    program: object = field(compare=False, repr=False)

    @property
    def terms(self) -> int:
        return self.program.size


def load_program(source: str, lang: str):
    """Parse ``source`` as ``cps`` (raw CPS), ``scheme`` (direct style) or ``fj``."""
    if lang == "scheme":
        return cps_convert(source)
    if lang == "cps":
        return parse_cps(source)
    if lang == "fj":
        return parse_fj(source)
    raise ValueError(f"unknown language {lang!r}")


_EXT = {".scm": "scheme", ".cps": "cps", ".fj": "fj"}


def corpus(include_generated: bool = True) -> list[BenchProgram]:
    """Bundled programs, plus generated family members when requested."""
    out = []
    root = resources.files("cfa") / "corpus"
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        ext = os.path.splitext(entry.name)[1]
        if ext not in _EXT:
            continue
        src = entry.read_text()
        lang = _EXT[ext]
        out.append(BenchProgram(entry.name, "fj" if lang == "fj" else "cps", src, load_program(src, lang)))
    if include_generated:
        for n in (1, 2, 3):
            src = worst_case_source(n)
            out.append(BenchProgram(f"worst-case-{n}", "cps", src, cps_convert(src)))
        for n in (1, 2):
            fj, scm = gen_paired_closure(n, n)
            out.append(BenchProgram(f"paired-{n}x{n}.scm", "cps", scm, cps_convert(scm)))
            out.append(BenchProgram(f"paired-{n}x{n}.fj", "fj", fj, parse_fj(fj)))
    return out


# ------------------------------------------------------------ analyses


@dataclass(frozen=True)
class AnalysisSpec:
    name: str  # kcfa | mcfa | polykcfa | fj-kcfa
    param: int
    collapsed: bool = False
    call_site_only: bool = False
    strict_cast: bool = False

    @property
    def policy(self) -> str | None:
        if self.name == "mcfa":
            return mcfa.Policy.TOP_M_FRAMES.value
        if self.name == "polykcfa":
            return mcfa.Policy.LAST_K_CALLS.value
        return None

    def __str__(self):
        return f"{self.name}:{self.param}"


def parse_analyses(text: str) -> list[AnalysisSpec]:
    """``"kcfa:1,mcfa:1"`` -> specs."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, _, p = item.partition(":")
        if name not in ALL_ANALYSES:
            raise ValueError(f"unknown analysis {name!r}")
        try:
            param = int(p) if p else 1
        except ValueError:
            raise ValueError(f"bad context depth in {item!r}") from None
        if param < 0:
            raise ValueError(f"context depth must be nonnegative in {item!r}")
        out.append(AnalysisSpec(name, param))
    return out


def run_analysis(program, spec: AnalysisSpec, budget: Budget | None = None) -> FlowReport:
    """Run one analysis and build its report.  Raises ``ValueError`` on a language mismatch."""
    is_fj = isinstance(program, ClassTable)
    if is_fj != (spec.name == "fj-kcfa"):
        raise ValueError(f"analysis {spec.name} does not apply to {'fj' if is_fj else 'cps'} programs")
    if spec.name == "kcfa":
        res = kcfa.explore_widened(program, spec.param, budget=budget)
        rep = cps_report(program, res, "kcfa", spec.param)
    elif spec.name in ("mcfa", "polykcfa"):
        policy = mcfa.Policy(spec.policy)
        res = mcfa.explore_widened_mcfa(program, spec.param, policy, budget=budget)
        rep = cps_report(program, res, spec.name, spec.param, spec.policy)
    else:
        res = fjk.explore_widened_fj(program, spec.param, spec.collapsed, call_site_only=spec.call_site_only,
                                     strict_cast=spec.strict_cast, budget=budget)
        rep = fj_report(program, res, spec.param, collapsed=spec.collapsed,
                        call_site_only=spec.call_site_only, strict_cast=spec.strict_cast)
    rep.stats["elapsed_ms"] = round(res.elapsed_ms, 3)
    return rep


# ------------------------------------------------------------ matrix


@dataclass(frozen=True)
class MetricsRow:
    program: str
    terms: int
    analysis: str
    k_or_m: int
    policy: str
    transfers: int
    configs: int
    inlinable: int
    time_ms: float
    timeout: bool
    store_joins: int = 0
    env_counts: dict = field(default_factory=dict, compare=False)
    flows: dict = field(default_factory=dict, compare=False)


CSV_COLUMNS = ["program", "terms", "analysis", "k_or_m", "policy", "transfers", "configs",
               "inlinable", "time_ms", "timeout"]


def default_budget() -> Budget:
    """Per-cell budget; ``CFA_BUDGET_MS`` overrides the wall-clock cap."""
    ms = os.environ.get("CFA_BUDGET_MS")
    return Budget(max_transfers=None, max_ms=float(ms) if ms else 60_000.0)


def run_matrix(programs: Sequence[BenchProgram], analyses: Iterable[AnalysisSpec],
               budget: Budget | None = None) -> list[MetricsRow]:
    """One row per applicable (program, analysis) pair.

    A cell that hits its budget is kept, marked ``timeout``, with the
    counts reached so far.
    """
    budget = budget or default_budget()
    analyses = list(analyses)
    rows = []
    for bp in programs:
        for spec in analyses:
            if (bp.lang == "fj") != (spec.name == "fj-kcfa"):
                continue
            start = time.perf_counter()
            rep = run_analysis(bp.program, spec, budget)
            elapsed = (time.perf_counter() - start) * 1000.0
            rows.append(MetricsRow(
                program=bp.name,
                terms=bp.terms,
                analysis=spec.name,
                k_or_m=spec.param,
                policy=spec.policy or "",
                transfers=rep.stats["transfers"],
                configs=rep.config_count,
                inlinable=rep.inlinable,
                time_ms=round(elapsed, 3),
                timeout=rep.partial,
                store_joins=rep.stats["store_joins"],
                env_counts=dict(rep.env_count_per_lambda),
                flows=dict(rep.labels),
            ))
    return rows


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        vals = asdict(r)
        vals["time_ms"] = "inf" if r.timeout else f"{r.time_ms:.3f}"
        w.writerow([vals[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: Sequence[MetricsRow], timing: bool = True) -> str:
    out = []
    for r in rows:
        d = {c: getattr(r, c) for c in CSV_COLUMNS}
        d["store_joins"] = r.store_joins
        if not timing:
            del d["time_ms"]
        out.append(d)
    return json.dumps(out, indent=2) + "\n"


def rows_to_text(rows: Sequence[MetricsRow]) -> str:
    lines = []
    for r in rows:
        t = "∞" if r.timeout else f"{r.time_ms:.1f}ms"
        name = f"{r.analysis}:{r.k_or_m}"
        lines.append(f"{r.program:<24} {r.terms:>5}  {name:<12} "
                     f"transfers={r.transfers:<8} configs={r.configs:<7} inlinable={r.inlinable:<4} {t}")
    return "\n".join(lines) + ("\n" if lines else "")
