"""Flow reports: a stable, serializable summary of an analysis result.

Everything an analysis computed is rendered to strings in sorted order so
two runs with the same input produce the same bytes.  Closures render as
``λ<label>`` (environments are summarized separately, per lambda), integer
constants as their decimal text, halt as ``halt``, objects as
``Class@<time>``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any

from . import kcfa, mcfa
from .cps import HALT, Call, CpsProgram, If, Lam, Var
from .cps_concrete import CallStringClock, Clo, Halted, step as cstep, inject as cinject
from .engine import ANSWER, Solution
from .fj import kcfa as fjk
from .fj.concrete import HALT_KONT, HALT_OFFSET
from .fj.syntax import ClassTable, Field, FJVar, Invoke, MethodDecl

__all__ = [
    "FlowReport",
    "concrete_call_targets",
    "count_envs_for_lambda",
    "cps_report",
    "fj_report",
    "inlinable_calls",
    "render_ctx",
]


@dataclass(frozen=True)
class FlowReport:
    analysis: str
    param: int
    policy: str | None
    labels: dict
    addresses: dict
    answer: list
    config_count: int
    env_count_per_lambda: dict
    inlinable: int
    partial: bool = False
    options: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    points_to: dict | None = None
    contexts_per_method: dict | None = None
    envs: dict = field(default_factory=dict, repr=False)  # lambda/method -> env keys

    def flow(self) -> dict:
        """The precision-relevant content, independent of representation and cost."""
        out = {
            "labels": self.labels,
            "addresses": self.addresses,
            "answer": self.answer,
            "config_count": self.config_count,
            "env_count_per_lambda": self.env_count_per_lambda,
            "inlinable": self.inlinable,
        }
        if self.points_to is not None:
            out["points_to"] = self.points_to
            out["contexts_per_method"] = self.contexts_per_method
        return out

    def to_dict(self, stats: bool = True) -> dict:
        key = "m" if self.analysis in ("mcfa", "polykcfa") else "k"
        out = {"analysis": self.analysis, key: self.param}
        if self.policy is not None:
            out["policy"] = self.policy
        if self.options:
            out["options"] = self.options
        out["partial"] = self.partial
        out.update(self.flow())
        if stats:
            out["stats"] = self.stats
        return out

    def to_json(self, stats: bool = True) -> str:
        return json.dumps(self.to_dict(stats), indent=2, ensure_ascii=False) + "\n"

    def flow_json(self) -> str:
        return json.dumps(self.flow(), indent=2, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "key", "values"])
        for lab, info in self.labels.items():
            for kind, vals in info.items():
                w.writerow([kind, lab, " ".join(vals)])
        for a, vals in self.addresses.items():
            w.writerow(["address", a, " ".join(vals)])
        w.writerow(["answer", "", " ".join(self.answer)])
        return buf.getvalue()

    def to_text(self) -> str:
        key = "m" if self.analysis in ("mcfa", "polykcfa") else "k"
        head = f"{self.analysis} {key}={self.param}"
        if self.policy:
            head += f" policy={self.policy}"
        if self.partial:
            head += " (partial)"
        lines = [head, f"answer: {{{', '.join(self.answer)}}}",
                 f"configs: {self.config_count}  inlinable: {self.inlinable}"]
        for lab, info in self.labels.items():
            for kind, vals in info.items():
                lines.append(f"  {lab}: {kind} {{{', '.join(vals)}}}")
        for name, n in self.env_count_per_lambda.items():
            lines.append(f"  envs {name}: {n}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------ rendering


def _ctx(t) -> str:
    if t is None:
        return "-"
    return "<" + ",".join(map(str, t)) + ">"


def _value_key(s: str):
    kind = 0 if s == "halt" else 1 if s.startswith("λ") else 2 if s.lstrip("-").isdigit() else 3
    num = s[1:] if kind == 1 else s
    try:
        return (kind, int(num), s)
    except ValueError:
        return (kind, 0, s)


def _sorted(vals) -> list:
    return sorted(set(vals), key=_value_key)


def _cps_value(d) -> str:
    if d is HALT:
        return "halt"
    if isinstance(d, (kcfa.AClo, mcfa.MClo)):
        return f"λ{d.lam.label}"
    return str(d)


def _addr_sort(a):
    return (a[0].uid, a[1] if isinstance(a[1], tuple) else ())


# ------------------------------------------------------------ CPS


def cps_report(program: CpsProgram, result: Solution, analysis: str, param: int,
               policy: str | None = None) -> FlowReport:
    """Report for ``kcfa`` (k-CFA) or ``mcfa`` / ``polykcfa`` (flat environments)."""
    flat = analysis in ("mcfa", "polykcfa")
    if flat:
        addr_of = lambda v, cfg: (v, cfg[1])  # noqa: E731
        created = mcfa.closures_created(result.configs)
        env_key = _ctx
    else:
        addr_of = lambda v, cfg: cfg[1][v]  # noqa: E731
        created = kcfa.closures_created(result.configs)
        env_key = repr

    def flow_of(e, cfg):
        if isinstance(e, Var):
            return result.get(addr_of(e, cfg))
        return {e}

    ops: dict = {lab: set() for lab in program.calls}
    for cfg in result.configs:
        call = cfg[0]
        e = call.test if isinstance(call, If) else call.fn
        for d in flow_of(e, cfg):
            ops[call.label].add(f"λ{d.label}" if isinstance(d, Lam) else _cps_value(d))

    envs: dict = {lab: set() for lab in program.lambdas}
    for clo in created:
        envs[clo.lam.label].add(env_key(clo.env))
    for vals in result.store.values():
        for d in vals:
            if isinstance(d, (kcfa.AClo, mcfa.MClo)):
                envs[d.lam.label].add(env_key(d.env))

    addresses = {}
    for a in sorted((a for a in result.store if a is not ANSWER), key=_addr_sort):
        addresses[f"{a[0]}@{_ctx(a[1])}"] = _sorted(_cps_value(d) for d in result.store[a])

    labels = {}
    inlinable = 0
    for c in (program.calls[lab] for lab in sorted(program.calls)):
        kind = "test_flow" if isinstance(c, If) else "operator_flow"
        vals = _sorted(ops[c.label])
        labels[str(c.label)] = {kind: vals}
        if kind == "operator_flow" and len(vals) == 1 and vals[0].startswith("λ"):
            inlinable += 1

    return FlowReport(
        analysis=analysis,
        param=param,
        policy=policy,
        labels=labels,
        addresses=addresses,
        answer=_sorted(_cps_value(d) for d in result.get(ANSWER)),
        config_count=len(result.configs),
        env_count_per_lambda={f"λ{lab}": len(envs[lab]) for lab in sorted(envs)},
        inlinable=inlinable,
        partial=result.partial,
        stats={"transfers": result.transfers, "store_joins": result.store_joins},
        envs={lab: frozenset(v) for lab, v in envs.items()},
    )


# ------------------------------------------------------------ FJ


def _offset(o) -> str:
    if o is HALT_OFFSET:
        return "halt"
    if isinstance(o, MethodDecl):
        return o.qualname
    return str(o)


def _fj_addr(a) -> str:
    return "-" if a is None else f"{_offset(a[0])}@{_ctx(a[1])}"


def render_ctx(env) -> str:
    """``t=<time>;this=<addr>``, identical for both environment representations."""
    return f"t={_ctx(fjk.env_time(env))};this={_fj_addr(fjk.env_this(env))}"


def _fj_value(d) -> str:
    if d is HALT_KONT:
        return "halt"
    if isinstance(d, fjk.AObj):
        t = d.record_time()
        return d.cls if t is None else f"{d.cls}@{_ctx(t)}"
    if isinstance(d, fjk.AKont):
        s = f"κ{d.next.label}[{render_ctx(d.env)}]^{_fj_addr(d.parent)}"
        if d.caller_time is not None:
            s += f"/{_ctx(d.caller_time)}"
        return s
    return repr(d)


def _offset_key(o):
    if o is HALT_OFFSET:
        return (0, 0)
    if isinstance(o, MethodDecl):
        return (1, o.uid)
    if isinstance(o, Field):
        return (2, o.uid)
    return (3, o.uid)


def fj_report(table: ClassTable, result: Solution, k: int, *, collapsed: bool = False,
              call_site_only: bool = False, strict_cast: bool = False) -> FlowReport:
    targets: dict = {}
    for s in table.stmts.values():
        if hasattr(s, "expr") and isinstance(s.expr, Invoke):
            targets[s.label] = set()
    points_to: dict = {}
    contexts: dict = {m.qualname: set() for m in table.all_methods()}
    for stmt, env, _, _ in result.configs:
        m = table.method_of[stmt.label]
        ctx = render_ctx(env)
        contexts[m.qualname].add(ctx)
        if stmt.label in targets:
            recv = result.get(env.addr(stmt.expr.receiver))
            for mm in table.amethod_lookup(recv, stmt.expr.method):
                targets[stmt.label].add(mm.qualname)
        slot = points_to.setdefault(f"{m.qualname}|{ctx}", {})
        vars_ = ([m.this] if m.this is not None else []) + list(m.bound)
        for v in vars_:
            objs = [_fj_value(o) for o in fjk.iter_objects(result.get(env.addr(v)))]
            slot[str(v)] = _sorted(objs)

    addresses = {}
    for a in sorted((a for a in result.store if a is not ANSWER), key=lambda a: (_offset_key(a[0]), a[1])):
        addresses[_fj_addr(a)] = _sorted(_fj_value(d) for d in result.store[a])

    labels = {}
    inlinable = 0
    for lab in sorted(targets):
        vals = sorted(targets[lab])
        labels[str(lab)] = {"call_targets": vals}
        inlinable += len(vals) == 1

    options = {"collapsed": collapsed, "call_site_only_tick": call_site_only, "strict_cast": strict_cast}
    return FlowReport(
        analysis="fj-kcfa",
        param=k,
        policy=None,
        labels=labels,
        addresses=addresses,
        answer=_sorted(_fj_value(d) for d in result.get(ANSWER)),
        config_count=len(result.configs),
        env_count_per_lambda={q: len(c) for q, c in sorted(contexts.items())},
        inlinable=inlinable,
        partial=result.partial,
        options=options,
        stats={"transfers": result.transfers, "store_joins": result.store_joins},
        points_to={c: points_to[c] for c in sorted(points_to)},
        contexts_per_method={q: len(c) for q, c in sorted(contexts.items())},
        envs={q: frozenset(c) for q, c in contexts.items()},
    )


# ------------------------------------------------------------ metrics


def count_envs_for_lambda(report: FlowReport, lam: Any) -> int:
    """Distinct environments paired with a lambda label (or FJ method name)."""
    key = lam.label if isinstance(lam, Lam) else lam
    if key not in report.envs:
        raise KeyError(f"unknown lambda {lam!r}")
    return len(report.envs[key])


def inlinable_calls(report: FlowReport) -> int:
    """Call sites whose operator flow is a single lambda (or method)."""
    return report.inlinable


def concrete_call_targets(program: CpsProgram, max_steps: int = 10**5) -> dict:
    """Lambdas each call site actually invokes on one concrete run.

    Only call sites whose operator evaluates to a closure or halt are
    recorded; ``if`` sites are skipped.  The run uses call-string time.
    """
    out: dict = {c.label: set() for c in program.calls.values() if isinstance(c, Call)}
    s = cinject(program, CallStringClock)
    for _ in range(max_steps):
        call = s.call
        if isinstance(call, Call):
            f = s.store[s.env[call.fn]] if isinstance(call.fn, Var) else Clo(call.fn, s.env)
            out[call.label].add("halt" if f is HALT else f"λ{f.lam.label}")
        s = cstep(s, CallStringClock)
        if isinstance(s, Halted):
            break
    return out
