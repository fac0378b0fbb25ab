"""Concrete small-step machine for A-Normal Featherweight Java.

States are ``(stmt, env, store, kont_addr, time)``.  Continuations are
store values, so a method call allocates its return point at
``(method, time)``.  Two clocks are available:

* per-statement (default): ``tick(l, t) = l : t`` on every transition;
* call-site-only: the context changes only on method invocation and a
  return restores the caller's context.  A serial number keeps concrete
  times fresh, so the continuation carries the caller's context.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from pyrsistent import PMap, pmap

from .._gc import gc_paused
from ..times import EMPTY, CallString, Stamp
from .syntax import Assign, Cast, ClassTable, FieldRef, Invoke, MethodDecl, New, Return, VarRef

__all__ = [
    "FJHalted",
    "FJRuntimeError",
    "FJState",
    "FJTrace",
    "HALT_KONT",
    "HALT_OFFSET",
    "Kont",
    "Obj",
    "format_fj_trace",
    "inject_fj",
    "run_fj",
    "step_fj",
]


class FJRuntimeError(RuntimeError):
    pass


class _HaltOffset:
    def __repr__(self):
        return "halt"

    def __hash__(self):
        return 0x4A17


class _HaltKont:
    def __repr__(self):
        return "HALT"

    def __hash__(self):
        return 0x4A18


HALT_OFFSET = _HaltOffset()
HALT_KONT = _HaltKont()


@dataclass(frozen=True)
class Obj:
    cls: str
    record: tuple  # ((Field, addr), ...)

    def field_addr(self, name: str):
        for f, a in self.record:
            if f.name == name:
                return a
        return None


@dataclass(frozen=True)
class Kont:
    ret: Any  # FJVar receiving the result
    next: Any  # statement to resume at
    env: PMap
    parent: Any  # caller's continuation address
    caller_time: Any = None  # only used by call-site-only ticking


@dataclass(frozen=True)
class FJState:
    stmt: Any
    env: PMap
    store: PMap
    kont: Any
    time: Any
    written: tuple = ()  # addresses this transition wrote


@dataclass(frozen=True)
class FJHalted:
    value: Any
    store: PMap
    time: Any


class PerStatement:
    name = "per-statement"
    initial = EMPTY

    @staticmethod
    def tick(label: int, t: CallString, invoke: bool) -> CallString:
        return t.push(label)

    @staticmethod
    def context(t) -> CallString:
        return t


class CallSiteOnly:
    name = "call-site-only"
    initial = Stamp(0, EMPTY)

    @staticmethod
    def tick(label: int, t: Stamp, invoke: bool) -> Stamp:
        return Stamp(t.serial + 1, t.context.push(label) if invoke else t.context)

    @staticmethod
    def context(t: Stamp) -> CallString:
        return t.context


def clock_for(call_site_only: bool):
    return CallSiteOnly if call_site_only else PerStatement


def inject_fj(table: ClassTable, call_site_only: bool = False) -> FJState:
    clock = clock_for(call_site_only)
    t0 = clock.initial
    env = pmap({v: (v, t0) for v in table.main.bound})
    ka = (HALT_OFFSET, t0)
    return FJState(table.main.body[0], env, pmap({ka: HALT_KONT}), ka, t0, (ka,))


def _get(store: PMap, a, what):
    try:
        return store[a]
    except KeyError:
        raise FJRuntimeError(f"unbound {what} at {a[0]}") from None


def _addr(env: PMap, v):
    try:
        return env[v]
    except KeyError:
        raise FJRuntimeError(f"variable {v} not in scope") from None


def step_fj(table: ClassTable, s: FJState, call_site_only: bool = False) -> "FJState | FJHalted":
    clock = clock_for(call_site_only)
    stmt, env, store = s.stmt, s.env, s.store

    def read(v):
        return _get(store, _addr(env, v), f"variable {v}")

    if isinstance(stmt, Return):
        t2 = clock.tick(stmt.label, s.time, False)
        d = read(stmt.var)
        k = _get(store, s.kont, "continuation")
        if k is HALT_KONT:
            return FJHalted(d, store, t2)
        if call_site_only:
            t2 = Stamp(t2.serial, k.caller_time.context)
        a = k.env[k.ret]
        return FJState(k.next, k.env, store.set(a, d), k.parent, t2, (a,))

    assert isinstance(stmt, Assign)
    e = stmt.expr
    nxt = table.succ(stmt.label)
    target = _addr(env, stmt.target)
    if isinstance(e, Invoke):
        t2 = clock.tick(stmt.label, s.time, True)
        d0 = read(e.receiver)
        try:
            m: MethodDecl = table.method_lookup(d0, e.method)
        except LookupError as err:
            raise FJRuntimeError(f"statement {stmt.label}: {err}") from None
        if len(m.params) != len(e.args):
            raise FJRuntimeError(f"statement {stmt.label}: {m.qualname} expects {len(m.params)} arguments")
        args = [read(a) for a in e.args]
        kont = Kont(stmt.target, nxt, env, s.kont, s.time if call_site_only else None)
        ka = (m, t2)
        new_env = {m.this: _addr(env, e.receiver)}
        for v in m.bound:
            new_env[v] = (v, t2)
        ev = store.evolver()
        ev[ka] = kont
        written = [ka]
        for (_, v), d in zip(m.params, args):
            ev[(v, t2)] = d
            written.append((v, t2))
        return FJState(m.body[0], pmap(new_env), ev.persistent(), ka, t2, tuple(written))

    t2 = clock.tick(stmt.label, s.time, False)
    if isinstance(e, (VarRef, Cast)):
        d = read(e.var)  # casts copy without checking
        return FJState(nxt, env, store.set(target, d), s.kont, t2, (target,))
    if isinstance(e, FieldRef):
        obj = read(e.var)
        fa = obj.field_addr(e.name) if isinstance(obj, Obj) else None
        if fa is None:
            raise FJRuntimeError(f"statement {stmt.label}: no field {e.name} on {obj!r}")
        return FJState(nxt, env, store.set(target, _get(store, fa, "field")), s.kont, t2, (target,))
    if isinstance(e, New):
        fields, ructor = table.constructor_lookup(e.cls)
        addrs = [(f, t2) for f in fields]
        delta, record = ructor(addrs, [read(a) for a in e.args])
        ev = store.evolver()
        for a, d in delta.items():
            ev[a] = d
        ev[target] = Obj(e.cls, record)
        return FJState(nxt, env, ev.persistent(), s.kont, t2, (*delta, target))
    raise FJRuntimeError(f"unknown statement form {stmt!r}")


@dataclass
class FJTrace:
    states: list = field(default_factory=list)
    result: FJHalted | None = None

    @property
    def halted(self) -> bool:
        return self.result is not None


@gc_paused()
def run_fj(table: ClassTable, max_steps: int, call_site_only: bool = False) -> FJTrace:
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    s = inject_fj(table, call_site_only)
    trace = FJTrace([s])
    for _ in range(max_steps):
        nxt = step_fj(table, s, call_site_only)
        if isinstance(nxt, FJHalted):
            trace.result = nxt
            break
        trace.states.append(nxt)
        s = nxt
    return trace


def kont_depth(s: FJState) -> int:
    """Length of the continuation chain from ``s`` down to halt."""
    n, a = 0, s.kont
    while True:
        k = s.store[a]
        if k is HALT_KONT:
            return n
        n += 1
        a = k.parent


def _describe(d) -> str:
    if isinstance(d, Obj):
        return d.cls
    return repr(d)


def _tlen(t) -> int:
    return t.context.depth if isinstance(t, Stamp) else t.depth


def format_fj_trace(trace: FJTrace) -> str:
    """One line per state: label, classes of the values in scope, time length."""
    lines = []
    for s in trace.states:
        vals = []
        for v, a in sorted(s.env.items(), key=lambda kv: kv[0].uid):
            if a in s.store:
                vals.append(f"{v.name}:{_describe(s.store[a])}")
        lines.append(f"{s.stmt.label}\t{{{','.join(vals)}}}\t{_tlen(s.time)}")
    if trace.result is not None:
        lines.append(f"halt\t{_describe(trace.result.value)}\t{_tlen(trace.result.time)}")
    else:
        lines.append("budget-exhausted")
    return "\n".join(lines) + "\n"
