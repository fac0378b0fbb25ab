"""k-CFA for A-Normal Featherweight Java.

Abstract times are the last ``k`` statement labels and an address pairs
an offset (variable, field or method) with a time.  Every binding made on
method entry and every field filled by a constructor share one time, so
an environment can be represented just by that time.  Both
representations are implemented and selected by ``collapsed``:

* map-based: ``MapEnv`` (var -> address) and records as field/address pairs;
* collapsed: ``CollapsedEnv(time, this)`` and ``CollapsedRecord(time)``.
  ``this`` is the one binding not allocated at the entry time, so it is
  kept as an explicit slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Iterator

from ..engine import ANSWER, Budget, Solution, StoreView, solve
from ..times import first_k
from . import concrete as C
from .concrete import HALT_KONT, HALT_OFFSET
from .syntax import Assign, Cast, ClassTable, FieldRef, FJVar, Invoke, MethodDecl, New, Return, VarRef

__all__ = [
    "AKont",
    "AObj",
    "CollapsedEnv",
    "CollapsedRecord",
    "MapEnv",
    "aalloc_fj",
    "aalloc_kappa",
    "abstract_config",
    "astep_fj",
    "atick_fj",
    "explore_widened_fj",
    "flat_record_violations",
    "method_contexts",
    "simulation_violations",
]


# ------------------------------------------------------------ representations


class MapEnv:
    """Variable -> abstract address, hashed once."""

    __slots__ = ("_map", "_items", "_hash")

    def __init__(self, mapping: dict):
        self._map = dict(mapping)
        self._items = tuple(sorted(self._map.items(), key=lambda kv: kv[0].uid))
        self._hash = hash(self._items)

    def addr(self, v: FJVar):
        return self._map[v]

    def items(self):
        return self._items

    def __eq__(self, other):
        return isinstance(other, MapEnv) and self._hash == other._hash and self._items == other._items

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "MapEnv(" + ", ".join(f"{v}->{a[0]}@{a[1]}" for v, a in self._items) + ")"


@dataclass(frozen=True)
class CollapsedEnv:
    """Stands for the environment mapping every bound name ``x`` to ``(x, time)``.

    ``time`` is ``None`` when nothing is bound besides ``this``.
    """

    time: tuple | None
    this: Any = None

    def addr(self, v: FJVar):
        if v.name == "this":
            return self.this
        return (v, self.time)


@dataclass(frozen=True)
class CollapsedRecord:
    time: tuple | None


@dataclass(frozen=True)
class AObj:
    cls: str
    record: Any  # tuple of (Field, addr) or CollapsedRecord

    def field_addr(self, table: ClassTable, name: str):
        if isinstance(self.record, CollapsedRecord):
            f = table.find_field(self.cls, name)
            return None if f is None else (f, self.record.time)
        for f, a in self.record:
            if f.name == name:
                return a
        return None

    def record_time(self):
        if isinstance(self.record, CollapsedRecord):
            return self.record.time
        return self.record[0][1][1] if self.record else None


@dataclass(frozen=True)
class AKont:
    ret: FJVar
    next: Any
    env: Any
    parent: Any
    caller_time: tuple | None = None


def atick_fj(label: int, t: tuple, k: int) -> tuple:
    return ((label,) + tuple(t))[:k]


def aalloc_fj(off, t: tuple) -> tuple:
    return (off, t)


def aalloc_kappa(m: MethodDecl, t: tuple) -> tuple:
    return (m, t)


def env_time(env) -> tuple | None:
    """The single allocation time shared by the non-``this`` bindings."""
    if isinstance(env, CollapsedEnv):
        return env.time
    for v, a in env.items():
        if v.name != "this":
            return a[1]
    return None


def env_this(env):
    if isinstance(env, CollapsedEnv):
        return env.this
    for v, a in env.items():
        if v.name == "this":
            return a
    return None


class _Rep:
    def __init__(self, collapsed: bool):
        self.collapsed = collapsed

    def method_env(self, m: MethodDecl, this_addr, t: tuple):
        if self.collapsed:
            return CollapsedEnv(t if m.bound else None, this_addr)
        env = {v: (v, t) for v in m.bound}
        if m.this is not None:
            env[m.this] = this_addr
        return MapEnv(env)

    def record(self, fields: tuple, t: tuple):
        if self.collapsed:
            return CollapsedRecord(t if fields else None)
        return tuple((f, (f, t)) for f in fields)


def initial_config(table: ClassTable, collapsed: bool) -> tuple:
    env = _Rep(collapsed).method_env(table.main, None, ())
    return (table.main.body[0], env, (HALT_OFFSET, ()), ())


def initial_store() -> dict:
    return {(HALT_OFFSET, ()): frozenset((HALT_KONT,))}


# ------------------------------------------------------------ transitions


def transitions(table: ClassTable, config: tuple, get, k: int, collapsed: bool = False,
                call_site_only: bool = False, strict_cast: bool = False) -> Iterator[tuple]:
    """Yield ``(config', writes)``; ``config'`` is ``None`` for writes-only results."""
    stmt, env, ka, t = config
    rep = _Rep(collapsed)

    def tick(invoke: bool) -> tuple:
        if call_site_only and not invoke:
            return t
        return atick_fj(stmt.label, t, k)

    if isinstance(stmt, Return):
        t2 = tick(False)
        d = get(env.addr(stmt.var))
        for kont in get(ka):
            if kont is HALT_KONT:
                yield None, ((ANSWER, d),)
            else:
                t3 = kont.caller_time if call_site_only else t2
                yield (kont.next, kont.env, kont.parent, t3), ((kont.env.addr(kont.ret), d),)
        return

    assert isinstance(stmt, Assign)
    e = stmt.expr
    nxt = table.succ(stmt.label)
    target = env.addr(stmt.target)
    if isinstance(e, Invoke):
        t2 = tick(True)
        this_addr = env.addr(e.receiver)
        args = [get(env.addr(a)) for a in e.args]
        kont = AKont(stmt.target, nxt, env, ka, t if call_site_only else None)
        for m in sorted(table.amethod_lookup(get(this_addr), e.method), key=lambda m: m.uid):
            if len(m.params) != len(args):
                continue
            ka2 = aalloc_kappa(m, t2)
            writes = [(ka2, frozenset((kont,)))]
            writes += [(aalloc_fj(v, t2), d) for (_, v), d in zip(m.params, args)]
            yield (m.body[0], rep.method_env(m, this_addr, t2), ka2, t2), writes
        return

    t2 = tick(False)
    succ = (nxt, env, ka, t2)
    if isinstance(e, VarRef):
        yield succ, ((target, get(env.addr(e.var))),)
    elif isinstance(e, Cast):
        d = get(env.addr(e.var))
        if strict_cast:
            d = frozenset(o for o in d if isinstance(o, AObj) and table.is_subclass(o.cls, e.cls))
        yield succ, ((target, d),)
    elif isinstance(e, FieldRef):
        for o in get(env.addr(e.var)):
            fa = o.field_addr(table, e.name) if isinstance(o, AObj) else None
            if fa is not None:
                yield succ, ((target, get(fa)),)
    elif isinstance(e, New):
        fields, ructor = table.constructor_lookup(e.cls)
        addrs = [aalloc_fj(f, t2) for f in fields]
        delta, _ = ructor(addrs, [get(env.addr(a)) for a in e.args])
        obj = AObj(e.cls, rep.record(fields, t2))
        yield succ, (*delta.items(), (target, frozenset((obj,))))


def astep_fj(table: ClassTable, state: tuple, k: int, collapsed: bool = False,
             call_site_only: bool = False, strict_cast: bool = False) -> list:
    """Successors of a full abstract state ``(stmt, env, store, kont_addr, time)``.

    The store is a dict of frozensets; each successor carries its own
    joined copy.
    """
    stmt, env, store, ka, t = state
    empty = frozenset()
    get = lambda a: store.get(a, empty)  # noqa: E731
    out = []
    for cfg, writes in transitions(table, (stmt, env, ka, t), get, k, collapsed, call_site_only, strict_cast):
        if cfg is None:
            continue
        s2 = dict(store)
        for a, vals in writes:
            s2[a] = s2.get(a, empty) | vals
        out.append((cfg[0], cfg[1], s2, cfg[2], cfg[3]))
    return out


def explore_widened_fj(
    table: ClassTable,
    k: int,
    collapsed: bool = False,
    *,
    call_site_only: bool = False,
    strict_cast: bool = False,
    budget: Budget | None = None,
    order: str = "fifo",
    seed: int = 0,
    observer=None,
) -> Solution:
    """Least fixpoint over configurations ``(stmt, env, kont_addr, time)`` and one store."""

    def step(config, view: StoreView):
        out = []
        for cfg, writes in transitions(table, config, view.get, k, collapsed, call_site_only, strict_cast):
            for a, vals in writes:
                view.join(a, vals)
            if cfg is not None:
                out.append(cfg)
        return out

    return solve([initial_config(table, collapsed)], step, initial_store(),
                 budget=budget, order=order, seed=seed, observer=observer)


# ------------------------------------------------------------ queries


def method_contexts(table: ClassTable, result: Solution) -> dict:
    """Method -> set of ``(time, this)`` contexts its body was analyzed in."""
    out: dict = {m: set() for m in table.all_methods()}
    for stmt, env, _, _ in result.configs:
        out[table.method_of[stmt.label]].add((env_time(env), env_this(env)))
    return out


def flat_record_violations(result: Solution) -> list[str]:
    """Objects whose fields, or method environments whose bindings, span several times."""
    bad = []
    for vals in result.store.values():
        for o in vals:
            if isinstance(o, AObj) and not isinstance(o.record, CollapsedRecord):
                times = {a[1] for _, a in o.record}
                if len(times) > 1:
                    bad.append(f"record of {o.cls} spans times {sorted(times)}")
    for _, env, _, _ in result.configs:
        if isinstance(env, MapEnv):
            times = {a[1] for v, a in env.items() if v.name != "this"}
            if len(times) > 1:
                bad.append(f"environment {env!r} spans several times")
    return bad


# ------------------------------------------------------------ abstraction


def _alpha_time(t, k: int, call_site_only: bool) -> tuple:
    return first_k(C.clock_for(call_site_only).context(t), k)


def _alpha_addr(a, k, cso):
    return (a[0], _alpha_time(a[1], k, cso))


def _alpha_env(env, k, cso) -> MapEnv:
    return MapEnv({v: _alpha_addr(a, k, cso) for v, a in env.items()})


def _alpha_value(d, k, cso):
    if isinstance(d, C.Obj):
        return AObj(d.cls, tuple((f, _alpha_addr(a, k, cso)) for f, a in d.record))
    if isinstance(d, C.Kont):
        ct = None if d.caller_time is None else _alpha_time(d.caller_time, k, cso)
        return AKont(d.ret, d.next, _alpha_env(d.env, k, cso), _alpha_addr(d.parent, k, cso), ct)
    return d


def abstract_config(s: C.FJState, k: int, call_site_only: bool = False) -> tuple:
    cso = call_site_only
    return (s.stmt, _alpha_env(s.env, k, cso), _alpha_addr(s.kont, k, cso), _alpha_time(s.time, k, cso))


def simulation_violations(trace: C.FJTrace, result: Solution, k: int, call_site_only: bool = False) -> list[str]:
    """Check a concrete trace against a map-based widened result.

    Each transition records the addresses it wrote; checking those writes
    at every state covers the whole store history.
    """
    cso = call_site_only
    configs = set(result.configs)
    bad = []
    for i, s in enumerate(trace.states):
        if abstract_config(s, k, cso) not in configs:
            bad.append(f"state {i}: config at statement {s.stmt.label} missing")
        for a in s.written:
            aa = _alpha_addr(a, k, cso)
            v = _alpha_value(s.store[a], k, cso)
            if v not in result.get(aa):
                bad.append(f"state {i}: {aa[0]}@{aa[1]} lacks {v!r}")
    if trace.result is not None:
        v = _alpha_value(trace.result.value, k, cso)
        if v not in result.get(ANSWER):
            bad.append(f"answer {v!r} missing")
    return bad


def iter_objects(values: Iterable) -> Iterator[AObj]:
    return (v for v in values if isinstance(v, AObj))
