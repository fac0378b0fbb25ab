"""Concrete small-step machine for CPS with shared (linked) environments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Union

from pyrsistent import PMap, pmap

from ._gc import gc_paused
from .cps import HALT, Call, CpsProgram, If, Lam, Var
from .times import EMPTY, CallString

__all__ = [
    "CallStringClock",
    "Clo",
    "CpsRuntimeError",
    "Halted",
    "NatClock",
    "State",
    "Trace",
    "alloc",
    "eval_atom",
    "format_trace",
    "inject",
    "run_concrete",
    "step",
    "tick",
]


class CpsRuntimeError(RuntimeError):
    pass


class NatClock:
    """Time is a natural number: ``tick(_, t) = t + 1``."""

    name = "nat"
    initial = 0

    @staticmethod
    def tick(call, t: int) -> int:
        return t + 1


class CallStringClock:
    """Time is the history of call sites: ``tick(call, t) = call : t``."""

    name = "callstring"
    initial = EMPTY

    @staticmethod
    def tick(call, t: CallString) -> CallString:
        return t.push(call.label)


def tick(call, t: int) -> int:
    return NatClock.tick(call, t)


def alloc(v: Var, t) -> tuple:
    return (v, t)


@dataclass(frozen=True)
class Clo:
    lam: Lam
    env: PMap

    def __repr__(self):
        return f"Clo(λ{self.lam.label})"


@dataclass(frozen=True)
class State:
    call: Any
    env: PMap
    store: PMap
    time: Any


@dataclass(frozen=True)
class Halted:
    value: Any
    store: PMap
    time: Any


Value = Union[Clo, int, type(HALT)]


def inject(program: CpsProgram, clock=NatClock) -> State:
    t0 = clock.initial
    a = alloc(program.halt, t0)
    return State(program.root, pmap({program.halt: a}), pmap({a: HALT}), t0)


def eval_atom(e, env: PMap, store: PMap):
    if isinstance(e, Var):
        try:
            return store[env[e]]
        except KeyError:
            raise CpsRuntimeError(f"unbound variable {e}") from None
    if isinstance(e, Lam):
        return Clo(e, env)
    if isinstance(e, int):
        return e
    raise CpsRuntimeError(f"not an atom: {e!r}")


def step(s: State, clock=NatClock) -> "State | Halted":
    call = s.call
    t2 = clock.tick(call, s.time)
    if isinstance(call, If):
        test = eval_atom(call.test, s.env, s.store)
        nxt = call.orelse if test == 0 and isinstance(test, int) else call.then
        return State(nxt, s.env, s.store, t2)
    f = eval_atom(call.fn, s.env, s.store)
    args = [eval_atom(e, s.env, s.store) for e in call.args]
    if f is HALT:
        if len(args) != 1:
            raise CpsRuntimeError(f"halt expects one value, given {len(args)}")
        return Halted(args[0], s.store, t2)
    if not isinstance(f, Clo):
        raise CpsRuntimeError(f"call site {call.label}: operator evaluated to non-closure {f!r}")
    lam = f.lam
    if len(lam.params) != len(args):
        raise CpsRuntimeError(
            f"call site {call.label}: λ{lam.label} expects {len(lam.params)} arguments, given {len(args)}"
        )
    env = f.env.evolver()
    store = s.store.evolver()
    for v, d in zip(lam.params, args):
        a = alloc(v, t2)
        env[v] = a
        store[a] = d
    return State(lam.body, env.persistent(), store.persistent(), t2)


@dataclass
class Trace:
    states: list[State] = field(default_factory=list)
    result: Halted | None = None

    @property
    def halted(self) -> bool:
        return self.result is not None

    @property
    def exhausted(self) -> bool:
        return self.result is None


@gc_paused()
def run_concrete(program: CpsProgram, max_steps: int, clock=NatClock) -> Trace:
    """Run from injection for at most ``max_steps`` transitions."""
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    s = inject(program, clock)
    trace = Trace([s])
    for _ in range(max_steps):
        nxt = step(s, clock)
        if isinstance(nxt, Halted):
            trace.result = nxt
            break
        trace.states.append(nxt)
        s = nxt
    return trace


def _time_text(t) -> str:
    return str(t.depth) if isinstance(t, CallString) else str(t)


def format_trace(trace: Trace) -> str:
    """One line per state: call label, bound variables, time."""
    lines = []
    for s in trace.states:
        names = ",".join(sorted(str(v) for v in s.env))
        lines.append(f"{s.call.label}\t{{{names}}}\t{_time_text(s.time)}")
    if trace.result is not None:
        lines.append(f"halt\t{trace.result.value!r}\t{_time_text(trace.result.time)}")
    else:
        lines.append("budget-exhausted")
    return "\n".join(lines) + "\n"
