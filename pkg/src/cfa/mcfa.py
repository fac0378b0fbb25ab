"""Flat-closure CPS semantics and m-CFA.

A flat environment is a base address; entering a lambda allocates a fresh
base and copies every free variable of the lambda into it, so a closure
is ``(lam, env)`` with no per-variable binding map.

Abstract environments are call-site tuples of length at most ``m``.  Two
allocation policies are provided:

* ``TOP_M_FRAMES`` (m-CFA): procedures push the call site; continuations
  restore the environment they closed over.
* ``LAST_K_CALLS`` (naive polynomial k-CFA): always push the call site.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from pyrsistent import PMap, pmap

from ._gc import gc_paused
from .cps import HALT, CpsProgram, If, Lam, Var
from .engine import ANSWER, Budget, Solution, StoreView, solve
from .times import EMPTY, CallString, Stamp

__all__ = [
    "FlatClo",
    "FlatHalted",
    "FlatRuntimeError",
    "FlatState",
    "FlatTrace",
    "MClo",
    "Policy",
    "abstract_flat_env",
    "closures_created",
    "explore_widened_mcfa",
    "flat_contract_violations",
    "initial_config",
    "new_abstract",
    "new_concrete",
    "run_flat",
    "simulation_violations",
    "step_flat",
]


class Policy(enum.Enum):
    TOP_M_FRAMES = "top-m-frames"
    LAST_K_CALLS = "last-k-calls"


class FlatRuntimeError(RuntimeError):
    pass


# ------------------------------------------------------------ concrete


def new_concrete(call, rho: Stamp, lam: Lam, rho2: Stamp, serial: int, policy=Policy.TOP_M_FRAMES) -> Stamp:
    """Fresh base environment.  ``serial`` is the next unused serial number.

    The frame list is ``call : frames(rho)`` for procedures, and the
    closure's own frames for continuations (under ``TOP_M_FRAMES``).
    """
    if policy is Policy.TOP_M_FRAMES and lam.is_continuation:
        return Stamp(serial, rho2.context)
    return Stamp(serial, rho.context.push(call.label))


@dataclass(frozen=True)
class FlatClo:
    lam: Lam
    env: Stamp

    def __repr__(self):
        return f"FlatClo(λ{self.lam.label}, {self.env.serial})"


@dataclass(frozen=True)
class FlatState:
    call: Any
    env: Stamp
    store: PMap
    serial: int  # last serial handed out


@dataclass(frozen=True)
class FlatHalted:
    value: Any
    store: PMap


def _ceval(e, rho: Stamp, store: PMap):
    if isinstance(e, Var):
        try:
            return store[(e, rho)]
        except KeyError:
            raise FlatRuntimeError(f"unbound address ({e}, {rho.serial})") from None
    if isinstance(e, Lam):
        return FlatClo(e, rho)
    return e


def inject_flat(program: CpsProgram) -> FlatState:
    rho0 = Stamp(0, EMPTY)
    return FlatState(program.root, rho0, pmap({(program.halt, rho0): HALT}), 0)


def step_flat(s: FlatState, policy=Policy.TOP_M_FRAMES) -> "FlatState | FlatHalted":
    call = s.call
    if isinstance(call, If):
        test = _ceval(call.test, s.env, s.store)
        nxt = call.orelse if isinstance(test, int) and test == 0 else call.then
        return FlatState(nxt, s.env, s.store, s.serial)
    f = _ceval(call.fn, s.env, s.store)
    args = [_ceval(e, s.env, s.store) for e in call.args]
    if f is HALT:
        if len(args) != 1:
            raise FlatRuntimeError(f"halt expects one value, given {len(args)}")
        return FlatHalted(args[0], s.store)
    if not isinstance(f, FlatClo):
        raise FlatRuntimeError(f"call site {call.label}: operator evaluated to non-closure {f!r}")
    lam = f.lam
    if len(lam.params) != len(args):
        raise FlatRuntimeError(f"call site {call.label}: arity mismatch for λ{lam.label}")
    rho2 = new_concrete(call, s.env, lam, f.env, s.serial + 1, policy)
    ev = s.store.evolver()
    for v, d in zip(lam.params, args):
        ev[(v, rho2)] = d
    for x in lam.free:
        try:
            ev[(x, rho2)] = s.store[(x, f.env)]
        except KeyError:
            raise FlatRuntimeError(f"flat contract violated: ({x}, {f.env.serial}) unbound") from None
    return FlatState(lam.body, rho2, ev.persistent(), s.serial + 1)


@dataclass
class FlatTrace:
    states: list = field(default_factory=list)
    result: FlatHalted | None = None


@gc_paused()
def run_flat(program: CpsProgram, max_steps: int, policy=Policy.TOP_M_FRAMES) -> FlatTrace:
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    s = inject_flat(program)
    trace = FlatTrace([s])
    for _ in range(max_steps):
        nxt = step_flat(s, policy)
        if isinstance(nxt, FlatHalted):
            trace.result = nxt
            break
        trace.states.append(nxt)
        s = nxt
    return trace


# ------------------------------------------------------------ abstract


def new_abstract(call, rho: tuple, lam: Lam, rho2: tuple, m: int, policy=Policy.TOP_M_FRAMES) -> tuple:
    if policy is Policy.TOP_M_FRAMES and lam.is_continuation:
        return rho2
    return ((call.label,) + tuple(rho))[:m]


@dataclass(frozen=True)
class MClo:
    lam: Lam
    env: tuple

    def __repr__(self):
        return f"MClo(λ{self.lam.label}, <{','.join(map(str, self.env))}>)"


def initial_config(program: CpsProgram) -> tuple:
    return (program.root, ())


def _aeval(e, rho: tuple, get) -> frozenset:
    if isinstance(e, Var):
        return get((e, rho))
    if isinstance(e, Lam):
        return frozenset((MClo(e, rho),))
    return frozenset((e,))


def transitions(call, rho: tuple, get, m: int, policy: Policy) -> Iterator[tuple]:
    if isinstance(call, If):
        tests = _aeval(call.test, rho, get)
        if any(not (isinstance(v, int) and v == 0) for v in tests):
            yield call.then, rho, ()
        if any(isinstance(v, int) and v == 0 for v in tests):
            yield call.orelse, rho, ()
        return
    fns = _aeval(call.fn, rho, get)
    args = [_aeval(e, rho, get) for e in call.args]
    for f in fns:
        if f is HALT:
            if len(args) == 1:
                yield None, None, ((ANSWER, args[0]),)
        elif isinstance(f, MClo) and len(f.lam.params) == len(args):
            lam = f.lam
            rho2 = new_abstract(call, rho, lam, f.env, m, policy)
            writes = [((v, rho2), d) for v, d in zip(lam.params, args)]
            writes += [((x, rho2), get((x, f.env))) for x in lam.free]
            yield lam.body, rho2, writes


def _step_fn(m: int, policy: Policy):
    def step(config, view: StoreView):
        call, rho = config
        out = []
        for call2, rho2, writes in transitions(call, rho, view.get, m, policy):
            for a, vals in writes:
                view.join(a, vals)
            if call2 is not None:
                out.append((call2, rho2))
        return out

    return step


def explore_widened_mcfa(
    program: CpsProgram,
    m: int,
    policy: Policy = Policy.TOP_M_FRAMES,
    *,
    budget: Budget | None = None,
    order: str = "fifo",
    seed: int = 0,
    observer=None,
) -> Solution:
    """m-CFA (or naive polynomial k-CFA) over ``P(Call x Env) x Store``."""
    return solve(
        [initial_config(program)],
        _step_fn(m, policy),
        {(program.halt, ()): frozenset((HALT,))},
        budget=budget,
        order=order,
        seed=seed,
        observer=observer,
    )


def closures_created(configs: Iterable) -> Iterator[MClo]:
    for call, rho in configs:
        atoms = (call.test,) if isinstance(call, If) else (call.fn, *call.args)
        for e in atoms:
            if isinstance(e, Lam):
                yield MClo(e, rho)


def flat_contract_violations(result: Solution) -> list[str]:
    """Closures in the store whose free variables are missing at their base."""
    bad = []
    for vals in result.store.values():
        for d in vals:
            if isinstance(d, MClo):
                for x in d.lam.free:
                    if (x, d.env) not in result.store:
                        bad.append(f"{d!r}: {x} unbound")
    return bad


# ------------------------------------------------------------ abstraction


def abstract_flat_env(rho: Stamp, m: int) -> tuple:
    return rho.context.first(m)


def _abs_value(d, m: int):
    if isinstance(d, FlatClo):
        return MClo(d.lam, abstract_flat_env(d.env, m))
    return d


def simulation_violations(trace: FlatTrace, result: Solution, m: int) -> list[str]:
    configs = set(result.configs)
    bad = []
    for i, s in enumerate(trace.states):
        if (s.call, abstract_flat_env(s.env, m)) not in configs:
            bad.append(f"state {i}: config at call {s.call.label} missing")
    last = trace.result.store if trace.result is not None else trace.states[-1].store
    for (v, rho), d in last.items():
        a = (v, abstract_flat_env(rho, m))
        if _abs_value(d, m) not in result.get(a):
            bad.append(f"store: ({v}, {a[1]}) lacks {_abs_value(d, m)!r}")
    if trace.result is not None and _abs_value(trace.result.value, m) not in result.get(ANSWER):
        bad.append("answer missing")
    return bad
