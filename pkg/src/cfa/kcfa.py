"""Shivers's k-CFA for CPS as an abstract small-step machine.

Abstract time is the last ``k`` call-site labels.  Because an abstract
address is ``(var, time)``, binding environments are stored as maps from
variables to times.  Two ways to compute the analysis are provided:
``explore_naive`` enumerates reachable states, each with its own store,
and ``explore_widened`` runs the worklist over configurations sharing one
global store.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from pyrsistent import PMap, pmap

from . import cps_concrete as C
from .cps import HALT, Call, CpsProgram, If, Lam, Var
from .engine import ANSWER, Budget, Solution, StoreView, solve
from .times import first_k

__all__ = [
    "AClo",
    "AState",
    "BEnv",
    "NaiveResult",
    "aalloc",
    "abstract_state",
    "abstract_store",
    "abstract_value",
    "astep",
    "atick",
    "closures_created",
    "explore_naive",
    "explore_widened",
    "initial_config",
    "simulation_violations",
    "transfer",
]


class BEnv:
    """Abstract binding environment, kept as variable -> abstract time."""

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, mapping: dict | None = None):
        m = dict(mapping or {})
        self._map = m
        self._items = tuple(sorted(m.items(), key=lambda kv: kv[0].uid))
        self._hash = hash(self._items)

    def __getitem__(self, v: Var):
        return (v, self._map[v])

    def time_of(self, v: Var) -> tuple:
        return self._map[v]

    def __contains__(self, v) -> bool:
        return v in self._map

    def __iter__(self):
        return iter(self._map)

    def __len__(self):
        return len(self._map)

    def items(self):
        return self._items

    def extend(self, params: Iterable[Var], t: tuple) -> "BEnv":
        m = dict(self._map)
        for v in params:
            m[v] = t
        return BEnv(m)

    def restrict(self, vs) -> "BEnv":
        return BEnv({v: t for v, t in self._map.items() if v in vs})

    def __eq__(self, other):
        return self is other or (
            isinstance(other, BEnv) and self._hash == other._hash and self._items == other._items
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "{" + ", ".join(f"{v}:{_ctx(t)}" for v, t in self._items) + "}"


def _ctx(t: tuple) -> str:
    return "<" + ",".join(map(str, t)) + ">"


@dataclass(frozen=True)
class AClo:
    lam: Lam
    env: BEnv

    def __repr__(self):
        return f"AClo(λ{self.lam.label}, {self.env!r})"


@dataclass(frozen=True)
class AState:
    call: object
    env: BEnv
    store: PMap
    time: tuple


def atick(call, t: tuple, k: int) -> tuple:
    return ((call.label,) + tuple(t))[:k]


def aalloc(v: Var, t: tuple) -> tuple:
    return (v, t)


def initial_config(program: CpsProgram) -> tuple:
    return (program.root, BEnv({program.halt: ()}), ())


def initial_store(program: CpsProgram) -> dict:
    return {aalloc(program.halt, ()): frozenset((HALT,))}


def _eval(e, env: BEnv, get) -> frozenset:
    if isinstance(e, Var):
        return get(env[e])
    if isinstance(e, Lam):
        return frozenset((AClo(e, env),))
    return frozenset((e,))


def transitions(call, env: BEnv, t: tuple, get, k: int) -> Iterator[tuple]:
    """Yield ``(call', env', time', writes)`` for every abstract successor.

    A successor of ``None`` carries writes only (values reaching halt).
    """
    t2 = atick(call, t, k)
    if isinstance(call, If):
        tests = _eval(call.test, env, get)
        if any(not (isinstance(v, int) and v == 0) for v in tests):
            yield call.then, env, t2, ()
        if any(isinstance(v, int) and v == 0 for v in tests):
            yield call.orelse, env, t2, ()
        return
    fns = _eval(call.fn, env, get)
    args = [_eval(e, env, get) for e in call.args]
    for f in fns:
        if f is HALT:
            if len(args) == 1:
                yield None, None, None, ((ANSWER, args[0]),)
        elif isinstance(f, AClo) and len(f.lam.params) == len(args):
            lam = f.lam
            writes = tuple((aalloc(v, t2), d) for v, d in zip(lam.params, args))
            yield lam.body, f.env.extend(lam.params, t2), t2, writes


# ------------------------------------------------------------ naive


def _store_get(store: PMap):
    empty = frozenset()
    return lambda a: store.get(a, empty)


def _join(store: PMap, writes) -> PMap:
    if not writes:
        return store
    ev = store.evolver()
    for a, vals in writes:
        old = ev[a] if a in ev else frozenset()
        ev[a] = old | vals
    return ev.persistent()


def astep(s: AState, k: int) -> set[AState]:
    """All abstract successors of ``s``; stores are joined, never overwritten."""
    out = set()
    for call, env, t, writes in transitions(s.call, s.env, s.time, _store_get(s.store), k):
        if call is None:
            continue
        out.add(AState(call, env, _join(s.store, writes), t))
    return out


def initial_state(program: CpsProgram) -> AState:
    call, env, t = initial_config(program)
    return AState(call, env, pmap(initial_store(program)), t)


@dataclass
class NaiveResult:
    states: frozenset
    iterations: int
    budget_exceeded: bool

    def answers(self, k: int) -> frozenset:
        out = set()
        for s in self.states:
            for call, _, _, writes in transitions(s.call, s.env, s.time, _store_get(s.store), k):
                if call is None:
                    for _, vals in writes:
                        out |= vals
        return frozenset(out)

    def joined_store(self) -> dict:
        out: dict = {}
        for s in self.states:
            for a, vals in s.store.items():
                out[a] = out.get(a, frozenset()) | vals
        return out


def explore_naive(program: CpsProgram, k: int, budget: int = 10**6) -> NaiveResult:
    """Least fixpoint of ``f(S) = succ(S) ∪ {s0}`` by Kleene iteration.

    ``iterations`` counts applications of ``f`` starting from the empty
    set, including the final one that confirms the fixpoint.  Exploration
    stops with ``budget_exceeded`` once more than ``budget`` states exist.
    """
    s0 = initial_state(program)
    reached: set = set()
    frontier = {s0}
    iterations = 0
    while True:
        iterations += 1
        new = {s for s in frontier if s not in reached}
        if not new:
            return NaiveResult(frozenset(reached), iterations, False)
        reached |= new
        if len(reached) > budget:
            return NaiveResult(frozenset(reached), iterations, True)
        frontier = set()
        for s in new:
            frontier |= astep(s, k)


# ------------------------------------------------------------ widened


def _step_fn(k: int):
    def step(config, view: StoreView):
        call, env, t = config
        out = []
        for call2, env2, t2, writes in transitions(call, env, t, view.get, k):
            for a, vals in writes:
                view.join(a, vals)
            if call2 is not None:
                out.append((call2, env2, t2))
        return out

    return step


def explore_widened(
    program: CpsProgram,
    k: int,
    *,
    budget: Budget | None = None,
    order: str = "fifo",
    seed: int = 0,
    observer=None,
) -> Solution:
    """k-CFA with a single-threaded store (configs are ``(call, env, time)``)."""
    return solve(
        [initial_config(program)],
        _step_fn(k),
        initial_store(program),
        budget=budget,
        order=order,
        seed=seed,
        observer=observer,
    )


def transfer(program: CpsProgram, k: int, configs: Iterable, store: dict) -> tuple[set, dict]:
    """One application of the widened transfer function to the whole system space."""
    configs = set(configs)
    new_store = {a: frozenset(v) for a, v in store.items()}
    get = lambda a: store.get(a, frozenset())  # noqa: E731
    out = {initial_config(program)} | configs
    for call, env, t in configs:
        for call2, env2, t2, writes in transitions(call, env, t, get, k):
            for a, vals in writes:
                new_store[a] = new_store.get(a, frozenset()) | vals
            if call2 is not None:
                out.add((call2, env2, t2))
    return out, new_store


def closures_created(configs: Iterable) -> Iterator[AClo]:
    """Every abstract closure built by evaluating a lambda in some config."""
    for call, env, _ in configs:
        if isinstance(call, If):
            atoms = (call.test,)
        else:
            atoms = (call.fn, *call.args)
        for e in atoms:
            if isinstance(e, Lam):
                yield AClo(e, env)


# ------------------------------------------------------------ abstraction


def abstract_time(t, k: int) -> tuple:
    return first_k(t, k)


def abstract_env(env: PMap, k: int) -> BEnv:
    return BEnv({v: first_k(t, k) for v, (_, t) in env.items()})


def abstract_value(d, k: int):
    if isinstance(d, C.Clo):
        return AClo(d.lam, abstract_env(d.env, k))
    return d


def abstract_store(store: PMap, k: int) -> dict:
    out: dict = {}
    for (v, t), d in store.items():
        a = (v, first_k(t, k))
        out.setdefault(a, set()).add(abstract_value(d, k))
    return {a: frozenset(vs) for a, vs in out.items()}


def abstract_state(s: C.State, k: int) -> AState:
    """The state-wise abstraction map (requires call-string times)."""
    return AState(s.call, abstract_env(s.env, k), pmap(abstract_store(s.store, k)), first_k(s.time, k))


def simulation_violations(trace: C.Trace, result: Solution, k: int) -> list[str]:
    """Concrete states whose abstraction is not covered by ``result``.

    Configurations are checked state by state.  The concrete store only
    grows along a trace and the abstraction is monotone, so checking the
    final store covers every earlier one.
    """
    configs = set(result.configs)
    bad = []
    for i, s in enumerate(trace.states):
        c = (s.call, abstract_env(s.env, k), first_k(s.time, k))
        if c not in configs:
            bad.append(f"state {i}: config at call {s.call.label} missing")
    last = trace.result.store if trace.result is not None else trace.states[-1].store
    for a, vals in abstract_store(last, k).items():
        missing = vals - result.get(a)
        if missing:
            bad.append(f"store: {a[0]}@{_ctx(a[1])} lacks {sorted(map(repr, missing))}")
    if trace.result is not None:
        v = abstract_value(trace.result.value, k)
        if v not in result.get(ANSWER):
            bad.append(f"answer {v!r} missing")
    return bad
