"""Worklist solver over a single-threaded (global) abstract store.

An analysis supplies a transfer function ``step(config, view)`` that reads
the store through ``view.get`` and writes through ``view.join``; it returns
the successor configurations.  Reads are recorded so that a config is
re-evaluated whenever an address it read grows.  The store only ever grows
(join-only writes), so the iteration ascends a finite lattice and the
result does not depend on the order in which configs are processed.
"""

from __future__ import annotations

import collections
import random
import time
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable

from ._gc import gc_paused

__all__ = ["AnswerKey", "ANSWER", "Budget", "Solution", "StoreView", "solve"]


class AnswerKey:
    """Pseudo-address collecting every value handed to the halt continuation."""

    def __repr__(self):
        return "ANSWER"

    def __hash__(self):
        return 0x0A45

    def __reduce__(self):
        return (_answer, ())


def _answer():
    return ANSWER


ANSWER = AnswerKey()

EMPTY_SET: frozenset = frozenset()


@dataclass(frozen=True)
class Budget:
    """Caps on one analysis run.  ``None`` means unlimited."""

    max_transfers: int | None = None
    max_ms: float | None = None


class StoreView:
    __slots__ = ("store", "reads", "writes")

    def __init__(self, store: dict):
        self.store = store
        self.reads: list = []
        self.writes: list = []

    def get(self, addr) -> frozenset:
        self.reads.append(addr)
        s = self.store.get(addr)
        return EMPTY_SET if s is None else s

    def join(self, addr, values: Iterable) -> None:
        self.writes.append((addr, values))


@dataclass
class Solution:
    configs: list
    store: dict
    transfers: int = 0
    store_joins: int = 0
    partial: bool = False
    elapsed_ms: float = 0.0

    def get(self, addr) -> frozenset:
        return self.store.get(addr, EMPTY_SET)


@gc_paused()
def solve(
    initial: Iterable[Hashable],
    step: Callable[[Any, StoreView], Iterable[Hashable]],
    store: dict | None = None,
    *,
    budget: Budget | None = None,
    order: str = "fifo",
    seed: int = 0,
    observer: Callable[[dict], None] | None = None,
) -> Solution:
    """Least fixpoint of the widened transfer function.

    ``order`` is ``fifo`` (default), ``lifo`` or ``random``; it only changes
    how much work is done, never the result.  ``observer`` is called with
    the live store after every transfer.
    """
    budget = budget or Budget()
    store = {k: frozenset(v) for k, v in (store or {}).items()}
    seen: dict = {}
    queue: collections.deque = collections.deque()
    queued: set = set()
    deps: dict = collections.defaultdict(set)
    rng = random.Random(seed)

    def push(c):
        if c not in queued:
            queued.add(c)
            queue.append(c)

    for c in initial:
        if c not in seen:
            seen[c] = None
            push(c)

    transfers = joins = 0
    partial = False
    start = time.perf_counter()
    deadline = None if budget.max_ms is None else start + budget.max_ms / 1000.0

    while queue:
        if budget.max_transfers is not None and transfers >= budget.max_transfers:
            partial = True
            break
        if deadline is not None and (transfers & 0xFF) == 0 and time.perf_counter() > deadline:
            partial = True
            break
        if order == "fifo":
            c = queue.popleft()
        elif order == "lifo":
            c = queue.pop()
        elif order == "random":
            i = rng.randrange(len(queue))
            queue.rotate(-i)
            c = queue.popleft()
            queue.rotate(i)
        else:
            raise ValueError(f"unknown order {order!r}")
        queued.discard(c)
        view = StoreView(store)
        successors = list(step(c, view))
        transfers += 1
        for a in view.reads:
            deps[a].add(c)
        for addr, values in view.writes:
            old = store.get(addr, EMPTY_SET)
            new = old.union(values)
            if len(new) != len(old):
                store[addr] = new
                joins += 1
                for d in deps.get(addr, ()):
                    push(d)
        for s in successors:
            if s not in seen:
                seen[s] = None
                push(s)
        if observer is not None:
            observer(store)

    elapsed = (time.perf_counter() - start) * 1000.0
    return Solution(list(seen), store, transfers, joins, partial, elapsed)
