"""Time-stamps shared by the concrete machines.

Concrete call-string histories grow by one label per transition, so they
are persistent cons lists rather than tuples.  Each ``push`` yields a new
object and equality is identity: along one execution every history is
distinct, which is exactly the freshness the allocators rely on.
"""

from __future__ import annotations

from typing import Iterator

__all__ = ["CallString", "EMPTY", "Stamp", "first_k"]


class CallString:
    __slots__ = ("head", "tail", "depth")

    def __init__(self, head=None, tail: "CallString | None" = None):
        self.head = head
        self.tail = tail
        self.depth = 0 if tail is None else tail.depth + 1

    def push(self, label) -> "CallString":
        return CallString(label, self)

    def __iter__(self) -> Iterator:
        node = self
        while node.tail is not None:
            yield node.head
            node = node.tail

    def __len__(self) -> int:
        return self.depth

    def first(self, k: int) -> tuple:
        out = []
        node = self
        while len(out) < k and node.tail is not None:
            out.append(node.head)
            node = node.tail
        return tuple(out)

    def is_extension_of(self, other: "CallString") -> bool:
        """True when ``self`` is ``other`` with one more label pushed."""
        return self.tail is other

    def __repr__(self):
        shown = self.first(4)
        more = ",..." if self.depth > 4 else ""
        return f"<{','.join(map(str, shown))}{more}|{self.depth}>"


EMPTY = CallString()


class Stamp:
    """A serial number paired with a call-string context.

    Used where the context alone may repeat across transitions (flat
    environments, call-site-only ticking); the serial keeps it fresh.
    """

    __slots__ = ("serial", "context")

    def __init__(self, serial: int, context: CallString):
        self.serial = serial
        self.context = context

    def __eq__(self, other):
        return isinstance(other, Stamp) and other.serial == self.serial

    def __hash__(self):
        return self.serial

    def __lt__(self, other: "Stamp"):
        return self.serial < other.serial

    def __repr__(self):
        return f"({self.serial}, {self.context!r})"


def first_k(seq, k: int) -> tuple:
    """The ``k`` most recent labels of a call string or label sequence."""
    if isinstance(seq, CallString):
        return seq.first(k)
    return tuple(seq)[:k]
