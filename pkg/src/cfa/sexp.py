"""Minimal s-expression reader with source positions."""

from __future__ import annotations

import re

__all__ = ["ParseError", "Symbol", "SList", "read_all", "read_one"]


class ParseError(ValueError):
    """Raised for malformed input; carries a 1-based line/column."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{message}")


class Symbol(str):
    __slots__ = ("line", "col")

    def __new__(cls, name: str, line: int = 0, col: int = 0):
        self = super().__new__(cls, name)
        self.line = line
        self.col = col
        return self


class SList(list):
    """A parenthesized list remembering where it started."""

    def __init__(self, items=(), line: int = 0, col: int = 0):
        super().__init__(items)
        self.line = line
        self.col = col


_TOKEN = re.compile(r"""\s+|;[^\n]*|(?P<open>[(\[])|(?P<close>[)\]])|(?P<atom>[^\s()\[\];]+)""")
_INT = re.compile(r"[+-]?\d+\Z")


def _tokens(text: str):
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the regex matches every character class
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        col = pos - line_start + 1
        kind = m.lastgroup
        if kind is not None:
            yield kind, m.group(kind), line, col
        chunk = m.group(0)
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()


def _atom(tok: str, line: int, col: int):
    if _INT.match(tok):
        return int(tok)
    return Symbol(tok, line, col)


def read_all(text: str) -> list:
    """Read every top-level datum in ``text``."""
    stack: list[SList] = []
    out: list = []
    for kind, tok, line, col in _tokens(text):
        if kind == "open":
            stack.append(SList(line=line, col=col))
        elif kind == "close":
            if not stack:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            (stack[-1] if stack else out).append(done)
        else:
            (stack[-1] if stack else out).append(_atom(tok, line, col))
    if stack:
        open_ = stack[-1]
        raise ParseError("unterminated list", open_.line, open_.col)
    return out


def read_one(text: str):
    data = read_all(text)
    if len(data) != 1:
        raise ParseError(f"expected exactly one expression, found {len(data)}", 1, 1)
    return data[0]
