"""Direct-style Scheme subset to CPS.

Supported forms: ``define`` (function or value, top level only), application,
variables, integer literals, ``lambda``, ``if``, ``begin`` and ``let``.
A definition is visible to the forms after it, so recursion is not
available.  The value of the last top-level expression is passed to
``halt``.

User lambdas become procedures; every lambda the transform introduces
(return points, join points, ``let``/``define`` binders) is a continuation.
The conversion is higher-order (one pass, no administrative redexes).
"""

from __future__ import annotations

from typing import Callable

from .cps import CpsProgram, HALT_NAME, program_from_datum
from .sexp import ParseError, SList, Symbol, read_all

__all__ = ["ConvertError", "cps_convert", "cps_datum"]

_RESERVED = frozenset({"define", "lambda", "kappa", "if", "begin", "let", "quote", "set!"})
_UNSUPPORTED = frozenset({"quote", "set!", "cond", "letrec", "let*", "define-syntax", "call/cc"})


class ConvertError(ParseError):
    pass


def _sym(name: str) -> Symbol:
    return Symbol(name)


class _Converter:
    def __init__(self):
        self.counter = 0

    def fresh(self, base: str) -> Symbol:
        self.counter += 1
        return _sym(f"{base}%{self.counter}")

    # -- helpers
    def check_ref(self, s: Symbol, scope: frozenset):
        if "%" in s:
            raise ConvertError(f"identifier {s!r} uses reserved character '%'", s.line, s.col)
        if s in _RESERVED or s == "kappa":
            raise ConvertError(f"unsupported form: keyword {s!r} in expression position", s.line, s.col)
        if s not in scope:
            raise ConvertError(
                f"unbound variable {s!r} (definitions are only visible to later forms)",
                s.line,
                s.col,
            )

    def head(self, e):
        if isinstance(e, SList) and e and isinstance(e[0], Symbol):
            return str(e[0])
        return None

    def reify(self, k: Callable) -> SList:
        r = self.fresh("r")
        return SList([_sym("kappa"), SList([r]), k(r)])

    def body(self, forms, line=0, col=0):
        if not forms:
            raise ConvertError("empty body", line, col)
        if len(forms) == 1:
            return forms[0]
        return SList([_sym("begin"), *forms], line, col)

    # -- atoms
    def lam(self, e: SList, scope: frozenset) -> SList:
        if len(e) < 3 or not isinstance(e[1], list):
            raise ConvertError("malformed lambda", e.line, e.col)
        params = list(e[1])
        for p in params:
            if not isinstance(p, Symbol) or p in _RESERVED:
                raise ConvertError(f"bad parameter {p!r}", e.line, e.col)
        k = self.fresh("k")
        inner = scope | frozenset(params)
        body = self.tail(self.body(e[2:], e.line, e.col), k, inner)
        return SList([_sym("lambda"), SList([*params, k]), body])

    # -- conversion with a meta-continuation
    def conv(self, e, k: Callable, scope: frozenset):
        if isinstance(e, bool):
            raise ConvertError("unsupported form: boolean literal")
        if isinstance(e, int):
            return k(e)
        if isinstance(e, Symbol):
            self.check_ref(e, scope)
            return k(e)
        if not isinstance(e, SList) or not e:
            raise ConvertError(f"unsupported form: {e!r}", getattr(e, "line", 0), getattr(e, "col", 0))
        h = self.head(e)
        if h == "lambda":
            return k(self.lam(e, scope))
        if h == "if":
            self._check_if(e)
            j = self.fresh("j")

            def branch(test):
                return SList(
                    [_sym("if"), test, self.tail(e[2], j, scope), self.tail(e[3], j, scope)]
                )

            joined = self.conv(e[1], branch, scope)
            return SList([SList([_sym("kappa"), SList([j]), joined]), self.reify(k)])
        if h == "begin":
            return self.conv_seq(list(e[1:]), k, scope, e)
        if h == "let":
            return self.conv_let(e, lambda body, sc: self.conv(body, k, sc), scope)
        self._reject(e, h)
        return self.conv_app(e, lambda atoms: SList([*atoms, self.reify(k)]), scope)

    def tail(self, e, kvar: Symbol, scope: frozenset):
        if isinstance(e, SList) and e:
            h = self.head(e)
            if h == "if":
                self._check_if(e)
                return self.conv(
                    e[1],
                    lambda test: SList(
                        [_sym("if"), test, self.tail(e[2], kvar, scope), self.tail(e[3], kvar, scope)]
                    ),
                    scope,
                )
            if h == "begin":
                items = list(e[1:])
                if not items:
                    raise ConvertError("empty begin", e.line, e.col)
                if len(items) == 1:
                    return self.tail(items[0], kvar, scope)
                rest = SList([_sym("begin"), *items[1:]], e.line, e.col)
                return self.conv(items[0], lambda _: self.tail(rest, kvar, scope), scope)
            if h == "let":
                return self.conv_let(e, lambda body, sc: self.tail(body, kvar, sc), scope)
            if h not in ("lambda",):
                self._reject(e, h)
                return self.conv_app(e, lambda atoms: SList([*atoms, kvar]), scope)
        return self.conv(e, lambda a: SList([kvar, a]), scope)

    def conv_seq(self, items, k, scope, where):
        if not items:
            raise ConvertError("empty begin", where.line, where.col)
        if len(items) == 1:
            return self.conv(items[0], k, scope)
        return self.conv(items[0], lambda _: self.conv_seq(items[1:], k, scope, where), scope)

    def conv_app(self, e: SList, finish: Callable, scope: frozenset):
        atoms: list = []

        def go(i):
            if i == len(e):
                return finish(atoms)

            def take(a):
                atoms.append(a)
                return go(i + 1)

            return self.conv(e[i], take, scope)

        return go(0)

    def conv_let(self, e: SList, finish: Callable, scope: frozenset):
        if len(e) < 3 or not isinstance(e[1], list):
            raise ConvertError("malformed let", e.line, e.col)
        bindings = list(e[1])
        names = []
        for b in bindings:
            if not (isinstance(b, list) and len(b) == 2 and isinstance(b[0], Symbol)):
                raise ConvertError("malformed let binding", e.line, e.col)
            names.append(b[0])
        if len(set(names)) != len(names):
            raise ConvertError("duplicate let binding", e.line, e.col)
        body = self.body(e[2:], e.line, e.col)
        inner = scope | frozenset(names)
        vals: list = []

        def go(i):
            if i == len(bindings):
                return SList(
                    [SList([_sym("kappa"), SList(names), finish(body, inner)]), *vals]
                )

            def take(a):
                vals.append(a)
                return go(i + 1)

            return self.conv(bindings[i][1], take, scope)

        return go(0)

    def _check_if(self, e):
        if len(e) != 4:
            raise ConvertError("if needs a test and two branches", e.line, e.col)

    def _reject(self, e, h):
        if h in _UNSUPPORTED or h == "define" or h == "kappa":
            raise ConvertError(f"unsupported form: ({h} ...)", e.line, e.col)

    # -- programs
    def program(self, forms: list):
        if not forms:
            raise ConvertError("empty program")
        halt = _sym(HALT_NAME)

        def go(i: int, scope: frozenset):
            form = forms[i]
            last = i == len(forms) - 1
            if self.head(form) == "define":
                if last:
                    raise ConvertError("program ends with a definition; no final expression", form.line, form.col)
                name, value = self.definition(form)
                if self.head(value) == "lambda":
                    atom = self.lam(value, scope)
                    rest = go(i + 1, scope | {name})
                    return SList([SList([_sym("kappa"), SList([name]), rest]), atom])
                return self.conv(
                    value,
                    lambda a: SList(
                        [SList([_sym("kappa"), SList([name]), go(i + 1, scope | {name})]), a]
                    ),
                    scope,
                )
            if last:
                return self.tail(form, halt, scope)
            return self.conv(form, lambda _: go(i + 1, scope), scope)

        return go(0, frozenset({halt}))

    def definition(self, form: SList):
        if len(form) < 3:
            raise ConvertError("malformed define", form.line, form.col)
        target = form[1]
        if isinstance(target, SList):
            if not target or not isinstance(target[0], Symbol):
                raise ConvertError("malformed define", form.line, form.col)
            lam = SList([_sym("lambda"), SList(target[1:]), *form[2:]], form.line, form.col)
            return target[0], lam
        if not isinstance(target, Symbol) or len(form) != 3:
            raise ConvertError("malformed define", form.line, form.col)
        return target, form[2]


def cps_datum(direct_source: str):
    """The CPS s-expression for a direct-style program."""
    return _Converter().program(read_all(direct_source))


def cps_convert(direct_source: str) -> CpsProgram:
    """Convert a direct-style program and parse the result as CPS."""
    return program_from_datum(cps_datum(direct_source))
