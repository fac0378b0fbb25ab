"""CPS syntax: parsing, labeling, alpha-renaming and free-variable queries.

Concrete syntax::

    call ::= (f e ...)            application
           | (if e call call)     two-way branch on an atom (0 is false)
    exp  ::= var | int | (lambda (v ...) call) | (kappa (v ...) call)

``lambda`` marks ordinary procedures and ``kappa`` marks continuations.
Labels are dense integers assigned in preorder from 0.  The only free
variable a program may mention is ``halt``, bound at injection time to the
distinguished halt continuation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

from .sexp import ParseError, SList, Symbol, read_one

__all__ = [
    "Call",
    "CallSite",
    "CpsProgram",
    "Exp",
    "HALT",
    "HALT_NAME",
    "If",
    "Kind",
    "Lam",
    "ParseError",
    "Var",
    "alpha_equivalent",
    "canonical",
    "free_vars",
    "parse_cps",
    "program_from_datum",
    "unparse",
]

HALT_NAME = "halt"
KEYWORDS = frozenset({"lambda", "kappa", "if"})


class Kind(enum.Enum):
    PROCEDURE = "procedure"
    CONTINUATION = "continuation"


class _Halt:
    """The halt continuation; applying it to one value ends the run."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "halt"

    def __reduce__(self):
        return (_Halt, ())

    def __hash__(self):
        return 0x4A17

    def __eq__(self, other):
        return other is self


HALT = _Halt()


@dataclass(frozen=True)
class Var:
    name: str
    uid: int

    def __str__(self):
        return f"{self.name}/{self.uid}"

    def __hash__(self):
        return self.uid


# Syntax nodes compare by identity and hash by label, which keeps set
# iteration order independent of the interpreter's string-hash seed.
@dataclass(frozen=True, eq=False)
class Lam:
    label: int
    params: tuple[Var, ...]
    body: "CallSite"
    kind: Kind
    free: frozenset[Var] = field(default=frozenset(), repr=False)

    def __hash__(self):
        return self.label

    @property
    def is_continuation(self) -> bool:
        return self.kind is Kind.CONTINUATION


@dataclass(frozen=True, eq=False)
class Call:
    label: int
    fn: "Exp"
    args: tuple["Exp", ...]

    def __hash__(self):
        return self.label


@dataclass(frozen=True, eq=False)
class If:
    label: int
    test: "Exp"
    then: "CallSite"
    orelse: "CallSite"

    def __hash__(self):
        return self.label


Exp = Union[Var, Lam, int]
CallSite = Union[Call, If]


@dataclass(eq=False)
class CpsProgram:
    root: CallSite
    lambdas: dict[int, Lam]
    calls: dict[int, CallSite]
    halt: Var
    variables: list[Var]

    @property
    def size(self) -> int:
        """Number of labeled terms (lambdas plus call sites)."""
        return len(self.lambdas) + len(self.calls)

    def lam(self, label: int) -> Lam:
        try:
            return self.lambdas[label]
        except KeyError:
            raise KeyError(f"no lambda labeled {label}") from None

    def __repr__(self):
        return f"<CpsProgram {len(self.lambdas)} lambdas, {len(self.calls)} calls>"


def free_vars(lam: Lam) -> frozenset[Var]:
    """Variables occurring free in ``lam`` (computed once at parse time)."""
    return lam.free


class _Builder:
    def __init__(self):
        self.next_label = 0
        self.next_uid = 1
        self.lambdas: dict[int, Lam] = {}
        self.calls: dict[int, CallSite] = {}
        self.variables: list[Var] = []
        self.halt = Var(HALT_NAME, 0)

    def fresh_var(self, name: str) -> Var:
        v = Var(str(name), self.next_uid)
        self.next_uid += 1
        self.variables.append(v)
        return v

    def label(self) -> int:
        n = self.next_label
        self.next_label += 1
        return n

    # Each builder returns (node, free variables of node).
    def exp(self, d, scope: dict[str, Var]):
        if isinstance(d, bool):
            raise ParseError("booleans are not supported")
        if isinstance(d, int):
            return d, frozenset()
        if isinstance(d, Symbol):
            if d in KEYWORDS:
                raise ParseError(f"keyword {d!r} used as a variable", d.line, d.col)
            if d in scope:
                v = scope[d]
                return v, frozenset((v,))
            if d == HALT_NAME:
                return self.halt, frozenset((self.halt,))
            raise ParseError(f"unbound variable {d!r}", d.line, d.col)
        if isinstance(d, SList) and d and isinstance(d[0], Symbol) and d[0] in ("lambda", "kappa"):
            return self.lam(d, scope)
        line, col = _pos(d)
        raise ParseError(f"expected a variable, literal or lambda, got {_show(d)}", line, col)

    def lam(self, d: SList, scope: dict[str, Var]):
        kind = Kind.PROCEDURE if d[0] == "lambda" else Kind.CONTINUATION
        if len(d) != 3 or not isinstance(d[1], list):
            raise ParseError(f"malformed {d[0]}: expected ({d[0]} (params ...) call)", d.line, d.col)
        label = self.label()
        names = d[1]
        seen = set()
        for p in names:
            if not isinstance(p, Symbol) or p in KEYWORDS:
                line, col = _pos(p) if not isinstance(p, Symbol) else (p.line, p.col)
                raise ParseError(f"bad parameter {_show(p)}", line or d.line, col or d.col)
            if p in seen:
                raise ParseError(f"duplicate parameter {p!r}", p.line, p.col)
            seen.add(p)
        params = tuple(self.fresh_var(p) for p in names)
        body_d = d[2]
        if not _is_call_datum(body_d):
            line, col = _pos(body_d)
            raise ParseError(
                f"{d[0]} body is not a call site: {_show(body_d)}", line or d.line, col or d.col
            )
        inner = dict(scope)
        inner.update(zip(names, params))
        body, fv = self.call(body_d, inner)
        fv = fv - frozenset(params)
        lam = Lam(label, params, body, kind, fv)
        self.lambdas[label] = lam
        return lam, fv

    def call(self, d, scope: dict[str, Var]):
        if not _is_call_datum(d):
            line, col = _pos(d)
            raise ParseError(f"expected a call site, got {_show(d)}", line, col)
        if isinstance(d[0], Symbol) and d[0] == "if":
            if len(d) != 4:
                raise ParseError("if takes a test atom and two call sites", d.line, d.col)
            label = self.label()
            test, fv0 = self.exp(d[1], scope)
            then, fv1 = self.call(d[2], scope)
            orelse, fv2 = self.call(d[3], scope)
            node = If(label, test, then, orelse)
            self.calls[label] = node
            return node, fv0 | fv1 | fv2
        label = self.label()
        fn, fv = self.exp(d[0], scope)
        args = []
        for a in d[1:]:
            e, efv = self.exp(a, scope)
            args.append(e)
            fv = fv | efv
        if isinstance(fn, Lam) and len(fn.params) != len(args):
            raise ParseError(
                f"arity mismatch: lambda takes {len(fn.params)} arguments, given {len(args)}",
                d.line,
                d.col,
            )
        node = Call(label, fn, tuple(args))
        self.calls[label] = node
        return node, fv


def _is_call_datum(d) -> bool:
    if not isinstance(d, SList) or not d:
        return False
    head = d[0]
    return not (isinstance(head, Symbol) and head in ("lambda", "kappa"))


def _pos(d):
    return (getattr(d, "line", 0), getattr(d, "col", 0))


def _show(d) -> str:
    if isinstance(d, list):
        return "(" + " ".join(_show(x) for x in d) + ")"
    return str(d)


def program_from_datum(datum) -> CpsProgram:
    b = _Builder()
    if not _is_call_datum(datum) and isinstance(datum, SList) and datum:
        # A bare lambda program: report a bad body before the root itself.
        b.lam(datum, {})
    root, fv = b.call(datum, {})
    extra = fv - {b.halt}
    if extra:  # pragma: no cover - unbound names are rejected during the walk
        raise ParseError(f"program has free variables {sorted(map(str, extra))}")
    return CpsProgram(root, b.lambdas, b.calls, b.halt, b.variables)


def parse_cps(source: str) -> CpsProgram:
    """Parse, label and alpha-rename a CPS program."""
    return program_from_datum(read_one(source))


# ---------------------------------------------------------------- printing


def _name(v: Var, names) -> str:
    return names(v) if names else v.name


def _unparse_exp(e, verbose, names) -> str:
    if isinstance(e, Var):
        return _name(e, names)
    if isinstance(e, int):
        return str(e)
    kw = "kappa" if e.is_continuation else "lambda"
    params = " ".join(_name(p, names) for p in e.params)
    tag = f"#{e.label}" if verbose else ""
    return f"({kw} ({params}) {_unparse_call(e.body, verbose, names)}){tag}"


def _unparse_call(c, verbose, names) -> str:
    tag = f"#{c.label}" if verbose else ""
    if isinstance(c, If):
        parts = [
            "if",
            _unparse_exp(c.test, verbose, names),
            _unparse_call(c.then, verbose, names),
            _unparse_call(c.orelse, verbose, names),
        ]
    else:
        parts = [_unparse_exp(c.fn, verbose, names)]
        parts += [_unparse_exp(a, verbose, names) for a in c.args]
    return "(" + " ".join(parts) + ")" + tag


def unparse(node, verbose: bool = False) -> str:
    """Render a program, call site or expression as CPS text.

    With ``verbose`` every lambda and call site is suffixed by ``#label``;
    that form is for reading, not for reparsing.
    """
    if isinstance(node, CpsProgram):
        node = node.root
    if isinstance(node, (Call, If)):
        return _unparse_call(node, verbose, None)
    return _unparse_exp(node, verbose, None)


def canonical(program: CpsProgram) -> str:
    """Unparse with binders renamed by binding order; equal iff alpha-equivalent."""
    order: dict[Var, str] = {program.halt: HALT_NAME}

    def walk_exp(e):
        if isinstance(e, Lam):
            for p in e.params:
                order.setdefault(p, f"v{len(order)}")
            walk_call(e.body)

    def walk_call(c):
        if isinstance(c, If):
            walk_exp(c.test)
            walk_call(c.then)
            walk_call(c.orelse)
        else:
            walk_exp(c.fn)
            for a in c.args:
                walk_exp(a)

    walk_call(program.root)
    return _unparse_call(program.root, False, lambda v: order[v])


def alpha_equivalent(a: CpsProgram, b: CpsProgram) -> bool:
    return canonical(a) == canonical(b)
