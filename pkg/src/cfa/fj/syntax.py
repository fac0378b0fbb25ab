"""A-Normal Featherweight Java: syntax, parser and class table.

Concrete syntax is Java-like::

    class Pair extends Object {
        Object fst; Object snd;
        Pair(Object a, Object b) { super(); this.fst = a; this.snd = b; }
        Object first() { Object r; r = this.fst; return r; }
    }
    main {
        Object a = new Object();
        Pair p = new Pair(a, a);
        Object r = p.first();
        return r;
    }

Every operand must be a variable.  Statements get globally unique
labels in source order.  Variables are renamed apart per method body (so
``x`` in two methods are different ``FJVar`` values) and fields are
qualified by the class that declares them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import count
from typing import Iterable

from ..sexp import ParseError

__all__ = [
    "Assign",
    "Cast",
    "ClassDecl",
    "ClassTable",
    "FJParseError",
    "FJVar",
    "Field",
    "FieldRef",
    "Invoke",
    "Konst",
    "MethodDecl",
    "New",
    "OBJECT",
    "Return",
    "VarRef",
    "parse_fj",
]

OBJECT = "Object"
KEYWORDS = {"class", "extends", "super", "return", "new", "main", "this"}


class FJParseError(ParseError):
    pass


# ------------------------------------------------------------ entities


@dataclass(frozen=True)
class FJVar:
    """A method-local variable, parameter or ``this``; identity is ``uid``."""

    name: str = field(compare=False)
    uid: int

    def __hash__(self):
        return self.uid

    def __str__(self):
        return f"{self.name}/{self.uid}"


@dataclass(frozen=True)
class Field:
    owner: str = field(compare=False)
    name: str = field(compare=False)
    uid: int

    def __hash__(self):
        return self.uid

    def __str__(self):
        return f"{self.owner}.{self.name}"


@dataclass(frozen=True)
class VarRef:
    var: FJVar


@dataclass(frozen=True)
class FieldRef:
    var: FJVar
    name: str


@dataclass(frozen=True)
class Invoke:
    receiver: FJVar
    method: str
    args: tuple


@dataclass(frozen=True)
class New:
    cls: str
    args: tuple


@dataclass(frozen=True)
class Cast:
    cls: str
    var: FJVar


class _Stmt:
    label: int

    def __hash__(self):
        return self.label

    def __eq__(self, other):
        return self is other


@dataclass(frozen=True, eq=False)
class Assign(_Stmt):
    label: int
    target: FJVar
    expr: object
    line: int = 0

    __hash__ = _Stmt.__hash__


@dataclass(frozen=True, eq=False)
class Return(_Stmt):
    label: int
    var: FJVar
    line: int = 0

    __hash__ = _Stmt.__hash__


@dataclass(frozen=True)
class Konst:
    params: tuple  # ((type, name), ...)
    super_args: tuple  # names
    assigns: tuple  # ((field name, param name), ...)


@dataclass(frozen=True, eq=False)
class MethodDecl:
    """A method body.  ``main`` is represented as a method with no owner."""

    uid: int
    owner: str | None
    ret: str
    name: str
    params: tuple  # ((type, FJVar), ...)
    locals: tuple  # ((type, FJVar), ...)
    body: tuple
    this: FJVar | None

    def __hash__(self):
        return self.uid

    def __eq__(self, other):
        return self is other

    @property
    def qualname(self) -> str:
        return self.name if self.owner is None else f"{self.owner}.{self.name}"

    @property
    def bound(self) -> tuple:
        """Parameters then locals: everything allocated on entry."""
        return tuple(v for _, v in self.params) + tuple(v for _, v in self.locals)

    def __repr__(self):
        return f"<method {self.qualname}>"


@dataclass(frozen=True)
class ClassDecl:
    name: str
    parent: str
    fields: tuple  # ((type, Field), ...) own fields only
    konst: Konst
    methods: dict = field(hash=False, compare=False)


# ------------------------------------------------------------ class table


class ClassTable:
    def __init__(self, classes: dict, main: MethodDecl):
        self.classes = classes
        self.main = main
        self.stmts: dict = {}
        self._succ: dict = {}
        self.method_of: dict = {}
        for m in self.all_methods():
            for i, s in enumerate(m.body):
                self.stmts[s.label] = s
                self.method_of[s.label] = m
                if i + 1 < len(m.body):
                    self._succ[s.label] = m.body[i + 1]

    def all_methods(self) -> list:
        out = [self.main]
        for c in self.classes.values():
            out.extend(c.methods.values())
        return out

    def succ(self, label: int):
        try:
            return self._succ[label]
        except KeyError:
            raise KeyError(f"no successor for statement {label}") from None

    def chain(self, cls: str) -> list:
        """``cls`` and its ancestors, most derived first (Object excluded)."""
        out = []
        while cls != OBJECT:
            if cls not in self.classes:
                raise KeyError(f"unknown class {cls}")
            out.append(self.classes[cls])
            cls = self.classes[cls].parent
        return out

    def is_subclass(self, sub: str, sup: str) -> bool:
        return sup == OBJECT or any(c.name == sup for c in self.chain(sub))

    def field_vector(self, cls: str) -> tuple:
        """All fields, inherited ones first."""
        out = []
        for c in reversed(self.chain(cls)):
            out.extend(f for _, f in c.fields)
        return tuple(out)

    def constructor_lookup(self, cls: str) -> tuple:
        """``(fields, ructor)`` where ``ructor(addrs, args) -> (delta, record)``.

        ``delta`` maps each field address to the argument routed to it and
        ``record`` pairs each field with its address, in field order.
        Works for concrete values and for abstract flow sets alike.
        """
        fields = self.field_vector(cls)
        chain = self.chain(cls)

        def ructor(addrs, args):
            if len(addrs) != len(fields):
                raise ValueError("one address per field expected")
            slot = dict(zip(fields, addrs))
            delta: dict = {}
            pending = list(args)
            for c in chain:
                if len(pending) != len(c.konst.params):
                    raise ValueError(f"constructor {c.name} expects {len(c.konst.params)} arguments")
                env = {name: d for (_, name), d in zip(c.konst.params, pending)}
                own = {f.name: f for _, f in c.fields}
                for fname, pname in c.konst.assigns:
                    delta[slot[own[fname]]] = env[pname]
                pending = [env[p] for p in c.konst.super_args]
            if pending:
                raise ValueError("Object() takes no arguments")
            return delta, tuple(zip(fields, addrs))

        return fields, ructor

    def find_field(self, cls: str, name: str) -> Field | None:
        for f in self.field_vector(cls):
            if f.name == name:
                return f
        return None

    def lookup(self, cls: str, name: str) -> MethodDecl | None:
        for c in self.chain(cls):
            if name in c.methods:
                return c.methods[name]
        return None

    def method_lookup(self, d, name: str) -> MethodDecl:
        cls = getattr(d, "cls", None)
        if cls is None:
            raise LookupError(f"cannot invoke {name} on non-object {d!r}")
        m = self.lookup(cls, name)
        if m is None:
            raise LookupError(f"class {cls} has no method {name}")
        return m

    def amethod_lookup(self, ds: Iterable, name: str) -> set:
        out = set()
        for d in ds:
            cls = getattr(d, "cls", None)
            if cls is not None:
                m = self.lookup(cls, name)
                if m is not None:
                    out.add(m)
        return out

    @property
    def size(self) -> int:
        return len(self.stmts)


# ------------------------------------------------------------ tokenizer

_TOKEN = re.compile(r"\s+|//[^\n]*|/\*.*?\*/|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<p>[{}();,.=])", re.S)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokens(src: str) -> list:
    out = []
    pos, line, lstart = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise FJParseError(f"{line}:{pos - lstart + 1}: unexpected character {src[pos]!r}")
        if m.lastgroup:
            out.append(_Tok(m.lastgroup, m.group(), line, pos - lstart + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            lstart = pos + chunk.rfind("\n") + 1
        pos = m.end()
    out.append(_Tok("eof", "<end of input>", line, pos - lstart + 1))
    return out


# ------------------------------------------------------------ parser


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokens(src)
        self.i = 0
        self.labels = count()
        self.uids = count(1)

    def err(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.toks[self.i]
        raise FJParseError(f"{tok.line}:{tok.col}: {msg}")

    def peek(self, off: int = 0) -> _Tok:
        return self.toks[min(self.i + off, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            self.err(f"expected {text!r}, found {t.text!r}")
        return self.next()

    def ident(self, what: str = "identifier", allow_this=False) -> _Tok:
        t = self.peek()
        if t.kind != "id" or (t.text in KEYWORDS and not (allow_this and t.text == "this")):
            self.err(f"expected {what}, found {t.text!r}")
        return self.next()

    # -- program

    def program(self):
        raw = []
        while self.peek().text == "class":
            raw.append(self.class_decl())
        if self.peek().text != "main":
            self.err("expected 'class' or 'main'")
        main_tok = self.next()
        self.expect("{")
        main_raw = ("main", main_tok, None, "Object", [], self.body())
        if self.peek().kind != "eof":
            self.err("trailing input after main")
        return raw, main_raw

    def class_decl(self):
        self.expect("class")
        name = self.ident("class name")
        self.expect("extends")
        parent = self.ident("class name")
        self.expect("{")
        fields = []
        while self.peek().kind == "id" and self.peek(1).kind == "id" and self.peek(2).text == ";":
            ty = self.next()
            fname = self.next()
            self.next()
            fields.append((ty, fname))
        ktok = self.peek()
        if ktok.text != name.text or self.peek(1).text != "(":
            self.err(f"expected constructor {name.text}(...)")
        self.next()
        kparams = self.params()
        self.expect("{")
        self.expect("super")
        self.expect("(")
        sargs = self.arg_names()
        self.expect(";")
        assigns = []
        while self.peek().text == "this":
            self.next()
            self.expect(".")
            f = self.ident("field name")
            self.expect("=")
            p = self.ident("constructor parameter")
            self.expect(";")
            assigns.append((f, p))
        self.expect("}")
        methods = []
        while self.peek().text != "}":
            ret = self.ident("return type")
            mname = self.ident("method name")
            params = self.params()
            self.expect("{")
            methods.append((mname.text, mname, name.text, ret.text, params, self.body()))
        self.expect("}")
        return name, parent, fields, (ktok, kparams, sargs, assigns), methods

    def params(self) -> list:
        self.expect("(")
        out = []
        if self.peek().text != ")":
            while True:
                ty = self.ident("parameter type")
                v = self.ident("parameter name")
                out.append((ty, v))
                if self.peek().text != ",":
                    break
                self.next()
        self.expect(")")
        return out

    def arg_names(self) -> list:
        """Comma-separated variables up to ``)``; anything else breaks A-normal form."""
        out = []
        if self.peek().text != ")":
            while True:
                t = self.peek()
                if t.kind != "id" or (t.text in KEYWORDS and t.text != "this"):
                    self.err("arguments must be variables (A-normal form)")
                self.next()
                if self.peek().text not in (",", ")"):
                    self.err("arguments must be variables (A-normal form)", t)
                out.append(t)
                if self.peek().text == ",":
                    self.next()
                    continue
                break
        self.expect(")")
        return out

    def body(self) -> list:
        """Statements up to the closing brace, as raw tuples."""
        items = []
        while self.peek().text != "}":
            t = self.peek()
            if t.text == "return":
                self.next()
                v = self.ident("variable", allow_this=True)
                if self.peek().text != ";":
                    self.err("return takes a single variable (A-normal form)")
                self.next()
                items.append(("return", t, v))
            elif t.kind == "id" and self.peek(1).kind == "id" and t.text not in KEYWORDS:
                ty = self.next()
                v = self.ident("variable name")
                items.append(("decl", ty, v))
                if self.peek().text == "=":
                    self.next()
                    items.append(("assign", v, v, self.expr()))
                self.expect(";")
            else:
                v = self.ident("statement")
                self.expect("=")
                items.append(("assign", t, v, self.expr()))
                self.expect(";")
        self.expect("}")
        return items

    def expr(self):
        t = self.peek()
        if t.text == "new":
            self.next()
            c = self.ident("class name")
            self.expect("(")
            return ("new", t, c, self.arg_names())
        if t.text == "(":
            self.next()
            c = self.ident("class name")
            self.expect(")")
            v = self.ident("variable", allow_this=True)
            if self.peek().text != ";":
                self.err("cast operand must be a variable (A-normal form)")
            return ("cast", t, c, v)
        v = self.ident("expression", allow_this=True)
        if self.peek().text == ".":
            self.next()
            name = self.ident("field or method name")
            if self.peek().text == "(":
                self.next()
                return ("invoke", t, v, name, self.arg_names())
            if self.peek().text != ";":
                self.err("field reads must be on a variable (A-normal form)")
            return ("field", t, v, name)
        if self.peek().text != ";":
            self.err("expected ';' (A-normal form requires one operation per statement)")
        return ("var", t, v)


def _resolve(p: _Parser, raw_classes, main_raw) -> ClassTable:
    names = {OBJECT}
    decls = {}
    for name, parent, fields, _, _ in raw_classes:
        if name.text in names:
            p.err(f"duplicate class {name.text}", name)
        names.add(name.text)
    for name, parent, fields, konst, _ in raw_classes:
        if parent.text not in names:
            p.err(f"unknown parent class {parent.text}", parent)
    parents = {n.text: par.text for n, par, *_ in raw_classes}
    for n in parents:
        seen, c = set(), n
        while c != OBJECT:
            if c in seen:
                raise FJParseError(f"cyclic inheritance through {n}")
            seen.add(c)
            c = parents[c]

    def check_type(tok):
        if tok.text not in names:
            p.err(f"unknown class {tok.text}", tok)

    method_uids = count(1)
    pending = []
    for name, parent, fields, (ktok, kparams, sargs, assigns), methods in raw_classes:
        own = []
        for ty, f in fields:
            check_type(ty)
            if any(g.name == f.text for _, g in own):
                p.err(f"duplicate field {f.text} in {name.text}", f)
            own.append((ty.text, Field(name.text, f.text, next(p.uids))))
        pnames = [v.text for _, v in kparams]
        if len(set(pnames)) != len(pnames):
            p.err("duplicate constructor parameter", ktok)
        for ty, _ in kparams:
            check_type(ty)
        for a in sargs:
            if a.text not in pnames:
                p.err(f"super argument {a.text} is not a constructor parameter", a)
        own_names = [f.name for _, f in own]
        assigned = []
        for f, v in assigns:
            if f.text not in own_names:
                p.err(f"{f.text} is not a field declared by {name.text}", f)
            if v.text not in pnames:
                p.err(f"{v.text} is not a constructor parameter", v)
            assigned.append(f.text)
        if sorted(assigned) != sorted(own_names):
            p.err(f"constructor of {name.text} must assign each own field exactly once", ktok)
        konst = Konst(tuple((t.text, v.text) for t, v in kparams), tuple(a.text for a in sargs),
                      tuple((f.text, v.text) for f, v in assigns))
        decls[name.text] = ClassDecl(name.text, parent.text, tuple(own), konst, {})
        pending.extend((name.text, m) for m in methods)

    for cname in decls:
        seen_fields: dict = {}
        c = cname
        while c != OBJECT:
            for _, f in decls[c].fields:
                if f.name in seen_fields:
                    raise FJParseError(f"field {f.name} of {cname} is declared twice in its hierarchy")
                seen_fields[f.name] = f
            c = decls[c].parent
    for cname, d in decls.items():
        parent_arity = 0 if d.parent == OBJECT else len(decls[d.parent].konst.params)
        if len(d.konst.super_args) != parent_arity:
            raise FJParseError(f"super call in {cname} passes {len(d.konst.super_args)} arguments, "
                               f"parent expects {parent_arity}")

    def build(owner, mtok, ret, params, items) -> MethodDecl:
        scope: dict = {}
        this = None
        if owner is not None:
            this = FJVar("this", next(p.uids))
            scope["this"] = this
        ps, ls = [], []
        for ty, v in params:
            check_type(ty)
            if v.text in scope:
                p.err(f"duplicate variable {v.text}", v)
            scope[v.text] = FJVar(v.text, next(p.uids))
            ps.append((ty.text, scope[v.text]))
        for it in items:
            if it[0] == "decl":
                _, ty, v = it
                check_type(ty)
                if v.text in scope:
                    p.err(f"duplicate variable {v.text}", v)
                scope[v.text] = FJVar(v.text, next(p.uids))
                ls.append((ty.text, scope[v.text]))

        def var(tok) -> FJVar:
            if tok.text not in scope:
                p.err(f"unbound variable {tok.text}", tok)
            return scope[tok.text]

        stmts = []
        for it in (i for i in items if i[0] != "decl"):
            if it[0] == "return":
                stmts.append(Return(next(p.labels), var(it[2]), it[1].line))
                continue
            _, tok, target, e = it
            tv = var(target)
            if tv is this:
                p.err("cannot assign to this", target)
            kind = e[0]
            if kind == "var":
                ex = VarRef(var(e[2]))
            elif kind == "field":
                ex = FieldRef(var(e[2]), e[3].text)
            elif kind == "invoke":
                ex = Invoke(var(e[2]), e[3].text, tuple(var(a) for a in e[4]))
            elif kind == "new":
                check_type(e[2])
                if e[2].text != OBJECT and len(e[3]) != len(decls[e[2].text].konst.params):
                    p.err(f"new {e[2].text} expects {len(decls[e[2].text].konst.params)} arguments", e[2])
                if e[2].text == OBJECT and e[3]:
                    p.err("new Object takes no arguments", e[2])
                ex = New(e[2].text, tuple(var(a) for a in e[3]))
            else:
                check_type(e[2])
                ex = Cast(e[2].text, var(e[3]))
            stmts.append(Assign(next(p.labels), tv, ex, tok.line))
        where = "main" if owner is None else f"{owner}.{mtok.text}"
        if not stmts or not isinstance(stmts[-1], Return):
            p.err(f"body of {where} must end with a return statement", mtok)
        if any(isinstance(s, Return) for s in stmts[:-1]):
            p.err(f"return must be the last statement of {where}", mtok)
        name = "main" if owner is None else mtok.text
        return MethodDecl(next(method_uids), owner, ret, name, tuple(ps), tuple(ls), tuple(stmts), this)

    for cname, (mname, mtok, owner, ret, params, items) in pending:
        if mname in decls[cname].methods:
            p.err(f"duplicate method {cname}.{mname}", mtok)
        check_type(_Tok("id", ret, mtok.line, mtok.col))
        decls[cname].methods[mname] = build(owner, mtok, ret, params, items)
    _, mtok, _, ret, params, items = main_raw
    main = build(None, mtok, ret, params, items)
    return ClassTable(decls, main)


def parse_fj(source: str) -> ClassTable:
    """Parse and validate a program.  ``table.main.body`` is the entry statement list."""
    p = _Parser(source)
    raw, main_raw = p.program()
    return _resolve(p, raw, main_raw)

