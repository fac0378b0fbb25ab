import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfa.convert import ConvertError, cps_convert
from cfa.cps import (
    Call,
    If,
    Kind,
    Lam,
    alpha_equivalent,
    canonical,
    free_vars,
    parse_cps,
    unparse,
)
from cfa.sexp import ParseError, read_all


def lam_by_params(program, *names):
    for lam in program.lambdas.values():
        if tuple(v.name for v in lam.params) == names:
            return lam
    raise KeyError(names)


def test_reader_positions_and_comments():
    forms = read_all("; note\n(a [b 12]\n  c)")
    assert forms[0][1][1] == 12
    with pytest.raises(ParseError, match=r"^\d+:\d+: "):
        read_all("(a b")


def test_parse_counts_and_kinds():
    p = parse_cps("((lambda (k) (k k)) (kappa (x) (x x)))")
    assert len(p.lambdas) == 2
    assert len(p.calls) == 3
    assert {lam.kind for lam in p.lambdas.values()} == {Kind.PROCEDURE, Kind.CONTINUATION}


def test_labels_are_preorder_from_zero():
    p = parse_cps("((lambda (k) (k k)) (kappa (x) (x x)))")
    assert p.root.label == 0
    assert sorted(list(p.lambdas) + list(p.calls)) == list(range(5))


@pytest.mark.parametrize(
    "src, msg",
    [
        ("(lambda (x) x)", "lambda body is not a call site"),
        ("(lambda (x) (x x))", "expected a call site"),
        ("7", "expected a call site"),
        ("((lambda (x) x) halt)", "lambda body is not a call site"),
        ("((lambda (x x) (x x)) halt halt)", "duplicate"),
        ("(f 1)", "unbound"),
        ("((lambda (x) (x x)) halt", "unterminated"),
        ("((lambda (a b) (a b)) halt)", "arity"),
    ],
)
def test_parse_errors(src, msg):
    with pytest.raises(ParseError, match=msg):
        parse_cps(src)


def test_worst_case_skeleton_free_variable():
    p = parse_cps("((lambda (f1) (f1 0 halt)) (lambda (x1 k) (k (lambda (z c) (z x1 c)))))")
    inner = lam_by_params(p, "z", "c")
    assert {v.name for v in free_vars(inner)} == {"x1"}


def test_free_vars_examples():
    p = parse_cps("((lambda (x1 x2) ((lambda (z) (z x1 x2)) halt)) 1 2)")
    assert {v.name for v in free_vars(lam_by_params(p, "z"))} == {"x1", "x2"}
    q = parse_cps("((lambda (x) (x x)) halt)")
    assert free_vars(lam_by_params(q, "x")) == frozenset()
    r = parse_cps("((lambda (c d) ((lambda (a) ((lambda (b) (b a c)) d)) halt)) 1 2)")
    assert {v.name for v in free_vars(lam_by_params(r, "a"))} == {"c", "d"}


def test_free_vars_disjoint_from_params():
    p = parse_cps("((lambda (x) ((lambda (x) (x x)) x)) halt)")
    for lam in p.lambdas.values():
        assert not (free_vars(lam) & set(lam.params))


def test_if_form():
    p = parse_cps("((lambda (b) (if b (halt 1) (halt 2))) 0)")
    assert any(isinstance(c, If) for c in p.calls.values())


def test_unparse_verbose_labels():
    p = parse_cps("((lambda (k) (k k)) halt)")
    assert "#0" in unparse(p.root, verbose=True)
    assert "#" not in unparse(p.root)


def test_convert_call_passes_halt():
    p = cps_convert("(define (f x) x)\n(f 3)")
    text = unparse(p.root)
    assert "halt" in text and "3" in text


def test_convert_identity_with_intervening_call():
    src = "(define (do-something) 0)\n(define (identity x) (do-something) x)\n(identity 3)\n(identity 4)"
    p = cps_convert(src)
    assert len(p.lambdas) == 6 and len(p.calls) == 7
    # the return point after (do-something) still refers to x
    ret = next(lam for lam in p.lambdas.values()
               if lam.is_continuation and "x" in {v.name for v in lam.free})
    assert isinstance(ret.body, Call)


def test_convert_shares_one_identity_lambda():
    p = cps_convert("(define (id x) x) (id 3) (id 4)")
    procs = [lam for lam in p.lambdas.values() if not lam.is_continuation]
    assert len(procs) == 1
    assert len(procs[0].params) == 2  # x plus the continuation


def test_convert_kinds():
    p = cps_convert("(let ((f (lambda (y) y))) (begin (f 1) (f 2)))")
    user = [lam for lam in p.lambdas.values() if lam.kind is Kind.PROCEDURE]
    assert len(user) == 1


@pytest.mark.parametrize("src", ["(quote a)", "(set! x 1)", "(f 1)", "(define (g) (g))"])
def test_convert_rejects(src):
    with pytest.raises(ConvertError):
        cps_convert(src)


# --- generated programs


def _direct(depth):
    leaf = st.sampled_from(["a", "b", "0", "1"])
    if depth == 0:
        return leaf
    sub = _direct(depth - 1)
    return st.one_of(
        leaf,
        st.tuples(sub, sub).map(lambda t: f"((lambda (a) {t[1]}) {t[0]})"),
        st.tuples(sub, sub).map(lambda t: f"(begin {t[0]} {t[1]})"),
        st.tuples(sub, sub, sub).map(lambda t: f"(if {t[0]} {t[1]} {t[2]})"),
        sub.map(lambda b: f"(lambda (b) {b})"),
    )


programs = _direct(3).map(lambda body: f"((lambda (a b) {body}) 1 (lambda (q) q))")


@settings(max_examples=60, deadline=None)
@given(programs)
def test_labels_injective_and_round_trip(src):
    p = cps_convert(src)
    labels = [lam.label for lam in p.lambdas.values()] + [c.label for c in p.calls.values()]
    assert len(labels) == len(set(labels))
    again = parse_cps(unparse(p.root))
    assert alpha_equivalent(p, again)
    assert canonical(p) == canonical(again)


@settings(max_examples=60, deadline=None)
@given(programs)
def test_continuations_come_from_the_transform(src):
    p = cps_convert(src)
    user = sum(1 for lam in p.lambdas.values() if lam.kind is Kind.PROCEDURE)
    # lambdas in effect position are dropped, never invented
    assert user <= src.count("(lambda ")
    for lam in p.lambdas.values():
        assert isinstance(lam, Lam)
        assert not (free_vars(lam) & set(lam.params))
