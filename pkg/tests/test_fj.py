import pytest

from cfa.bench import corpus, gen_paired_closure
from cfa.engine import ANSWER
from cfa.fj import kcfa as fjk
from cfa.fj.concrete import (
    HALT_OFFSET,
    FJHalted,
    FJRuntimeError,
    Kont,
    Obj,
    format_fj_trace,
    inject_fj,
    kont_depth,
    run_fj,
    step_fj,
)
from cfa.fj.syntax import OBJECT, Assign, FJParseError, Return, parse_fj
from cfa.report import fj_report

FJ_CORPUS = [b for b in corpus() if b.lang == "fj"]

SEC4 = """
class B extends Object { B() { super(); } B bar() { B r = this; return r; } }
class F extends Object { F() { super(); } F foo(B b) { F r = this; return r; } }
main {
  B b = new B();
  F f = new F();
  B b1 = b.bar();
  F f1 = f.foo(b1);
  return f1;
}
"""

HIER = """
class P extends Object {
  Object x;
  P(Object x) { super(); this.x = x; }
  Object get() { Object r = this.x; return r; }
  Object who() { Object r = this.x; return r; }
}
class Q extends P {
  Object z;
  Q(Object x, Object z) { super(x); this.z = z; }
  Object get() { Object r = this.z; return r; }
}
class Empty extends Object { Empty() { super(); } }
main {
  Object o1 = new Empty();
  Object o2 = new Object();
  Q q = new Q(o1, o2);
  Object g = q.get();
  Object w = q.who();
  return g;
}
"""


def main_stmts(table):
    return table.main.body


def test_anf_call_sequence():
    t = parse_fj(SEC4)
    tail = main_stmts(t)[2:]
    assert len(tail) == 3
    assert isinstance(tail[0], Assign) and isinstance(tail[1], Assign) and isinstance(tail[2], Return)


def test_nested_call_rejected():
    src = SEC4.replace("B b1 = b.bar();\n  F f1 = f.foo(b1);\n  return f1;", "return f.foo(b.bar());")
    with pytest.raises(FJParseError, match=r"A-normal form"):
        parse_fj(src)
    src2 = SEC4.replace("F f1 = f.foo(b1);", "F f1 = f.foo(b.bar());")
    with pytest.raises(FJParseError, match=r"^\d+:\d+: "):
        parse_fj(src2)


def test_empty_class():
    t = parse_fj("class A extends Object { A(){super();} }\nmain { A a = new A(); return a; }")
    fields, ructor = t.constructor_lookup("A")
    assert fields == ()
    assert ructor([], []) == ({}, ())


def test_unknown_class():
    t = parse_fj(HIER)
    with pytest.raises(KeyError):
        t.constructor_lookup("Nope")


def test_constructor_two_fields():
    fj, _ = gen_paired_closure(1, 1)
    t = parse_fj(fj)
    fields, ructor = t.constructor_lookup("ClosureXY")
    assert [f.name for f in fields] == ["x", "y"]
    delta, record = ructor(["ax", "ay"], ["dx", "dy"])
    assert delta == {"ax": "dx", "ay": "dy"}
    assert [f.name for f, _ in record] == ["x", "y"]


def test_constructor_super_routing():
    t = parse_fj(HIER)
    fields, ructor = t.constructor_lookup("Q")
    assert [f.name for f in fields] == ["x", "z"]
    assert fields[0].owner == "P" and fields[1].owner == "Q"
    delta, _ = ructor(["a_x", "a_z"], ["first", "second"])
    # Q's own assignment takes z; super(x) routes the first argument to P.x
    assert delta == {"a_x": "first", "a_z": "second"}
    assert len(t.field_vector("Q")) == 2


def test_dispatch():
    t = parse_fj(HIER)
    q, p = Obj("Q", ()), Obj("P", ())
    assert t.method_lookup(q, "get").qualname == "Q.get"
    assert t.method_lookup(q, "who").qualname == "P.who"
    assert t.method_lookup(p, "get").qualname == "P.get"
    assert {m.qualname for m in t.amethod_lookup([q, p], "get")} == {"Q.get", "P.get"}
    with pytest.raises(LookupError):
        t.method_lookup(q, "missing")
    with pytest.raises(LookupError):
        t.method_lookup(3, "get")


def test_succ_total_except_returns():
    for prog in FJ_CORPUS:
        t = prog.program
        for lab, s in t.stmts.items():
            if isinstance(s, Return):
                with pytest.raises(KeyError):
                    t.succ(lab)
            else:
                assert t.succ(lab) is not None


def test_object_root():
    t = parse_fj(HIER)
    assert t.is_subclass("Q", OBJECT) and t.is_subclass("Q", "P") and not t.is_subclass("P", "Q")


@pytest.mark.parametrize("bad, msg", [
    ("class A extends Nope { A() { super(); } }\nmain { A a = new A(); return a; }", "Nope"),
    ("class A extends Object { Object x; Object x; A(Object x) { super(); this.x = x; } }\nmain { return a; }",
     "duplicate"),
    ("main { Object o = new Object(); }", "return"),
])
def test_parse_rejects(bad, msg):
    with pytest.raises(FJParseError, match=msg):
        parse_fj(bad)


# --- concrete machine


def test_variable_reference_copies():
    t = parse_fj("main { Object o = new Object(); Object p = o; return p; }")
    tr = run_fj(t, 100)
    s = tr.states[2]
    o, p = t.main.bound[0], t.main.bound[1]
    assert s.store[s.env[p]] is s.store[s.env[o]]
    assert isinstance(tr.result, FJHalted) and tr.result.value.cls == OBJECT


def test_field_round_trip():
    tr = run_fj(parse_fj(HIER), 1000)
    assert tr.result.value.cls == "Object"
    # who() reads P.x which holds the Empty object
    w_state = tr.states[-1]
    w = next(v for v in w_state.env if v.name == "w")
    assert w_state.store[w_state.env[w]].cls == "Empty"


def test_return_rule_writes_caller_variable():
    t = parse_fj(SEC4)
    tr = run_fj(t, 100)
    after = [s for s in tr.states if s.stmt is main_stmts(t)[3]][0]
    b1 = next(v for v in after.env if v.name == "b1")
    assert after.store[after.env[b1]].cls == "B"


def test_nested_calls_depth_two():
    fj, _ = gen_paired_closure(1, 1)
    tr = run_fj(parse_fj(fj), 10_000)
    assert tr.halted
    assert max(kont_depth(s) for s in tr.states) >= 2
    assert kont_depth(tr.states[0]) == 0


def test_paired_fields_at_baz():
    fj, _ = gen_paired_closure(1, 1)
    t = parse_fj(fj)
    tr = run_fj(t, 10_000)
    baz = t.classes["ClosureXY"].methods["baz"]
    entries = [s for s in tr.states if s.stmt is baz.body[0]]
    assert len(entries) == 1
    s = entries[0]
    this = s.store[s.env[baz.this]]
    assert this.cls == "ClosureXY"
    assert s.store[this.field_addr("x")].cls == "OX1"
    assert s.store[this.field_addr("y")].cls == "OY1"


def test_fresh_record_addresses():
    for prog in FJ_CORPUS:
        tr = run_fj(prog.program, 2000)
        for a, b in zip(tr.states, tr.states[1:]):
            if isinstance(a.stmt, Assign) and type(a.stmt.expr).__name__ == "New":
                new = set(b.store) - set(a.store)
                assert set(b.written) == new


def test_concrete_errors():
    t = parse_fj("class A extends Object { A() { super(); } }\n"
                 "main { A a = new A(); Object r = a.m(); return r; }")
    with pytest.raises(FJRuntimeError, match="no method"):
        run_fj(t, 100)
    with pytest.raises(ValueError):
        run_fj(t, -1)


def test_continuation_chain_ends_at_halt():
    for prog in FJ_CORPUS:
        for cso in (False, True):
            tr = run_fj(prog.program, 400, cso)
            for s in tr.states:
                seen, a = set(), s.kont
                while a[0] is not HALT_OFFSET:
                    assert a not in seen
                    seen.add(a)
                    k = s.store[a]
                    assert isinstance(k, Kont)
                    a = k.parent


def test_deterministic_dump():
    t = parse_fj(SEC4)
    assert format_fj_trace(run_fj(t, 100)) == format_fj_trace(run_fj(parse_fj(SEC4), 100))
    assert step_fj(t, inject_fj(t)).stmt is main_stmts(t)[1]


# --- abstract machine


def test_aalloc_examples():
    t = parse_fj(HIER)
    x = t.main.bound[0]
    assert fjk.aalloc_fj(x, (3,)) == (x, (3,))
    get, who = t.classes["P"].methods["get"], t.classes["P"].methods["who"]
    assert fjk.aalloc_kappa(get, (1,)) != fjk.aalloc_kappa(who, (1,))
    assert fjk.atick_fj(5, (3, 2), 2) == (5, 3)
    assert fjk.atick_fj(5, (3,), 0) == ()


def test_field_reference_branches():
    t = parse_fj("""
class A extends Object { Object f; A(Object f) { super(); this.f = f; } }
class E1 extends Object { E1() { super(); } }
class E2 extends Object { E2() { super(); } }
main { Object e = new E1(); A a = new A(e); Object r = a.f; return r; }
""")
    stmt = t.main.body[2]
    env = fjk.MapEnv({v: (v, ()) for v in t.main.bound})
    fa = t.find_field("A", "f")
    o1 = fjk.AObj("A", ((fa, (fa, (1,))),))
    o2 = fjk.AObj("A", ((fa, (fa, (2,))),))
    a = next(v for v in t.main.bound if v.name == "a")
    store = {(a, ()): frozenset({o1, o2}),
             (fa, (1,)): frozenset({fjk.AObj("E1", ())}),
             (fa, (2,)): frozenset({fjk.AObj("E2", ())})}
    succ = fjk.astep_fj(t, (stmt, env, store, (HALT_OFFSET, ()), ()), 1)
    assert len(succ) == 2
    r = next(v for v in t.main.bound if v.name == "r")
    got = {frozenset(o.cls for o in s[2][(r, ())]) for s in succ}
    assert got == {frozenset({"E1"}), frozenset({"E2"})}


def test_k0_single_address_per_variable():
    for prog in FJ_CORPUS:
        res = fjk.explore_widened_fj(prog.program, 0)
        times = {a[1] for a in res.store if a is not ANSWER}
        assert times <= {()}
        kont_addrs = [a for a in res.store if a is not ANSWER and hasattr(a[0], "qualname")]
        assert len(kont_addrs) == len({a[0] for a in kont_addrs})


@pytest.mark.parametrize("prog", FJ_CORPUS, ids=lambda b: b.name)
@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("cso", [False, True])
def test_collapsed_matches_map(prog, k, cso):
    a = fj_report(prog.program, fjk.explore_widened_fj(prog.program, k, False, call_site_only=cso), k)
    b = fj_report(prog.program, fjk.explore_widened_fj(prog.program, k, True, call_site_only=cso), k,
                  collapsed=True)
    assert a.flow_json() == b.flow_json()


@pytest.mark.parametrize("prog", FJ_CORPUS, ids=lambda b: b.name)
@pytest.mark.parametrize("k", [0, 1, 2])
def test_flat_records(prog, k):
    for cso in (False, True):
        assert fjk.flat_record_violations(fjk.explore_widened_fj(prog.program, k, call_site_only=cso)) == []


@pytest.mark.parametrize("prog", FJ_CORPUS, ids=lambda b: b.name)
@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("cso", [False, True])
def test_fj_soundness(prog, k, cso):
    tr = run_fj(prog.program, 2000, cso)
    res = fjk.explore_widened_fj(prog.program, k, call_site_only=cso)
    assert fjk.simulation_violations(tr, res, k, cso) == []


def test_strict_cast_filters():
    t = parse_fj("""
class A extends Object { A() { super(); } }
class B extends Object { B() { super(); } }
class Box extends Object { Object v; Box(Object v) { super(); this.v = v; } }
main {
  A a = new A(); B b = new B();
  Box x = new Box(a); Box y = new Box(b);
  Object o = x.v;
  Object c = (A) o;
  return c;
}
""")
    loose = fjk.explore_widened_fj(t, 0).get(ANSWER)
    strict = fjk.explore_widened_fj(t, 0, strict_cast=True).get(ANSWER)
    assert {o.cls for o in strict} <= {o.cls for o in loose}
    assert all(o.cls == "A" for o in strict)


def test_unfiltered_cast_keeps_everything():
    t = parse_fj("""
class A extends Object { A() { super(); } }
class B extends Object { B() { super(); } }
main { B b = new B(); A c = (A) b; return c; }
""")
    assert {o.cls for o in fjk.explore_widened_fj(t, 1).get(ANSWER)} == {"B"}
    assert fjk.explore_widened_fj(t, 1, strict_cast=True).get(ANSWER) == frozenset()


@pytest.mark.parametrize("n, contexts", [(1, 1), (2, 2), (3, 3), (4, 4)])
def test_baz_contexts(n, contexts):
    fj, _ = gen_paired_closure(n, n)
    t = parse_fj(fj)
    rep = fj_report(t, fjk.explore_widened_fj(t, 1), 1)
    assert rep.contexts_per_method["ClosureXY.baz"] == contexts


def test_points_to_shape():
    fj, _ = gen_paired_closure(2, 2)
    t = parse_fj(fj)
    rep = fj_report(t, fjk.explore_widened_fj(t, 1), 1)
    baz = {c: v for c, v in rep.points_to.items() if c.startswith("ClosureXY.baz|")}
    assert len(baz) == 2
    for slot in baz.values():
        (a,) = [v for name, v in slot.items() if name.startswith("a/")]
        (b,) = [v for name, v in slot.items() if name.startswith("b/")]
        (this,) = [v for name, v in slot.items() if name.startswith("this/")]
        assert a == ["OX1", "OX2"] and b == ["OY1", "OY2"]
        assert [o.split("@")[0] for o in this] == ["ClosureXY"]


def test_store_monotone_and_closed():
    fj, _ = gen_paired_closure(2, 2)
    t = parse_fj(fj)
    snaps = []
    res = fjk.explore_widened_fj(t, 1, observer=lambda s: snaps.append(dict(s)))
    for a, b in zip(snaps, snaps[1:]):
        assert all(v <= b[k] for k, v in a.items())
    again = fjk.explore_widened_fj(t, 1, order="random", seed=3)
    assert set(again.configs) == set(res.configs) and again.store == res.store
