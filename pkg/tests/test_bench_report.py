import csv
import io
import json

import pytest

from cfa import kcfa, mcfa
from cfa.bench import (
    CSV_COLUMNS,
    AnalysisSpec,
    BenchProgram,
    baz_lambda,
    corpus,
    default_budget,
    gen_paired_closure,
    gen_worst_case,
    identity_source,
    inner_lambda,
    load_program,
    parse_analyses,
    rows_to_csv,
    rows_to_json,
    rows_to_text,
    run_analysis,
    run_matrix,
    worst_case_source,
)
from cfa.convert import cps_convert
from cfa.cps import parse_cps
from cfa.cps_concrete import run_concrete
from cfa.engine import Budget
from cfa.fj.concrete import run_fj
from cfa.fj.syntax import parse_fj
from cfa.report import concrete_call_targets, count_envs_for_lambda, cps_report, inlinable_calls


def test_worst_case_shape():
    p = gen_worst_case(1)
    assert {v.name for v in inner_lambda(p).free} == {"x1"}
    assert "(f3 0) (f3 1)" in worst_case_source(3)
    with pytest.raises(ValueError):
        worst_case_source(0)


@pytest.mark.parametrize("n", range(1, 6))
def test_generated_programs_terminate(n):
    assert run_concrete(gen_worst_case(n), 100_000).halted
    fj, scm = gen_paired_closure(n, n)
    assert run_concrete(cps_convert(scm), 100_000).halted
    assert run_fj(parse_fj(fj), 100_000).halted


def test_identity_family():
    for flag in (True, False):
        assert run_concrete(cps_convert(identity_source(flag)), 1000).result.value == 4
    assert "do-something" in identity_source(True)
    assert "do-something" not in identity_source(False)


def test_paired_closure_rejects_zero():
    with pytest.raises(ValueError):
        gen_paired_closure(0, 1)


def _envs(p, analysis, depth, lam):
    spec = AnalysisSpec(analysis, depth)
    return count_envs_for_lambda(run_analysis(p, spec), lam)


def test_count_envs_unreached_is_zero():
    p = parse_cps("((lambda (k) (k 1)) halt)")
    p2 = parse_cps("((lambda (f) (halt 1)) (lambda (x k) (k x)))")
    dead = next(lam for lam in p2.lambdas.values() if len(lam.params) == 2)
    rep = run_analysis(p2, AnalysisSpec("kcfa", 1))
    assert count_envs_for_lambda(rep, dead) == 1  # created, never applied
    unreached = parse_cps("((lambda (f) (halt 1)) (lambda (x k) ((lambda (z) (k z)) x)))")
    inner = next(lam for lam in unreached.lambdas.values() if lam.params[0].name == "z")
    assert count_envs_for_lambda(run_analysis(unreached, AnalysisSpec("kcfa", 1)), inner) == 0
    with pytest.raises(KeyError):
        count_envs_for_lambda(run_analysis(p, AnalysisSpec("kcfa", 1)), 999)


def test_count_envs_goldens():
    p = gen_worst_case(2)
    assert _envs(p, "kcfa", 1, inner_lambda(p)) == 4
    assert _envs(p, "mcfa", 1, inner_lambda(p)) == 2
    p3 = gen_worst_case(3)
    assert _envs(p3, "mcfa", 1, inner_lambda(p3)) <= 4


@pytest.mark.parametrize("n, envs", [(1, 1), (2, 4), (3, 9)])
def test_functional_twin_combinations(n, envs):
    _, scm = gen_paired_closure(n, n)
    p = cps_convert(scm)
    assert _envs(p, "kcfa", 1, baz_lambda(p)) == envs


def test_inlinable_counts():
    mono = parse_cps("((lambda (f) (f 1 halt)) (lambda (x k) (k x)))")
    rep = run_analysis(mono, AnalysisSpec("kcfa", 0))
    # every site but the one entering halt has a single lambda operator
    assert inlinable_calls(rep) == len(mono.calls) - 1
    poly = parse_cps("((lambda (g) (g (lambda (a k) (k a)) (kappa (u) (g (lambda (b k) (k b)) halt))))"
                     " (lambda (f k) (f 1 k)))")
    rep = run_analysis(poly, AnalysisSpec("kcfa", 0))
    assert inlinable_calls(rep) < len(poly.calls)


@pytest.mark.parametrize("spec", ["kcfa:0", "kcfa:1", "mcfa:0", "mcfa:1", "polykcfa:1"])
def test_identity_inlining_against_concrete(spec):
    p = cps_convert(identity_source(True))
    truth = concrete_call_targets(p)
    rep = run_analysis(p, parse_analyses(spec)[0])
    # every runtime target is predicted
    for lab, targets in truth.items():
        assert targets <= set(rep.labels[str(lab)]["operator_flow"])
    exact = sum(1 for t in truth.values() if len(t) == 1)
    assert inlinable_calls(rep) == exact == 6


def test_identity_call_sites_inline_under_m1():
    p = cps_convert(identity_source(True))
    rep = run_analysis(p, AnalysisSpec("mcfa", 1))
    id_sites = [c.label for c in p.calls.values() if getattr(c.fn, "name", None) == "identity"]
    assert len(id_sites) == 2
    for lab in id_sites:
        assert len(rep.labels[str(lab)]["operator_flow"]) == 1


def test_empty_matrix():
    assert run_matrix([], parse_analyses("kcfa:1")) == []
    assert rows_to_csv([]).strip() == ",".join(CSV_COLUMNS)
    assert json.loads(rows_to_json([])) == []
    assert rows_to_text([]) == ""


def _family(ns):
    return [BenchProgram(f"worst-case-{n}", "cps", worst_case_source(n), gen_worst_case(n)) for n in ns]


def test_matrix_rows_and_monotone_cost():
    specs = parse_analyses("kcfa:1,mcfa:1,polykcfa:1,kcfa:0")
    rows = run_matrix(_family(range(1, 5)), specs, Budget(max_ms=60_000))
    assert len(rows) == 16
    for spec in specs:
        counts = [r.transfers for r in rows if r.analysis == spec.name and r.k_or_m == spec.param]
        assert counts == sorted(counts)
    for r in rows:
        assert r.transfers >= 0 and r.configs >= 0 and not r.timeout


def test_k0_m0_rows_agree():
    rows = run_matrix(corpus(), parse_analyses("kcfa:0,mcfa:0"))
    by = {}
    for r in rows:
        by.setdefault(r.program, {})[r.analysis] = r
    for name, pair in by.items():
        assert pair["kcfa"].flows == pair["mcfa"].flows, name
        assert pair["kcfa"].inlinable == pair["mcfa"].inlinable


def test_csv_and_json_outputs():
    rows = run_matrix(_family([1, 2]), parse_analyses("kcfa:1,mcfa:1"))
    table = list(csv.reader(io.StringIO(rows_to_csv(rows))))
    assert table[0] == CSV_COLUMNS and len(table) == 5
    assert table[1][:5] == ["worst-case-1", str(gen_worst_case(1).size), "kcfa", "1", ""]
    assert table[2][4] == "top-m-frames"
    data = json.loads(rows_to_json(rows, timing=False))
    assert "time_ms" not in data[0] and data[0]["store_joins"] > 0


def test_timeout_is_infinity():
    rows = run_matrix(_family([3]), parse_analyses("kcfa:1"), Budget(max_transfers=2))
    assert rows[0].timeout
    assert rows_to_csv(rows).splitlines()[1].split(",")[-2:] == ["inf", "True"]
    assert "∞" in rows_to_text(rows)


def test_language_mismatch():
    fj, _ = gen_paired_closure(1, 1)
    with pytest.raises(ValueError):
        run_analysis(parse_fj(fj), AnalysisSpec("kcfa", 1))
    with pytest.raises(ValueError):
        run_analysis(gen_worst_case(1), AnalysisSpec("fj-kcfa", 1))
    rows = run_matrix([BenchProgram("p", "fj", fj, parse_fj(fj))], parse_analyses("kcfa:1,fj-kcfa:1"))
    assert [r.analysis for r in rows] == ["fj-kcfa"]


@pytest.mark.parametrize("text", ["nope:1", "kcfa:x", "kcfa:-1"])
def test_parse_analyses_errors(text):
    with pytest.raises(ValueError):
        parse_analyses(text)


def test_parse_analyses_default_depth():
    assert parse_analyses("kcfa, mcfa:2") == [AnalysisSpec("kcfa", 1), AnalysisSpec("mcfa", 2)]


def test_default_budget_env(monkeypatch):
    monkeypatch.setenv("CFA_BUDGET_MS", "1234")
    assert default_budget().max_ms == 1234.0
    monkeypatch.delenv("CFA_BUDGET_MS")
    assert default_budget().max_ms == 60_000.0


def test_corpus_contents():
    progs = corpus()
    assert len(progs) >= 10
    assert {p.lang for p in progs} == {"cps", "fj"}
    assert len(corpus(include_generated=False)) < len(progs)
    with pytest.raises(ValueError):
        load_program("", "python")


def test_report_determinism_and_formats():
    p = cps_convert(identity_source(True))
    a = cps_report(p, kcfa.explore_widened(p, 1), "kcfa", 1)
    b = cps_report(p, kcfa.explore_widened(p, 1, order="lifo"), "kcfa", 1)
    assert a.flow_json() == b.flow_json()
    d = json.loads(a.to_json(stats=False))
    assert d["analysis"] == "kcfa" and d["k"] == 1 and d["answer"] == ["4"]
    assert "stats" not in d
    m = cps_report(p, mcfa.explore_widened_mcfa(p, 1), "mcfa", 1, "top-m-frames")
    dm = json.loads(m.to_json())
    assert dm["m"] == 1 and dm["policy"] == "top-m-frames"
    assert a.to_csv().splitlines()[0] == "kind,key,values"
    assert a.to_text().startswith("kcfa k=1")
