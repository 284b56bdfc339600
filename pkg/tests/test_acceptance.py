"""Acceptance criteria 1-7. Each test records one PASS/FAIL line, printed in the pytest summary.

Run standalone with ``python tests/test_acceptance.py`` to print only these lines.
"""

from __future__ import annotations

import functools
import random
import time
from fractions import Fraction

import pytest

from corpus import fuzz_case, is_four_cycle, random_query
from oracles import cover_by_vertices
from spq.engine import LexOrderViolation, eval_oracle, evaluate
from spq.fixtures import load_plan, load_query
from spq.four_cycle import eval_four_cycle
from spq.plans import PTCPlan, PTCRPlan, PTPlan, TDPlan, TreeDecomposition, context, exponents
from spq.query import rho_star
from spq.relation import format_tsv, relations_equal
from spq.search import SearchBudget, find_plan, pareto_frontier
from spq.slope import four_cycle_runner, plan_runner, run_slope

F = Fraction
FUZZ_CASES = 500
SLOPE_SIZES = [2**i for i in range(10, 17)]
RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS[n] = line
    print(line)


# ---------------------------------------------------------------- fuzz corpus


@functools.lru_cache(maxsize=1)
def fuzz_run():
    """Every plan of every case against the oracle, with the lexicographic check on."""
    start = time.perf_counter()
    stats = {"cases": 0, "runs": 0, "mismatch": [], "lex": [], "per_class": {}}
    for seed in range(FUZZ_CASES):
        case = fuzz_case(seed)
        ref = eval_oracle(case.query, case.db, case.k)
        stats["cases"] += 1
        runs = [(p.kind if p.kind != "td" else f"td[{p.inner[0][1].kind}]", p) for p in case.plans]
        for cls, p in runs:
            stats["per_class"][cls] = stats["per_class"].get(cls, 0) + 1
            try:
                got = evaluate(case.query, case.db, case.k, p, assert_lex=True).output
            except LexOrderViolation as exc:
                stats["lex"].append((seed, p, str(exc)))
                got = evaluate(case.query, case.db, case.k, p).output
            stats["runs"] += 1
            if not relations_equal(got, ref, case.k):
                stats["mismatch"].append((seed, p))
        if is_four_cycle(case.query):
            stats["per_class"]["four_cycle"] = stats["per_class"].get("four_cycle", 0) + 1
            stats["runs"] += 1
            if not relations_equal(eval_four_cycle(case.query, case.db, case.k).output, ref, case.k):
                stats["mismatch"].append((seed, "four_cycle"))
    stats["seconds"] = time.perf_counter() - start
    return stats


def test_criterion_1_oracle_fuzz():
    st = fuzz_run()
    ok = st["cases"] >= 500 and not st["mismatch"]
    classes = " ".join(f"{c}={n}" for c, n in sorted(st["per_class"].items()))
    record(1, ok, f"{st['cases']} instances, {st['runs']} evaluations ({classes}), "
                  f"{len(st['mismatch'])} mismatches, {st['seconds']:.0f}s")
    assert ok, st["mismatch"][:5]


# ---------------------------------------------------------------- rho*


def test_criterion_2_rho_star():
    start = time.perf_counter()
    fig2 = rho_star(load_query("fig2"), load_query("fig2").variables).objective
    fig6 = rho_star(load_query("fig6"), "ABD").objective
    disagree = []
    for seed in range(100):
        rng = random.Random(10_000 + seed)
        q = random_query(rng, max_vars=6, max_atoms=6)
        targets = [q.variables, rng.sample(q.variables, rng.randint(1, len(q.variables)))]
        for t in targets:
            if rho_star(q, t).objective != cover_by_vertices(q, t):
                disagree.append((seed, t))
    ok = fig2 == 4 and fig6 == F(3, 2) and not disagree
    record(2, ok, f"rho*(fig2, all vars)={fig2}, rho*(fig6, ABD)={fig6}, 100 random queries x 2 targets, "
                  f"{len(disagree)} disagreements, {time.perf_counter() - start:.0f}s")
    assert ok


# ---------------------------------------------------------------- exponents


def _points(q, cls):
    return {(e.s, e.t) for e, _ in pareto_frontier(q, cls).points}


def test_criterion_3_exponents():
    start = time.perf_counter()
    checks = []

    def exp(query, plan, want):
        got = tuple(exponents(load_query(query), load_plan(plan)))
        checks.append((f"{plan}={got[0]},{got[1]}", got == tuple(F(x) for x in want)))

    exp("fig2", "fig3_pt", (0, F(3, 2)))
    exp("fig2_df", "fig3_pt_df", (2, 2))
    exp("path4", "path4_pt", (0, 2))
    exp("fig4", "fig4_td_gj", (1, F(5, 2)))
    exp("fig4", "fig4_td_pt", (1, 2))
    exp("fig4", "fig4_pt", (0, 2))
    exp("fig6", "fig6_ptc", (F(3, 2), 2))
    exp("fig6", "fig6_ptcr", (1, 2))
    exp("cycle4", "cycle4_td_gj", (2, 2))
    exp("fig11", "fig12_rpt", (1, F(5, 2)))
    p4, p3 = load_query("path4"), load_query("path3")
    checks.append(("path4 td[gj] has (1,1)", (1, 1) in _points(p4, "td[gj]")))
    checks.append(("path4 pt frontier {(0,2)}", _points(p4, "pt") == {(0, 2)}))
    checks.append(("path3 pt has (0,1)", (0, 1) in _points(p3, "pt")))
    checks.append(("path3 td[gj] frontier {(1,1),(0,2)}", _points(p3, "td[gj]") == {(1, 1), (0, 2)}))
    bad = [name for name, ok in checks if not ok]
    record(3, not bad, f"{len(checks) - len(bad)}/{len(checks)} exact matches"
                       f"{'; failed: ' + ', '.join(bad) if bad else ''}, {time.perf_counter() - start:.0f}s")
    assert not bad


# ---------------------------------------------------------------- separations


def test_criterion_4_separations():
    start = time.perf_counter()
    q9, q11 = load_query("fig9"), load_query("fig11")
    budget9 = SearchBudget(max_seconds=1800)
    none9, ex9 = find_plan(q9, "ptcr", 1, 2, budget9)
    a, _ = find_plan(q9, "ptcr", F(3, 2), 2, budget9)
    b, _ = find_plan(q9, "ptcr", 1, F(5, 2), budget9)
    fig9_ok = none9 is None and ex9 and a is not None and b is not None
    none11, ex11 = find_plan(q11, "ptcr", 1, F(5, 2), SearchBudget(max_seconds=7200))
    if none11 is None and not ex11:
        record(4, False, "fig11 ptcr search hit its budget; reported as skipped-nonexhaustive")
        pytest.skip("fig11 ptcr search not exhaustive within budget")
    fig11_ok = none11 is None and ex11
    ok = fig9_ok and fig11_ok
    record(4, ok, f"fig9 ptcr: none with s<=1,t<=2 (exhaustive={ex9}), (3/2,2) found={a is not None}, "
                  f"(1,5/2) found={b is not None}; fig11 ptcr: none with s<=1,t<=5/2 (exhaustive={ex11}), "
                  f"{time.perf_counter() - start:.0f}s")
    assert ok


# ---------------------------------------------------------------- slopes


def _slope(query, plan, predicted, shape="random"):
    q = load_query(query)
    runner = four_cycle_runner(q) if plan is None else plan_runner(q, load_plan(plan))
    return run_slope(q, runner, SLOPE_SIZES, predicted, seed=0, shape=shape)


def test_criterion_5_slopes():
    start = time.perf_counter()
    ptcr = _slope("fig6", "fig6_ptcr", (F(1), F(2)))
    ptcr_star = _slope("fig6", "fig6_ptcr", (F(1), F(2)), "worst_case_hint")
    ptc = _slope("path4", "path4_ptc", (F(1), F(1)), "worst_case_hint")
    scalar = _slope("fig2", "fig3_pt", (F(0), F(3, 2)))
    cycle = _slope("cycle4", None, (F(1, 2), F(3, 2)))
    checks = [
        ("fig6 ptcr aux", ptcr.space_slope, 1.25),
        ("fig6 ptcr steps", ptcr.time_slope, 2.25),
        ("fig6 ptcr star aux", ptcr_star.space_slope, 1.25),
        ("fig6 ptcr star steps", ptcr_star.time_slope, 2.25),
        ("path4 ptc steps", ptc.time_slope, 1.25),
        ("fig2 pt aux", scalar.space_slope, 0.1),
        ("four-cycle aux", cycle.space_slope, 0.75),
        ("four-cycle steps", cycle.time_slope, 1.75),
    ]
    bad = [c for c in checks if c[1] > c[2]]
    detail = ", ".join(f"{name}={v:.2f}<={b}" for name, v, b in checks)
    record(5, not bad, f"{detail}, {time.perf_counter() - start:.0f}s")
    assert not bad


# ---------------------------------------------------------------- lex assertion


def test_criterion_6_lex_assertion():
    st = fuzz_run()
    ok = not st["lex"]
    record(6, ok, f"lexicographic-arrival check on across {st['runs']} evaluations, {len(st['lex'])} violations")
    assert ok, st["lex"][:5]


# ---------------------------------------------------------------- cascades


def _single_bag(q, inner):
    td = TreeDecomposition({"b": set(q.variables)}, {"b": None}, {a.name: "b" for a in q.atoms})
    return TDPlan(td, {"b": inner})


def test_criterion_7_cascades():
    start = time.perf_counter()
    failures = []
    compared = 0
    for seed in range(FUZZ_CASES):
        case = fuzz_case(seed, plans_per_class=1, with_rpt=False)
        q, db, k = case.query, case.db, case.k

        def tsv(plan):
            return format_tsv(evaluate(q, db, k, plan).output, k)

        tree = next(p.tree for p in case.plans if isinstance(p, PTPlan))
        pt = PTPlan(tree)
        root_only = PTCPlan(tree, {tree.root})
        all_cached = PTCPlan(tree, frozenset(tree.nodes))
        full = PTCRPlan(tree, {v: len(context(q, tree, v)) for v in q.variables})
        base = tsv(pt)
        pairs = [
            ("ptc{root}=pt", tsv(root_only) == base),
            ("ptcr full=ptc all", tsv(full) == tsv(all_cached) and exponents(q, full) == exponents(q, all_cached)),
            ("single-bag td[pt]=pt", tsv(_single_bag(q, pt)) == base),
        ]
        ptcr = next(p for p in case.plans if isinstance(p, PTCRPlan))
        pairs.append(("single-bag td[ptcr]=ptcr", tsv(_single_bag(q, ptcr)) == tsv(ptcr)))
        compared += len(pairs)
        failures += [(seed, name) for name, ok in pairs if not ok]
    record(7, not failures, f"{compared} byte-level comparisons on {FUZZ_CASES} instances, "
                            f"{len(failures)} differences, {time.perf_counter() - start:.0f}s")
    assert not failures, failures[:5]


if __name__ == "__main__":
    for fn in (test_criterion_1_oracle_fuzz, test_criterion_2_rho_star, test_criterion_3_exponents,
               test_criterion_4_separations, test_criterion_5_slopes, test_criterion_6_lex_assertion,
               test_criterion_7_cascades):
        try:
            fn()
        except (AssertionError, pytest.skip.Exception):
            pass
