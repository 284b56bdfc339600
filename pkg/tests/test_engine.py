import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import fuzz_case, random_database, random_query, random_tree
from oracles import naive_eval
from spq.engine import (
    LexOrderViolation,
    ResourceMeter,
    annotation_owners,
    eval_oracle,
    evaluate,
    extension_iter,
)
from spq.fixtures import load_plan, load_query
from spq.four_cycle import eval_four_cycle
from spq.generate import generate_instance
from spq.plans import GJPlan, InvalidPlan, PseudoTree, PTCPlan, PTCRPlan, PTPlan, RPTPlan, TDPlan, TreeDecomposition, context, exponents
from spq.query import parse_query
from spq.relation import Database, DataMismatch, KRelation, relations_equal
from spq.semiring import BOOL, MINPLUS, NAT, REAL


def path3_db():
    return Database({
        "R1": KRelation(("A", "B"), {("a", "b"): 2, ("a2", "b"): 3}),
        "R2": KRelation(("B", "C"), {("b", "c"): 5, ("b", "c2"): 7}),
    })


def same(a, b, k):
    return relations_equal(a, b, k)


def test_oracle_path3_hand_value():
    assert eval_oracle(load_query("path3"), path3_db(), NAT).scalar(NAT) == 60


def test_oracle_matches_naive_on_corpus():
    for seed in range(40):
        case = fuzz_case(seed, plans_per_class=0, with_rpt=False)
        assert same(eval_oracle(case.query, case.db, case.k), naive_eval(case.query, case.db, case.k), case.k)


def test_empty_relation_annihilates():
    q = load_query("path3")
    db = Database({"R1": path3_db().relations["R1"], "R2": KRelation(("B", "C"))})
    assert len(evaluate(q, db, NAT, GJPlan(("A", "B", "C"))).output) == 0


def test_boolean_path3():
    q = load_query("path3")
    db = Database({n: KRelation(r.schema, {t: True for t in r.entries}) for n, r in path3_db().relations.items()})
    assert evaluate(q, db, BOOL, GJPlan(("B", "A", "C"))).output.scalar(BOOL) is True


def test_gj_path3_constant_space():
    res = evaluate(load_query("path3"), path3_db(), NAT, GJPlan(("A", "B", "C")))
    assert res.output.scalar(NAT) == 60
    assert res.meter.aux_cells_peak <= 1


def test_gj_full_single_atom_copies_input():
    q = parse_query("Q(A,B) <- R(A,B).")
    rel = KRelation(("A", "B"), {(1, 2): 3, (4, 5): 6})
    assert evaluate(q, Database({"R": rel}), NAT, GJPlan(("B", "A"))).output == rel


def test_gj_scalar_cycle_constant_space():
    q = load_query("cycle4")
    db = generate_instance(q, 200, 3)
    res = evaluate(q, db, NAT, GJPlan(q.variables))
    assert same(res.output, eval_oracle(q, db, NAT), NAT)
    assert res.meter.aux_cells_peak <= 1


def test_extension_iter_intersects_supports():
    q = parse_query("Q() <- R(A), S(A).")
    db = Database({"R": KRelation(("A",), {(1,): 1, (2,): 1, (3,): 1}), "S": KRelation(("A",), {(2,): 1, (3,): 1, (5,): 1})})
    assert [v for v, _ in extension_iter(q, db, NAT, "A", {})] == [2, 3]


def test_extension_iter_without_ending_atom_pairs_with_one():
    q = parse_query("Q() <- R(A,B).")
    db = Database({"R": KRelation(("A", "B"), {(1, 2): 7, (1, 3): 9})})
    assert list(extension_iter(q, db, NAT, "A", {})) == [(1, 1)]


def test_extension_iter_fig2_e_given_b():
    q = load_query("fig2")
    db = generate_instance(q, 60, 1)
    b = next(iter(db.relations["R4"].entries))[0]
    got = dict(extension_iter(q, db, NAT, "E", {"B": b}))
    r4 = {e: v for (bb, e), v in db.relations["R4"].entries.items() if bb == b}
    r6 = {e for _, e in db.relations["R6"].entries}
    r7 = {e for e, _ in db.relations["R7"].entries}
    assert got == {e: v for e, v in r4.items() if e in r6 and e in r7}


def test_extension_iter_rejects_bound_target():
    with pytest.raises(ValueError):
        list(extension_iter(load_query("path3"), path3_db(), NAT, "A", {"A": "a"}))


@pytest.mark.parametrize(
    "query, plan",
    [
        ("fig2", "fig3_pt"),
        ("fig2_df", "fig3_pt_df"),
        ("fig4", "fig4_pt"),
        ("fig4", "fig4_td_gj"),
        ("fig4", "fig4_td_pt"),
        ("fig6", "fig6_ptc"),
        ("fig6", "fig6_ptcr"),
        ("fig7", "fig8_ptcr"),
        ("cycle4", "cycle4_td_gj"),
        ("path4", "path4_ptc"),
        ("path4", "path4_pt"),
        ("fig11", "fig12_rpt"),
    ],
)
@pytest.mark.parametrize("k", [NAT, MINPLUS, REAL])
def test_fixture_plans_match_oracle(query, plan, k):
    q, p = load_query(query), load_plan(plan)
    for seed in range(3):
        db = generate_instance(q, 40, seed, k=k)
        res = evaluate(q, db, k, p, assert_lex=True)
        assert same(res.output, eval_oracle(q, db, k), k)
        assert set(annotation_owners(q, p).values()) == {1}
        assert set(annotation_owners(q, p)) == {a.name for a in q.atoms}


def test_scalar_pt_stores_constant_cells():
    q, p = load_query("fig2"), load_plan("fig3_pt")
    peaks = [evaluate(q, generate_instance(q, n, 0), NAT, p).meter.aux_cells_peak for n in (50, 200, 800)]
    assert max(peaks) <= 2 * len(q.variables)


def test_head_df_variant_stores_output_sized_cells():
    q, p = load_query("fig2_df"), load_plan("fig3_pt_df")
    res = evaluate(q, generate_instance(q, 100, 0), NAT, p)
    assert res.meter.aux_cells_peak >= 3 * len(res.output)


def test_path4_caches_reduce_steps_on_star_data():
    q = load_query("path4")
    db = generate_instance(q, 600, 0, "worst_case_hint")
    pt = evaluate(q, db, NAT, load_plan("path4_pt"))
    ptc = evaluate(q, db, NAT, load_plan("path4_ptc"))
    assert same(pt.output, ptc.output, NAT)
    assert ptc.meter.steps * 10 < pt.meter.steps


def test_root_only_cache_matches_pt_meter():
    q = load_query("fig6")
    db = generate_instance(q, 80, 2)
    tree = load_plan("fig6_ptcr").tree
    pt = evaluate(q, db, NAT, PTPlan(tree))
    ptc = evaluate(q, db, NAT, PTCPlan(tree, {tree.root}))
    assert pt.output == ptc.output
    # The only difference is the single root cache entry.
    assert abs(pt.meter.steps - ptc.meter.steps) <= 1
    assert abs(pt.meter.aux_cells_peak - ptc.meter.aux_cells_peak) <= 1


def _full(q, tree):
    return PTCRPlan(tree, {v: len(context(q, tree, v)) for v in q.variables})


def test_full_ptcr_matches_all_cache_ptc_output():
    # Meters differ by design: the resettable cache is filled eagerly over the projected support,
    # the plain cache only with keys the outer loops reach.
    q = load_query("fig6")
    db = generate_instance(q, 80, 4)
    tree = load_plan("fig6_ptcr").tree
    full, all_cached = _full(q, tree), PTCPlan(tree, frozenset(tree.nodes))
    assert evaluate(q, db, NAT, full).output == evaluate(q, db, NAT, all_cached).output
    assert exponents(q, full) == exponents(q, all_cached)


def test_rpt_without_replacements_matches_base_meter():
    q, p = load_query("fig7"), load_plan("fig8_ptcr")
    db = generate_instance(q, 80, 5)
    a = evaluate(q, db, NAT, p)
    b = evaluate(q, db, NAT, RPTPlan(p))
    assert a.output == b.output
    assert (a.meter.steps, a.meter.aux_cells_peak) == (b.meter.steps, b.meter.aux_cells_peak)


def test_single_bag_td_matches_inner_pt():
    q = load_query("fig2")
    db = generate_instance(q, 80, 6)
    p = load_plan("fig3_pt")
    td = TDPlan(TreeDecomposition({"b": set(q.variables)}, {"b": None}, {a.name: "b" for a in q.atoms}), {"b": p})
    a, b = evaluate(q, db, NAT, p), evaluate(q, db, NAT, td)
    assert a.output == b.output
    assert a.meter.steps == b.meter.steps


def test_fig9_three_bag_td_matches_oracle():
    q = load_query("fig9")
    bags = {"r": set("ABCDE"), "m": set("DEFGH"), "c": set("GHIJK")}
    cover = {a.name: next(n for n in ("r", "m", "c") if set(a.vars) <= bags[n]) for a in q.atoms}
    td = TreeDecomposition(bags, {"r": None, "m": "r", "c": "m"}, cover)
    inner = {"r": PTPlan(PseudoTree.chain("ABCDE")), "m": PTPlan(PseudoTree.chain("DEFGH")),
             "c": PTPlan(PseudoTree.chain("GHIJK"))}
    db = generate_instance(q, 25, 0)
    assert same(evaluate(q, db, NAT, TDPlan(td, inner)).output, eval_oracle(q, db, NAT), NAT)


def test_invalid_plan_rejected_before_running():
    with pytest.raises(InvalidPlan):
        evaluate(load_query("path3"), path3_db(), NAT, PTPlan(PseudoTree.chain("AB")))


def test_schema_mismatch():
    with pytest.raises(DataMismatch):
        evaluate(load_query("path3"), Database({"R1": KRelation(("A",), {})}), NAT, GJPlan(("A", "B", "C")))


def test_lex_assertion_fires_on_unsorted_index():
    # Disordering a relation after its index is built must trip the arrival check.
    q, p = load_query("fig7"), load_plan("fig8_ptcr")
    db = generate_instance(q, 60, 0)
    evaluate(q, db, NAT, p, assert_lex=True)
    for key, idx in list(db._indexes.items()):
        idx.levels[0] = {k: tuple(reversed(v)) for k, v in idx.levels[0].items()}
    with pytest.raises(LexOrderViolation):
        evaluate(q, db, NAT, p, assert_lex=True)


def test_meter_counts():
    m = ResourceMeter()
    m.alloc(5)
    m.free(3)
    m.alloc(1)
    assert (m.aux_cells_now, m.aux_cells_peak) == (3, 5)
    assert "aux_cells_peak=5" in m.report()


# ---------------------------------------------------------------- four-cycle


def test_four_cycle_random_instance():
    q = load_query("cycle4")
    db = generate_instance(q, 1000, 11)
    assert same(eval_four_cycle(q, db, NAT).output, eval_oracle(q, db, NAT), NAT)


def test_four_cycle_min_plus():
    q = load_query("cycle4")
    db = generate_instance(q, 300, 2, k=MINPLUS)
    assert same(eval_four_cycle(q, db, MINPLUS).output, eval_oracle(q, db, MINPLUS), MINPLUS)


def test_four_cycle_empty_relation():
    q = load_query("cycle4")
    db = generate_instance(q, 50, 0)
    db.relations["E3"] = KRelation(("A3", "A4"))
    assert eval_four_cycle(q, db, NAT).output.scalar(NAT) == 0


def test_four_cycle_skewed_instances():
    q = load_query("cycle4")
    for seed in range(15):
        rng = random.Random(seed)
        rels = {}
        for a in q.atoms:
            rows = {(0, rng.randrange(30)) for _ in range(25)} | {(rng.randrange(30), rng.randrange(6)) for _ in range(40)}
            rels[a.name] = KRelation(a.vars, {t: rng.randint(1, 3) for t in rows})
        db = Database(rels)
        assert same(eval_four_cycle(q, db, NAT).output, eval_oracle(q, db, NAT), NAT)


def test_four_cycle_relabelled_query():
    q = parse_query("Q() <- P(X,Y), S(Z,Y), T(Z,W), U(X,W).")
    db = generate_instance(q, 200, 3)
    assert same(eval_four_cycle(q, db, NAT).output, eval_oracle(q, db, NAT), NAT)


def test_four_cycle_rejects_other_queries():
    with pytest.raises(Exception):
        eval_four_cycle(load_query("path3"), path3_db(), NAT)


# ---------------------------------------------------------------- generator


def test_generate_sizes_and_determinism():
    q = load_query("path3")
    a = generate_instance(q, 100, 7)
    b = generate_instance(q, 100, 7)
    assert {n: len(r) for n, r in a.relations.items()} == {"R1": 100, "R2": 100}
    assert a.relations == b.relations
    assert generate_instance(q, 100, 8).relations != a.relations


def test_generate_cycle_populated():
    db = generate_instance(load_query("cycle4"), 64, 0)
    assert all(len(r) > 0 for r in db.relations.values())


def test_generate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_instance(load_query("path3"), 0, 0)
    with pytest.raises(ValueError):
        generate_instance(load_query("path3"), 10, 0, "zipf")


def test_generate_star_path4_quadratic_pt():
    q, p = load_query("path4"), load_plan("path4_pt")
    steps = [evaluate(q, generate_instance(q, n, 0, "worst_case_hint"), NAT, p).meter.steps for n in (200, 400)]
    assert 3 < steps[1] / steps[0] < 5


# ---------------------------------------------------------------- fuzz


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**7))
def test_every_plan_matches_oracle(seed):
    case = fuzz_case(seed, plans_per_class=1)
    ref = eval_oracle(case.query, case.db, case.k)
    for p in case.plans:
        res = evaluate(case.query, case.db, case.k, p, assert_lex=True)
        assert same(res.output, ref, case.k), p
        assert set(annotation_owners(case.query, p).values()) == {1}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**7))
def test_real_semiring_within_tolerance(seed):
    rng = random.Random(seed)
    q = random_query(rng)
    db = random_database(rng, q, REAL)
    ref = eval_oracle(q, db, REAL)
    got = evaluate(q, db, REAL, PTPlan(random_tree(rng, q))).output
    assert set(got.entries) == set(ref.entries)
    for t, v in ref.entries.items():
        assert math.isclose(got.entries[t], v, rel_tol=1e-9)
