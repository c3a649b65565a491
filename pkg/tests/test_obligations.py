import dataclasses

import pytest
from hypothesis import assume, given, seed, settings, strategies as st

from conftest import SEED, load, load_text, train_text, verdicts_of
from oracles import brute_valid
from randmachine import Gen
from unitb.evaluator import eval_pred, valuation_count
from unitb.kernel import TRUE, conjuncts, mk_and
from unitb.obligations import (
    action_hypothesis, discharge, machine_obligations, po_feasibility, po_implication,
    po_invariance, po_unless,
)
from unitb.parser import parse_machine, parse_predicate


def small(level, trains="t1, t2"):
    return parse_machine(train_text(level).replace("TRAIN = {t1, t2, t3}", f"TRAIN = {{{trains}}}"))


def named(pos, suffix):
    return next(po for po in pos if po.name.endswith(suffix))


def test_invariance_has_init_and_one_per_event():
    m = load("mutex.ub")
    pos = po_invariance(m)
    assert [po.name for po in pos] == ["Mutex/INIT/inv1", "Mutex/request/INV/inv1",
                                       "Mutex/enter/INV/inv1", "Mutex/exit/INV/inv1"]
    assert all(discharge(po, m).valid for po in pos)


def test_enter_preservation_assumes_the_guard():
    m = load("mutex.ub")
    po = named(po_invariance(m), "enter/INV/inv1")
    guard = parse_predicate("forall (q : Pcs | q /= p . st.q /= cs)", m, {"p": "Pcs"})
    assert guard in po.hypotheses
    assert po.context == (("p", "Pcs"),)


def test_true_invariant_is_trivial():
    m = load_text("machine T\n sets S = {a}\n vars x : S\n init x = a\n invariant i : true\n"
                  " event e then x := a end\nend\n")
    assert all(po.goal == TRUE and discharge(po, m).valid for po in po_invariance(m))


def test_unstrengthened_moveout_collides():
    text = train_text(2).replace("TRAIN = {t1, t2, t3}", "TRAIN = {t1, t2}").replace(
        "when t in trains and location.t in PLATFORM and not Exit in ran(location)",
        "when t in trains and location.t in PLATFORM")
    m = parse_machine(text)
    v = discharge(named(po_invariance(m), "moveout/INV/inv2_1"), m)
    assert v.status == "counter-model"
    after = dict(v.valuation["location'"])
    assert sorted(after.values()).count("Exit") == 2


def test_counter_model_satisfies_hypotheses_and_refutes_goal():
    text = train_text(2).replace("TRAIN = {t1, t2, t3}", "TRAIN = {t1, t2}").replace(
        "when t in trains and location.t in PLATFORM and not Exit in ran(location)",
        "when t in trains and location.t in PLATFORM")
    m = parse_machine(text)
    po = named(po_invariance(m), "moveout/INV/inv2_1")
    v = discharge(po, m)
    cur = {x.name: v.valuation[x.name] for x in m.variables if x.name in v.valuation}
    nxt = {k[:-1]: val for k, val in v.valuation.items() if k.endswith("'")}
    full_nxt = dict(cur)
    full_nxt.update(nxt)
    bound = {n: v.valuation[n] for n, _ in po.context}
    ba = action_hypothesis(po, m)
    for h in po.hypotheses + (ba,):
        assert eval_pred(h, cur, m, bound, full_nxt) is True
    assert eval_pred(po.goal, cur, m, bound, full_nxt) is not True


@pytest.mark.parametrize("label", ["un1_1", "un1_2", "un1_3", "un1_4"])
def test_m1_unless_properties(label):
    m = small(1)
    pos = po_unless(m, m.property_map[label])
    assert len(pos) == len(m.user_events())
    assert all(discharge(po, m).valid for po in pos)


def test_unless_true_is_trivial():
    m = load("mutex.ub")
    prop = dataclasses.replace(m.property_map["prg2"], kind="unless", p=parse_predicate("st.p1 = cs", m),
                               q=TRUE, free=())
    assert all(discharge(po, m).valid for po in po_unless(m, prop))


def test_m3_unless():
    m = load("train", "train_m3.ub")
    assert all(discharge(po, m).valid for po in po_unless(m, m.property_map["un3_1"]))


def test_unless_hypotheses_never_mention_schedules():
    for m in (load("mutex.ub"), small(1), load("train", "train_m3.ub")):
        invs = tuple(i.p for i in m.invariants)
        for prop in m.properties:
            if prop.kind != "unless":
                continue
            for po, ev in zip(po_unless(m, prop), m.user_events()):
                rest = po.hypotheses[2 + len(invs):]
                assert po.hypotheses[2:2 + len(invs)] == invs
                assert rest == conjuncts(mk_and(*rest))
                assert len(rest) == len(conjuncts(ev.guard))


def test_feasibility_of_m1_depart():
    m = small(1)
    po = named(po_feasibility(m), "depart/SCH_FIS")
    assert discharge(po, m).valid


def test_feasibility_is_vacuous_without_coarse_schedule():
    m = load_text("machine F\n sets S = {a, b}\n vars x : S\n init x = a\n"
                  " event e when x = b then x := a end\nend\n")
    assert discharge(po_feasibility(m)[0], m).valid


def test_moveout_without_fine_schedule_is_infeasible():
    m = load("controls", "m2_nofine.ub")
    v = discharge(named(po_feasibility(m), "moveout/SCH_FIS"), m)
    assert v.status == "counter-model"
    assert "Exit" in {b for _, b in v.valuation["location"]}


@pytest.mark.parametrize("level, names", [
    (0, ["M0/prg0_1/s1/C_EN_1'", "M0/prg0_1/s1/NEG_1'"]),
    (1, ["M1/prg1_2/s3/C_EN_2", "M1/prg1_2/s3/NEG_2"]),
    (2, ["M2/prg2_2/s1/C_EN_3", "M2/prg2_2/s1/NEG_3"]),
    (3, ["M3/prg3_1/s1/C_EN_4", "M3/prg3_1/s1/NEG_4", "M3/refines/moveout/F_STR_3"]),
])
def test_named_train_obligations_are_valid(train_ws, level, names):
    verdicts = verdicts_of(train_ws, f"M{level}")
    for n in names:
        assert verdicts[n].valid, n


def test_unscheduled_depart_counter_model(controls_ws):
    verdicts = verdicts_of(controls_ws, "M0u")
    v = next(v for n, v in verdicts.items() if "/C_EN" in n)
    assert v.status == "counter-model"
    assert v.valuation["t"] in v.valuation["trains"]


def test_goal_equal_to_hypothesis_is_valid():
    m = load("mutex.ub")
    p = parse_predicate("st.p1 = waiting", m)
    assert discharge(po_implication(m, "x", p, p, ()), m).valid


def test_skipped_when_over_the_limit():
    m = load("train", "train_m3.ub")
    po = po_invariance(m)[-1]
    v = discharge(po, m, limit=5)
    assert v.status == "skipped" and "limit" in v.reason


def _gen(k):
    g = Gen(k)
    m = parse_machine(g.machine())
    return g, m


@seed(SEED)
@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**6))
def test_discharge_agrees_with_brute_force(k):
    g, m = _gen(k)
    assume(valuation_count(m) <= 72)
    for po in machine_obligations(m):
        assert discharge(po, m).valid == brute_valid(po, m), po.name


@seed(SEED)
@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**6))
def test_extra_hypotheses_keep_valid_obligations_valid(k):
    g, m = _gen(k)
    extra = parse_predicate(g.pred(), m)
    for po in machine_obligations(m):
        if discharge(po, m).valid:
            stronger = dataclasses.replace(po, hypotheses=po.hypotheses + (extra,), action=po.action)
            assert discharge(stronger, m).valid, po.name


@pytest.mark.parametrize("path", [("mutex.ub",), ("mutex3.ub",), ("train", "train_m0.ub")])
def test_corpus_discharge_agrees_with_brute_force(path):
    m = load(*path)
    for po in machine_obligations(m):
        assert discharge(po, m).valid == brute_valid(po, m), po.name
