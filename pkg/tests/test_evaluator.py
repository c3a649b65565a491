import dataclasses

import pytest
from hypothesis import given, seed, settings, strategies as st

from conftest import SEED, load, load_text
from randmachine import Gen
from unitb.evaluator import (
    BOT, WDError, enumerate_valuations, eval_expr, eval_pred, successors,
)
from unitb.kernel import mk, mk_or
from unitb.parser import parse_expression, parse_machine, parse_predicate
from unitb.semantics import build_ts

EMPTY = {"trains": frozenset(), "location": frozenset()}


def expr(text, m):
    return parse_expression(text, m)[0]


@pytest.fixture(scope="module")
def m1():
    return load("train", "train_m1.ub")


def test_application_outside_domain_is_bottom(m1):
    assert eval_pred(parse_predicate("location.t1 = Exit", m1), EMPTY, m1) is BOT


def test_wd_bracket_turns_bottom_into_false(m1):
    assert eval_pred(parse_predicate("wd(location.t1 = Exit)", m1), EMPTY, m1) is False
    assert eval_pred(parse_predicate("not wd(location.t1 = Exit)", m1), EMPTY, m1) is True


def test_kleene_connectives_absorb_bottom(m1):
    assert eval_pred(parse_predicate("false and location.t1 = Exit", m1), EMPTY, m1) is False
    assert eval_pred(parse_predicate("true or location.t1 = Exit", m1), EMPTY, m1) is True
    assert eval_pred(parse_predicate("true and location.t1 = Exit", m1), EMPTY, m1) is BOT


def test_inverse_image_of_missing_value_is_empty():
    m4 = load("train", "train_m4.ub")
    val = {"queue": frozenset({("P1", 1)}), "head": 0}
    assert eval_expr(expr("img(inv(queue), {head})", m4), val, m4) == frozenset()
    val = {"queue": frozenset({("P1", 1)}), "head": 1}
    assert eval_expr(expr("img(inv(queue), {head})", m4), val, m4) == frozenset({"P1"})


def test_domain_of_empty_function(m1):
    assert eval_expr(expr("dom(location)", m1), EMPTY, m1) == frozenset()


@pytest.mark.parametrize("text, count", [
    ("vars st : Pcs --> STATE", 9),
    ("vars b : BOOL", 2),
    ("vars y : set(STATE)", 8),
    ("vars f : Pcs +-> Pcs", 9),
])
def test_valuation_counts(text, count):
    m = load_text(f"machine V\n sets Pcs = {{p1, p2}} ; STATE = {{idle, waiting, cs}} ; BOOL = {{no, yes}}\n"
                  f" {text}\nend\n")
    vals = list(enumerate_valuations(m))
    assert len(vals) == count
    assert len({tuple(sorted(v.items())) for v in vals}) == count


def test_mutex_valuations():
    assert len(list(enumerate_valuations(load("mutex.ub")))) == 9


def test_m0_successors_from_empty():
    m0 = load("train", "train_m0.ub")
    out = successors(m0, {"trains": frozenset()})
    assert [lab for lab, _ in out] == ["arrive[t1]", "arrive[t2]", "arrive[t3]",
                                       "depart[t1]", "depart[t2]", "depart[t3]", "Skip"]
    assert out[0][1] == {"trains": frozenset({"t1"})}
    assert all(s == {"trains": frozenset()} for lab, s in out[3:])


def test_skip_keeps_the_state():
    m = load("mutex.ub")
    s = {"st": frozenset({("p1", "cs"), ("p2", "waiting")})}
    assert ("Skip", s) in successors(m, s)


CHOICE = "machine C\n sets S = {a, b}\n vars x : S ; y : set(S)\n init x = a and y = {}\n event e then x :: y end\nend\n"


def test_choice_from_empty_set_has_no_successor():
    m = load_text(CHOICE)
    assert [lab for lab, _ in successors(m, {"x": "a", "y": frozenset()})] == ["Skip"]
    both = successors(m, {"x": "a", "y": frozenset("ab")})
    assert sorted(s["x"] for lab, s in both if lab == "e") == ["a", "b"]


def test_ill_defined_guard_is_an_error():
    m = load_text("machine C\n sets S = {a, b}\n vars f : S +-> S\n init f = {}\n"
                  " event e when f.a = a then f := {} end\nend\n")
    with pytest.raises(WDError) as info:
        successors(m, {"f": frozenset()})
    assert info.value.state == {"f": frozenset()}
    assert [lab for lab, _ in successors(m, {"f": frozenset()}, strict=False)] == ["Skip"]


def test_bounded_arithmetic_overflow_is_ill_defined_without_mod():
    m = load_text("machine C\n sets N = int 0 .. 2\n vars n : N\n init n = 0\n"
                  " event up when n = 2 then n := n + 1 end\nend\n")
    with pytest.raises(WDError):
        successors(m, {"n": 2})


def test_bounded_arithmetic_wraps_with_mod():
    m = load_text("machine C\n sets N = int 0 .. 2 mod\n vars n : N\n init n = 0\n"
                  " event up then n := n + 1 end\nend\n")
    assert successors(m, {"n": 2})[0] == ("up", {"n": 0})
    assert eval_expr(expr("n - 1", m), {"n": 0}, m) == 2


def test_successors_are_deterministic():
    m = load("train", "train_m3.ub")
    ts = build_ts(m)
    for s in ts.states[:50]:
        assert successors(m, s) == successors(m, dict(s))


def _random_pred(k):
    g = Gen(k)
    m = parse_machine(g.machine())
    return g, m


@seed(SEED)
@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**6), st.data())
def test_wd_bracket_is_two_valued(k, data):
    g, m = _random_pred(k)
    p = parse_predicate(g.pred(), m)
    vals = list(enumerate_valuations(m))
    s = data.draw(st.sampled_from(vals))
    v = eval_pred(mk("wd", p), s, m)
    assert v is True or v is False
    if v is True:
        assert eval_pred(p, s, m) is True


def _weakened(m, name, extra):
    events = tuple(dataclasses.replace(e, guard=mk_or(e.guard, extra)) if e.name == name else e
                   for e in m.events)
    return dataclasses.replace(m, events=events)


@pytest.mark.parametrize("path", [("mutex.ub",), ("train", "train_m1.ub"), ("train", "train_m3.ub")])
def test_weakening_a_guard_keeps_every_successor(path):
    m = load(*path)
    states = build_ts(m).states[:40]
    for ev in m.user_events():
        for other in m.user_events():
            if other.name == ev.name or set(other.indices) != set(ev.indices):
                continue
            w = _weakened(m, ev.name, other.guard)
            for s in states:
                before = successors(m, s, strict=False)
                after = successors(w, s, strict=False)
                assert all(pair in after for pair in before)
