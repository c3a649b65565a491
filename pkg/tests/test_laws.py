"""Algebraic laws of the logic, each over 500 seeded random machines."""
import dataclasses

from hypothesis import given, seed, settings, strategies as st

from conftest import SEED
from randmachine import Gen
from unitb.derivations import Certifier
from unitb.evaluator import enumerate_valuations, eval_pred
from unitb.kernel import TRUE, mk, mk_and, mk_not
from unitb.obligations import discharge, po_unless
from unitb.parser import parse_machine, parse_predicate, pretty
from unitb.semantics import build_ts, check_leadsto, check_transient, check_unless

CASES = 500
SEEDS = st.integers(0, 10**6)


def law(f):
    return seed(SEED)(settings(max_examples=CASES, deadline=None)(given(SEEDS)(f)))


def random_system(k):
    g = Gen(k)
    m = parse_machine(g.machine())
    return g, m


def extended(k, make_lines):
    """Re-generate machine ``k`` and append the lines ``make_lines(g, m)`` returns."""
    g = Gen(k)
    text = g.machine()
    m = parse_machine(text)
    extra = make_lines(g, m)
    head, _, _ = text.rpartition("end\n")
    return parse_machine(head + "".join(f"  {line}\n" for line in extra) + "end\n")


@law
def test_transient_is_leadsto_true_to_negation(k):
    g, m = random_system(k)
    p = parse_predicate(f"wd({g.pred()})", m)
    ts = build_ts(m)
    assert check_transient(ts, p).holds == check_leadsto(ts, TRUE, mk_not(p)).holds


@law
def test_unless_true_always_holds(k):
    g, m = random_system(k)
    p = parse_predicate(g.pred(), m)
    assert check_unless(build_ts(m), p, TRUE).holds
    prop = next(pr for pr in m.properties if pr.kind == "unless")
    stated = dataclasses.replace(prop, label="law", p=p, q=TRUE, free=())
    assert all(discharge(po, m).valid for po in po_unless(m, stated))


@law
def test_leadsto_is_reflexive(k):
    def lines(g, m):
        p = g.pred()
        return [f"property refl : {p} ~> {p}", "derivation refl by implication"]

    m = extended(k, lines)
    prop = m.property_map["refl"]
    assert check_leadsto(build_ts(m), prop.p, prop.q).holds
    assert Certifier(m).check("refl").valid


def _leaf(g, m):
    options = ["implication", "mc"]
    unless = [p.label for p in m.properties if p.kind == "unless" and not p.free]
    plain = [e.name for e in m.user_events() if not e.indices]
    if unless and plain:
        options.append(f"ensure({g.rng.choice(unless)}) ; transient via falsifies {g.rng.choice(plain)}")
    return g.rng.choice(options)


@law
def test_split_off_skip_is_an_equivalence(k):
    def lines(g, m):
        p, q = g.pred(), g.pred()
        s = _leaf(g, m)
        return [f"property lsplit : {p} ~> {q}", f"property ldirect : ({p}) and not ({q}) ~> {q}",
                f"derivation lsplit by split ; {s}", f"derivation ldirect by {s}"]

    m = extended(k, lines)
    cert = Certifier(m)
    assert cert.check("lsplit").valid == cert.check("ldirect").valid
    ts = build_ts(m)
    a, b = m.property_map["lsplit"], m.property_map["ldirect"]
    via_rule = check_leadsto(ts, a.p, a.q).holds
    assert via_rule == check_leadsto(ts, mk_and(a.p, mk_not(a.q)), a.q).holds
    assert via_rule == check_leadsto(ts, b.p, b.q).holds


@law
def test_wd_bracket_is_two_valued(k):
    g, m = random_system(k)
    p = parse_predicate(g.pred(), m)
    bracket = mk("wd", p)
    for s in enumerate_valuations(m):
        v = eval_pred(bracket, s, m)
        assert v is True or v is False
        assert v == (eval_pred(p, s, m) is True)


@law
def test_parser_round_trip(k):
    m = parse_machine(Gen(k).machine())
    text = pretty(m)
    again = parse_machine(text)
    assert again == m
    assert pretty(again) == text
