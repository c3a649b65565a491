import pytest
from hypothesis import given, seed, settings, strategies as st

from conftest import SEED, load, load_text, train_text
from oracles import brute_reachable, lasso_problems
from randmachine import Gen
from unitb.kernel import FALSE, TRUE, mk_not, mk_or
from unitb.parser import parse_machine, parse_predicate
from unitb.semantics import (
    build_ts, check_invariant, check_leadsto, check_property, check_transient,
    check_unless, cycle_schedule_consistent, find_fair_lasso, naive_fair_cycle_exists,
    schedule_violated,
)


def small_train(level, trains=("t1", "t2")):
    return parse_machine(train_text(level).replace("TRAIN = {t1, t2, t3}",
                                                   f"TRAIN = {{{', '.join(trains)}}}"))


def props(m):
    return m.property_map


def key(s):
    return tuple(sorted(s.items(), key=lambda kv: kv[0]))


@pytest.fixture(scope="module")
def mutex():
    m = load("mutex.ub")
    return m, build_ts(m)


def test_mutex_reachable_states(mutex):
    m, ts = mutex
    assert ts.size == 8
    both = {"st": frozenset({("p1", "cs"), ("p2", "cs")})}
    assert both not in ts.states


@pytest.mark.parametrize("path", [("mutex.ub",), ("mutex3.ub",), ("mutex_weakfair.ub",),
                                  ("train", "train_m0.ub"), ("train", "train_m1.ub")])
def test_reachable_states_match_brute_force(path):
    m = load(*path)
    ts = build_ts(m)
    seen, edges = brute_reachable(m)
    assert {key(s) for s in ts.states} == seen
    mine = {(key(ts.states[i]), lab, key(ts.states[j])) for i, out in enumerate(ts.edges) for lab, j in out}
    assert mine == edges


def test_m0_with_two_trains_has_four_states():
    assert build_ts(small_train(0)).size == 4


def test_false_init_gives_empty_system():
    ts = build_ts(load_text("machine Z\n sets S = {a}\n vars x : S\n init false\nend\n"))
    assert ts.size == 0 and ts.initial == []


def test_every_state_has_an_outgoing_edge(mutex):
    _, ts = mutex
    assert all(any(lab == "Skip" and j == i for lab, j in out) for i, out in enumerate(ts.edges))


def test_state_numbering_is_deterministic():
    m = load("train", "train_m2.ub")
    a, b = build_ts(m), build_ts(m)
    assert a.states == b.states and a.edges == b.edges


def test_mutex_invariant_holds(mutex):
    m, ts = mutex
    assert check_property(ts, props(m)["inv1"]).holds


def test_false_invariant_fails_at_an_initial_state(mutex):
    _, ts = mutex
    r = check_invariant(ts, FALSE)
    assert not r.holds and len(r.path) == 1 and r.path[0] in ts.initial


def test_no_collision_invariant_on_small_m2():
    m = small_train(2)
    assert check_invariant(build_ts(m), props(m)["inv2_1"].p).holds


def test_unless_in_m1():
    m = load("train", "train_m1.ub")
    assert check_property(build_ts(m), props(m)["un1_4"]).holds


def test_unless_true_always_holds(mutex):
    m, ts = mutex
    p = parse_predicate("st.p1 = waiting", m)
    assert check_unless(ts, p, TRUE).holds


def test_unless_counterexample_is_the_violating_edge():
    m = load_text("machine U\n sets N = int 0 .. 1\n vars x : N\n init x = 1\n event down then x := 0 end\nend\n")
    ts = build_ts(m)
    r = check_unless(ts, parse_predicate("x = 1", m), FALSE)
    assert not r.holds
    a, lab, b = r.edge
    assert (ts.states[a], lab, ts.states[b]) == ({"x": 1}, "down", {"x": 0})


def test_skip_loop_at_critical_section_violates_exit(mutex):
    m, ts = mutex
    s = next(i for i, v in enumerate(ts.states) if ("p1", "cs") in v["st"])
    per, ok = cycle_schedule_consistent(ts, [s, "Skip", s])
    assert per["exit[p1]"] and not ok


def test_exit_edge_discharges_the_schedule(mutex):
    m, ts = mutex
    s = next(i for i, v in enumerate(ts.states) if v["st"] == frozenset({("p1", "cs"), ("p2", "idle")}))
    j = next(j for lab, j in ts.edges[s] if lab == "exit[p1]")
    per, _ = cycle_schedule_consistent(ts, [s, "exit[p1]"] + _path(ts, j, s))
    assert not per["exit[p1]"]


def _path(ts, a, b):
    """Shortest [a, label, ..., b] path in the system."""
    prev = {a: None}
    queue = [a]
    while queue:
        x = queue.pop(0)
        if x == b:
            break
        for lab, y in ts.edges[x]:
            if y not in prev:
                prev[y] = (x, lab)
                queue.append(y)
    out = [b]
    while prev[out[0]] is not None:
        x, lab = prev[out[0]]
        out[:0] = [x, lab]
    return out


def test_mutex_progress_has_no_fair_lasso(mutex):
    m, ts = mutex
    start = {i for i, v in enumerate(ts.states) if ("p1", "waiting") in v["st"]}
    forbid = [("p1", "cs") in v["st"] for v in ts.states]
    assert find_fair_lasso(ts, start, forbid) is None
    assert check_property(ts, props(m)["prg1"]).holds
    assert check_property(ts, props(m)["prg2"]).holds


def test_weak_fairness_starves_a_process():
    m = load("mutex_weakfair.ub")
    ts = build_ts(m)
    r = check_property(ts, props(m)["prg1"])
    assert not r.holds
    p = dict(r.instance)["p"]
    start = {i for i, v in enumerate(ts.states) if (p, "waiting") in v["st"]}
    forbid = [(p, "cs") in v["st"] for v in ts.states]
    assert lasso_problems(ts, r.lasso, start, forbid) == []
    other = "p2" if p == "p1" else "p1"
    cyc = r.lasso.cycle
    assert f"enter[{other}]" in cyc[1::2] and f"enter[{p}]" not in cyc[1::2]
    assert set(r.lasso.to_json(ts)["violated_instance_analysis"].values()) == {False}


def test_some_lasso_exists_without_forbidden_states(mutex):
    _, ts = mutex
    lasso = find_fair_lasso(ts, set(ts.initial), [False] * ts.size)
    assert lasso is not None
    assert lasso_problems(ts, lasso, set(ts.initial), [False] * ts.size) == []


def test_scheduled_departure_makes_trains_leave():
    m = small_train(0)
    assert check_property(build_ts(m), props(m)["prg0_1"]).holds


def test_unscheduled_departure_has_a_lasso():
    m = load("controls", "m0_unscheduled.ub")
    ts = build_ts(m)
    r = check_property(ts, props(m)["prg0_1"])
    assert not r.holds
    t = dict(r.instance)["t"]
    start = {i for i, v in enumerate(ts.states) if t in v["trains"]}
    forbid = [t not in v["trains"] for v in ts.states]
    assert lasso_problems(ts, r.lasso, start, forbid) == []


def test_leadsto_is_reflexive(mutex):
    m, ts = mutex
    p = parse_predicate("st.p1 = waiting", m)
    assert check_leadsto(ts, p, p).holds


def test_exit_block_is_transient_in_small_m2():
    m = small_train(2)
    assert check_transient(build_ts(m), parse_predicate("Exit in ran(location)", m)).holds


def test_transient_false_and_true(mutex):
    _, ts = mutex
    assert check_transient(ts, FALSE).holds
    r = check_transient(ts, TRUE)
    assert not r.holds and lasso_problems(ts, r.lasso, set(range(ts.size)), [False] * ts.size) == []


def _random_ts(k):
    g = Gen(k)
    m = parse_machine(g.machine())
    return g, m, build_ts(m)


@seed(SEED)
@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_transient_is_leadsto_from_true(k):
    g, m, ts = _random_ts(k)
    p = parse_predicate(f"wd({g.pred()})", m)
    assert check_transient(ts, p).holds == check_leadsto(ts, TRUE, mk_not(p)).holds


@seed(SEED)
@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_leadsto_weakens_on_reachable_implication(k):
    g, m, ts = _random_ts(k)
    p, q, r = (parse_predicate(f"wd({g.pred()})", m) for _ in range(3))
    if check_leadsto(ts, p, q).holds:
        assert check_leadsto(ts, p, mk_or(q, r)).holds
    assert check_leadsto(ts, p, TRUE).holds


@seed(SEED)
@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_lassos_are_genuine(k):
    g, m, ts = _random_ts(k)
    p = parse_predicate(f"wd({g.pred()})", m)
    q = parse_predicate(f"wd({g.pred()})", m)
    pv, qv = ts.values(p), ts.values(q)
    start = {i for i in range(ts.size) if pv[i]}
    lasso = find_fair_lasso(ts, start, qv)
    if lasso is not None:
        assert lasso_problems(ts, lasso, start, qv) == []
    if ts.size <= 10:
        assert naive_fair_cycle_exists(ts, start, qv) == (lasso is not None)


@pytest.mark.parametrize("coarse, fine, taken, violated", [
    ([True, True], [False, True], [False, False], True),
    ([True, True], [False, True], [False, True], False),
    ([True, True], [True, False], [False, True], True),
    ([True, False], [True, True], [False, False], False),
    ([True], [False], [False], False),
])
def test_violation_on_literal_cycles(coarse, fine, taken, violated):
    assert schedule_violated(coarse, fine, taken) == violated


def test_schedule_violation_agrees_with_cycle_analysis(mutex):
    m, ts = mutex
    sched = {lab: (cs, fs) for lab, cs, fs in ts.schedules()}
    for s in range(ts.size):
        for lab, j in ts.edges[s]:
            back = [(l2, k) for l2, k in ts.edges[j] if k == s]
            for l2, _ in back[:1]:
                cyc = [s, lab, j, l2, s] if j != s else [s, lab, s]
                per, _ = cycle_schedule_consistent(ts, cyc)
                states = [s, j] if j != s else [s]
                edges = [(s, lab), (j, l2)] if j != s else [(s, lab)]
                for name, (cs, fs) in sched.items():
                    taken = [any(e == name for st_, e in edges if st_ == x) for x in states]
                    assert per[name] == schedule_violated([cs[x] for x in states],
                                                          [fs[x] for x in states], taken)
