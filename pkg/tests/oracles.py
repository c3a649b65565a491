"""Brute-force reference implementations used to cross-check the library.

They enumerate whole valuation spaces and read actions through their
before-after predicates, so they share no search code with discharge or
build_ts.
"""
from __future__ import annotations

import itertools
from collections import deque

from unitb.evaluator import before_after, compiler_for, enumerate_valuations, eval_pred
from unitb.kernel import SKIP, event_instances, instance_label
from unitb.obligations import action_hypothesis
from unitb.semantics import cycle_schedule_consistent


def _contexts(machine, context):
    names = [n for n, _ in context]
    domains = [machine.sort_map[s].values for _, s in context]
    for combo in itertools.product(*domains):
        yield dict(zip(names, combo))


def brute_valid(po, machine) -> bool:
    """Hypotheses imply the goal at every valuation (primed ones included)."""
    comp = compiler_for(machine)
    ba = action_hypothesis(po, machine)
    hyps = [comp(h) for h in list(po.hypotheses) + ([ba] if ba is not None else [])]
    goal = comp(po.goal)
    primed = ba is not None
    states = list(enumerate_valuations(machine))
    for b in _contexts(machine, po.context):
        for cur in states:
            nexts = states if primed else [{}]
            for nxt in nexts:
                if all(h(cur, nxt, b) is True for h in hyps) and goal(cur, nxt, b) is not True:
                    return False
    return True


def brute_edges(machine, state: dict, states: list) -> list:
    out = []
    for name, val in event_instances(machine):
        if name == SKIP:
            out.append((SKIP, state))
            continue
        ev = machine.event_map[name]
        b = dict(val)
        if eval_pred(ev.guard, state, machine, b) is not True:
            continue
        ba = before_after(machine, ev)
        for s2 in states:
            if eval_pred(ba, state, machine, b, s2) is True:
                out.append((instance_label(name, val), s2))
    return out


def brute_reachable(machine) -> tuple:
    """(reachable states as frozen items, edge set of (from, label, to))."""
    states = list(enumerate_valuations(machine))
    key = lambda s: tuple(sorted(s.items(), key=lambda kv: kv[0]))
    init = [s for s in states if eval_pred(machine.init, s, machine) is True]
    seen = {key(s) for s in init}
    queue = deque(init)
    edges = set()
    while queue:
        s = queue.popleft()
        for lab, s2 in brute_edges(machine, s, states):
            edges.add((key(s), lab, key(s2)))
            if key(s2) not in seen:
                seen.add(key(s2))
                queue.append(s2)
    return seen, edges


def lasso_problems(ts, lasso, start: set, forbid: list) -> list:
    """What is wrong with a claimed fair lasso; empty when it is genuine."""
    bad = []
    path = lasso.stem + lasso.cycle[1:]
    if lasso.stem[0] not in ts.initial:
        bad.append("stem does not begin at an initial state")
    for k in range(0, len(path) - 2, 2):
        if (path[k + 1], path[k + 2]) not in ts.edges[path[k]]:
            bad.append(f"missing edge {path[k]} -{path[k + 1]}-> {path[k + 2]}")
    if lasso.stem[-1] != lasso.cycle[0] or lasso.cycle[0] != lasso.cycle[-1]:
        bad.append("cycle does not close on the stem")
    states = path[0::2]
    starts = [k for k, s in enumerate(states) if s in start]
    if not starts:
        bad.append("never enters the start set")
    elif all(any(forbid[s] for s in states[k:]) for k in starts):
        bad.append("every suffix from a start state visits a forbidden state")
    if not cycle_schedule_consistent(ts, lasso.cycle)[1]:
        bad.append("cycle is not schedule consistent")
    return bad
