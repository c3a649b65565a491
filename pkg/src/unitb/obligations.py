"""Proof obligations: generation from a machine and brute-force discharge.

Obligations quantify over all valuations of the symbols they mention, not
only reachable states; the invariants enter as hypotheses.  An obligation
whose ``action`` is set relates current and primed variables through the
action of that event; discharge generates the successor values instead of
enumerating primed copies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .evaluator import (
    BOT, LimitExceeded, Slot, apply_action, before_after, compiler_for,
    expr_symbols, solve, type_domain,
)
from .kernel import (
    TRUE, ActionRef, Event, Expr, Machine, ProofObligation, Property, bvar,
    conjuncts, mk_not, mk_or, prime, state_vars, substitute,
)

DEFAULT_PO_LIMIT = 10_000_000


@dataclass
class Verdict:
    status: str  # valid, counter-model, wd-failure, skipped
    valuation: Optional[dict] = None
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.status == "valid"

    def to_json(self) -> dict:
        from .semantics import render_value

        out = {"status": self.status}
        if self.valuation is not None:
            out["valuation"] = {k: render_value(v) for k, v in self.valuation.items()}
        if self.reason:
            out["reason"] = self.reason
        return out


def identity_action(ev: Event) -> ActionRef:
    return ActionRef(ev, tuple((ix, bvar(ix)) for ix, _ in ev.indices))


def fresh_indices(ev: Event, taken: set) -> tuple:
    """Rename the event's indices away from ``taken``.

    Returns (context entries, substitution, ActionRef)."""
    ctx, sub, pairs = [], {}, []
    used = set(taken)
    for ix, s in ev.indices:
        name = ix
        k = 1
        while name in used:
            name = f"{ix}_{k}"
            k += 1
        used.add(name)
        ctx.append((name, s))
        if name != ix:
            sub[ix] = bvar(name)
        pairs.append((ix, bvar(name)))
    return tuple(ctx), sub, ActionRef(ev, tuple(pairs))


# ---------------------------------------------------------------------------
# Generation


def po_invariance(machine: Machine) -> list:
    m = machine
    out = []
    init_h = conjuncts(m.init)
    for inv in m.invariants:
        out.append(ProofObligation(f"{m.name}/INIT/{inv.label}", "INV-init", init_h, inv.p, (), None, m.name))
    hyps = tuple(i.p for i in m.invariants)
    for ev in m.user_events():
        for inv in m.invariants:
            out.append(ProofObligation(
                f"{m.name}/{ev.name}/INV/{inv.label}", "INV-preserve",
                hyps + conjuncts(ev.guard), prime(inv.p), ev.indices, identity_action(ev), m.name))
    return out


def po_unless(machine: Machine, prop: Property, prefix: Optional[str] = None) -> list:
    """One obligation per event; schedules are deliberately not hypotheses."""
    m = machine
    prefix = prefix or f"{m.name}/{prop.label}"
    hyps_base = (prop.p, mk_not(prop.q)) + tuple(i.p for i in m.invariants)
    goal = mk_or(prime(prop.p), prime(prop.q))
    out = []
    taken = {n for n, _ in prop.free}
    for ev in m.user_events():
        ctx, sub, act = fresh_indices(ev, taken)
        out.append(ProofObligation(
            f"{prefix}/UN/{ev.name}", "UN",
            hyps_base + conjuncts(substitute(ev.guard, sub)), goal,
            tuple(prop.free) + ctx, act, m.name))
    return out


def po_feasibility(machine: Machine) -> list:
    m = machine
    inv = tuple(i.p for i in m.invariants)
    out = []
    for ev in m.user_events():
        out.append(ProofObligation(
            f"{m.name}/{ev.name}/SCH_FIS", "SCH_FIS",
            inv + conjuncts(ev.coarse) + conjuncts(ev.fine), ev.guard, ev.indices, None, m.name))
    return out


@dataclass
class FalsifiesResult:
    neg: ProofObligation
    c_en: ProofObligation
    f_en: Optional[tuple]  # (p, q) of the leads-to goal p and c ~> f, or None


def po_falsifies(machine: Machine, ev: Event, idx_exprs: tuple, p: Expr, context: tuple,
                 prefix: str, tag: Optional[str] = None) -> FalsifiesResult:
    m = machine
    if len(idx_exprs) != len(ev.indices):
        raise ValueError(f"event {ev.name} takes {len(ev.indices)} index expressions")
    sub = {ix: x for (ix, _), x in zip(ev.indices, idx_exprs)}
    c = substitute(ev.coarse, sub)
    f = substitute(ev.fine, sub)
    g = substitute(ev.guard, sub)
    inv = tuple(i.p for i in m.invariants)
    suffix = f"_{tag}" if tag else ""
    act = ActionRef(ev, tuple((ix, sub[ix]) for ix, _ in ev.indices))
    neg = ProofObligation(
        f"{prefix}/NEG{suffix}", "NEG", inv + conjuncts(p) + conjuncts(c) + conjuncts(f) + conjuncts(g),
        mk_not(prime(p)), tuple(context), act, m.name)
    c_en = ProofObligation(f"{prefix}/C_EN{suffix}", "C_EN", inv + conjuncts(p), c, tuple(context), None, m.name)
    f_en = None if f == TRUE else (_and2(p, c), f)
    return FalsifiesResult(neg, c_en, f_en)


def _and2(a: Expr, b: Expr) -> Expr:
    from .kernel import mk_and

    return mk_and(a, b)


def po_implication(machine: Machine, name: str, p: Expr, q: Expr, context: tuple, origin: str = "IMPL") -> ProofObligation:
    inv = tuple(i.p for i in machine.invariants)
    return ProofObligation(name, origin, inv + conjuncts(p), q, tuple(context), None, machine.name)


def machine_obligations(machine: Machine) -> list:
    """Invariance, feasibility and unless obligations of one machine."""
    out = po_invariance(machine) + po_feasibility(machine)
    derived = set(machine.derivation_map)
    for p in machine.properties:
        if p.kind == "unless" and p.label not in derived:
            out.extend(po_unless(machine, p))
    return out


# ---------------------------------------------------------------------------
# Discharge


def action_hypothesis(po: ProofObligation, machine: Machine) -> Optional[Expr]:
    """The before-after predicate of the obligation's action, if any."""
    if po.action is None:
        return None
    ba = before_after(machine, po.action.event)
    return substitute(ba, dict(po.action.index_exprs))


def all_hypotheses(po: ProofObligation, machine: Machine) -> tuple:
    ba = action_hypothesis(po, machine)
    return po.hypotheses + ((ba,) if ba is not None else ())


def _plan(machine: Machine, po: ProofObligation) -> tuple:
    """Slots in an order that lets conjuncts prune early."""
    comp = compiler_for(machine)
    hyps = []
    for h in po.hypotheses:
        hyps.extend(conjuncts(h))
    needed = set()
    for h in hyps:
        needed |= state_vars(h)
    needed |= state_vars(po.goal)
    if po.action is not None:
        ev = po.action.event
        for a in ev.action:
            needed |= state_vars(a.expr)
            if a.arg is not None:
                needed |= state_vars(a.arg)
            needed.update(a.targets)
        for _, x in po.action.index_exprs:
            needed |= state_vars(x)
    cur_names = {n.rstrip("'") for n in needed}
    primed_goal = not po.action and any(n.endswith("'") for n in needed)
    primed_names = {n[:-1] for n in needed if n.endswith("'")} if primed_goal else set()
    sm = machine.sort_map
    slot_syms = {}
    for n, s in po.context:
        slot_syms[("bnd", n)] = list(sm[s].values)
    for v in machine.variables:
        if v.name in cur_names:
            slot_syms[("cur", v.name)] = type_domain(machine, v.type)
    for v in machine.variables:
        if v.name in primed_names:
            slot_syms[("nxt", v.name)] = type_domain(machine, v.type)
    cons = [(expr_symbols(h) & set(slot_syms), comp(h)) for h in hyps]
    # greedy: pick the symbol that completes most constraints, smaller domain first
    order = []
    remaining = dict(slot_syms)
    bound = set()
    while remaining:
        def score(k):
            done = sum(1 for syms, _ in cons if k in syms and syms - bound <= {k})
            return (-done, len(remaining[k]), list(slot_syms).index(k))
        k = min(remaining, key=score)
        order.append(k)
        bound.add(k)
        del remaining[k]
    slots = [Slot(sp, n, slot_syms[(sp, n)]) for sp, n in order]
    return slots, cons


def discharge(po: ProofObligation, machine: Machine, limit: int = DEFAULT_PO_LIMIT) -> Verdict:
    """Valid iff the goal is true at every valuation satisfying the hypotheses."""
    comp = compiler_for(machine)
    try:
        slots, cons = _plan(machine, po)
    except KeyError as exc:
        return Verdict("skipped", reason=f"undeclared symbol {exc}")
    goal = comp(po.goal)
    filler = {v.name: type_domain(machine, v.type)[0] for v in machine.variables}
    act = po.action
    idx = [(ix, comp(x)) for ix, x in act.index_exprs] if act else []
    try:
        for c, n, b in solve(slots, cons, limit):
            if act is None:
                r = goal(c, n, b)
                if r is True:
                    continue
                return _fail(r, c, n, b)
            cur = dict(filler)
            cur.update(c)
            ib = {}
            ok = True
            for ix, fx in idx:
                v = fx(cur, {}, b)
                if v is BOT:
                    ok = False
                    break
                ib[ix] = v
            if not ok:
                continue
            for nxt in apply_action(machine, act.event, cur, ib, strict=False):
                r = goal(cur, nxt, b)
                if r is not True:
                    shown = {k: nxt[k] for k in c}
                    return _fail(r, c, shown, b)
    except LimitExceeded as exc:
        return Verdict("skipped", reason=str(exc))
    return Verdict("valid")


def _fail(r, c, n, b) -> Verdict:
    val = dict(b)
    val.update(c)
    for k, v in n.items():
        val[k + "'"] = v
    return Verdict("wd-failure" if r is BOT else "counter-model", val)


# ---------------------------------------------------------------------------
# Rendering


def po_to_json(po: ProofObligation, machine: Machine, verdict: Optional[Verdict] = None) -> dict:
    from .parser import show_expr

    out = {
        "name": po.name,
        "origin": po.origin,
        "context": [f"{n} : {s}" for n, s in po.context],
        "hypotheses": [show_expr(h) for h in all_hypotheses(po, machine)],
        "goal": show_expr(po.goal),
    }
    if verdict is not None:
        out["verdict"] = verdict.to_json()
    return out


def export_smtlib(po: ProofObligation, machine: Machine) -> str:
    from .smtlib import encode_obligation

    return encode_obligation(po, machine)


__all__ = [
    "Verdict", "discharge", "export_smtlib", "machine_obligations", "po_falsifies",
    "po_feasibility", "po_implication", "po_invariance", "po_to_json", "po_unless",
    "all_hypotheses", "action_hypothesis",
]
