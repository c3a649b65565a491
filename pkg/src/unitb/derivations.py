"""Leads-to derivation scripts and the dependency relation.

A script is a list of rule applications consumed against a stack of open
goals.  Each application pops the first open goal and pushes its subgoals
(in order) to the front.  Leaves are proof obligations, certified
properties of the same machine, properties certified in an earlier machine
of the development, or (explicitly requested) semantic checks.

Whenever the conclusion of a rule differs from the goal it is applied to,
the gap is closed by two implications ``I and p => p0`` and
``I and q0 => q``; an invalid gap is reported as a conclusion mismatch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .kernel import (
    Derivation, Expr, Machine, Property, Step, ac_equal, bvar, mk, mk_and,
    mk_not, mk_or,
)
from .obligations import (
    DEFAULT_PO_LIMIT, Verdict, discharge, po_falsifies, po_implication, po_unless,
)


@dataclass(frozen=True)
class Goal:
    kind: str  # leadsto or transient
    p: Expr
    q: Optional[Expr]
    context: tuple  # ((name, sort), ...)
    path: str

    def describe(self) -> str:
        from .parser import show_expr

        if self.kind == "transient":
            return "tr " + show_expr(self.p)
        return f"{show_expr(self.p)} ~> {show_expr(self.q)}"


@dataclass
class Item:
    """One leaf or side condition of a derivation."""

    kind: str  # po, cite, reuse, semantic, unless
    name: str
    detail: str
    valid: bool
    po: object = None
    verdict: Optional[Verdict] = None
    extra: dict = field(default_factory=dict)


@dataclass
class DerivationReport:
    label: str
    goal: str
    items: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    cites: set = field(default_factory=set)  # labels of the same machine
    reuses: set = field(default_factory=set)  # (machine, label)
    falsifies_events: set = field(default_factory=set)

    @property
    def valid(self) -> bool:
        return not self.errors and all(i.valid for i in self.items)

    def to_json(self) -> dict:
        items = []
        for it in self.items:
            d = {"kind": it.kind, "name": it.name, "detail": it.detail, "valid": it.valid}
            if it.verdict is not None:
                d["verdict"] = it.verdict.to_json()
            d.update(it.extra)
            items.append(d)
        return {"label": self.label, "goal": self.goal, "valid": self.valid,
                "items": items, "errors": list(self.errors),
                "reuses": sorted(f"{m}.{l}" for m, l in self.reuses)}


class DerivationError(Exception):
    pass


class Certifier:
    """Certifies progress and unless properties of one machine, memoized.

    ``earlier`` maps machine names to the certifiers of earlier machines of
    the development (the targets of ``reuse``)."""

    def __init__(self, machine: Machine, earlier: Optional[dict] = None,
                 po_limit: int = DEFAULT_PO_LIMIT, state_limit: int = 1_000_000):
        self.m = machine
        self.earlier = earlier or {}
        self.po_limit = po_limit
        self.state_limit = state_limit
        self.reports: dict = {}
        self._active: list = []
        self._unless: dict = {}
        self._ts = None

    # transition system for semantic leaves
    def ts(self):
        if self._ts is None:
            from .semantics import build_ts

            self._ts = build_ts(self.m, self.state_limit)
        return self._ts

    def unless_items(self, label: str) -> list:
        if label not in self._unless:
            prop = self.m.property_map[label]
            items = []
            for po in po_unless(self.m, prop):
                v = discharge(po, self.m, self.po_limit)
                items.append(Item("po", po.name, po.origin, v.valid, po, v))
            self._unless[label] = items
        return self._unless[label]

    def is_certified(self, label: str) -> tuple:
        """(ok, reason)."""
        prop = self.m.property_map.get(label)
        if prop is None:
            return False, f"undeclared property {label}"
        if prop.kind == "invariant":
            return True, ""
        if prop.kind == "unless" and label not in self.m.derivation_map:
            ok = all(i.valid for i in self.unless_items(label))
            return ok, "" if ok else f"unless property {label} has a failing obligation"
        if label not in self.m.derivation_map:
            return False, f"progress property {label} has no derivation"
        if label in self._active:
            cyc = " -> ".join(self._active[self._active.index(label):] + [label])
            return False, f"circular citation {cyc}"
        rep = self.check(label)
        return rep.valid, "" if rep.valid else f"derivation of {label} is not valid"

    def check(self, label: str) -> DerivationReport:
        if label in self.reports:
            return self.reports[label]
        d = self.m.derivation_map[label]
        self._active.append(label)
        try:
            rep = check_derivation(self.m, d, self)
        finally:
            self._active.pop()
        self.reports[label] = rep
        return rep

    def check_all(self) -> list:
        return [self.check(d.label) for d in self.m.derivations]

    # dependency bookkeeping
    def dependencies(self, label: str, _seen: Optional[set] = None) -> set:
        """Events whose schedules the property relies on in this machine."""
        seen = _seen if _seen is not None else set()
        if label in seen:
            return set()
        seen.add(label)
        out = {e for l, e in self.m.dependencies if l == label}
        if label in self.m.derivation_map:
            rep = self.check(label)
            out |= rep.falsifies_events
            for c in rep.cites:
                out |= self.dependencies(c, seen)
            for mname, l in rep.reuses:
                cert = self.earlier.get(mname)
                if cert is not None:
                    out |= cert.dependencies(l)
        return out

    def reuse_closure(self, label: str, _seen: Optional[set] = None) -> set:
        """(machine, label) pairs reused, directly or through citations."""
        seen = _seen if _seen is not None else set()
        if label in seen or label not in self.m.derivation_map:
            return set()
        seen.add(label)
        rep = self.check(label)
        out = set(rep.reuses)
        for c in rep.cites:
            out |= self.reuse_closure(c, seen)
        return out


def goal_of(prop: Property, path: str) -> Goal:
    if prop.kind == "transient":
        return Goal("transient", prop.p, None, tuple(prop.free), path)
    if prop.kind == "leadsto":
        return Goal("leadsto", prop.p, prop.q, tuple(prop.free), path)
    raise DerivationError(f"{prop.label} is not a progress property")


def check_derivation(machine: Machine, derivation: Derivation, cert: Certifier) -> DerivationReport:
    prop = machine.property_map.get(derivation.label)
    if prop is None or prop.kind not in ("leadsto", "transient"):
        rep = DerivationReport(derivation.label, "?")
        rep.errors.append(f"derivation for {derivation.label}, which is not a declared progress property")
        return rep
    goal = goal_of(prop, f"{machine.name}/{derivation.label}")
    return run_script(machine, goal, derivation.steps, cert, derivation.label)


def run_script(machine: Machine, goal: Goal, steps: tuple, cert: Certifier, label: str) -> DerivationReport:
    rep = DerivationReport(label, goal.describe())
    runner = _Runner(machine, cert, rep)
    stack = [goal]
    for k, st in enumerate(steps, 1):
        if not stack:
            rep.errors.append(f"step {k} ({_step_text(st)}): no open goal left")
            break
        g = stack.pop(0)
        try:
            new = runner.apply(st, g, k)
        except DerivationError as exc:
            rep.errors.append(f"step {k} ({_step_text(st)}) on {g.describe()}: {exc}")
            break
        stack[0:0] = new
    else:
        for g in stack:
            rep.errors.append(f"unresolved leaf: {g.describe()}")
    return rep


def _step_text(st: Step) -> str:
    from .parser import show_step

    return show_step(st)


class _Runner:
    def __init__(self, machine: Machine, cert: Certifier, rep: DerivationReport):
        self.m = machine
        self.cert = cert
        self.rep = rep

    def po(self, po, kind="po"):
        v = discharge(po, self.m, self.cert.po_limit)
        self.rep.items.append(Item(kind, po.name, po.origin, v.valid, po, v))
        return v

    def implication(self, name: str, p: Expr, q: Expr, ctx: tuple) -> Verdict:
        return self.po(po_implication(self.m, name, p, q, ctx))

    def bridge(self, g: Goal, p0: Expr, q0: Optional[Expr], k: int):
        """Close the gap between a rule's conclusion and the goal."""
        base = f"{g.path}/s{k}"
        bad = []
        if p0 is not None and not ac_equal(g.p, p0):
            if not self.implication(f"{base}/IMPL_pre", g.p, p0, g.context).valid:
                bad.append("antecedent")
        if q0 is not None and g.kind == "leadsto" and not ac_equal(g.q, q0):
            if not self.implication(f"{base}/IMPL_post", q0, g.q, g.context).valid:
                bad.append("consequent")
        if bad:
            raise DerivationError("conclusion mismatch (" + ", ".join(bad) + " does not follow)")

    def lookup(self, label: str, g: Goal, kinds: tuple, machine: Optional[Machine] = None) -> Property:
        m = machine or self.m
        prop = m.property_map.get(label)
        if prop is None:
            raise DerivationError(f"undeclared property {label}" + (f" in {m.name}" if machine else ""))
        if prop.kind not in kinds:
            raise DerivationError(f"{label} is a {prop.kind} property, expected {' or '.join(kinds)}")
        ctx = dict(g.context)
        for n, s in prop.free:
            if ctx.get(n) != s:
                raise DerivationError(f"free variable {n} : {s} of {label} is not bound by the goal")
        return prop

    def certified(self, label: str):
        ok, why = self.cert.is_certified(label)
        self.rep.cites.add(label)
        self.rep.items.append(Item("cite", label, self.m.property_map[label].describe()
                                   if label in self.m.property_map else "", ok))
        if not ok:
            self.rep.errors.append(why)

    def apply(self, st: Step, g: Goal, k: int) -> list:
        r = st.rule
        if r in ("implication", "split", "trans", "induction", "psp", "ensure", "transient") and g.kind != "leadsto":
            raise DerivationError(f"rule {r} concludes a leads-to property")
        if r == "implication":
            if not self.implication(f"{g.path}/s{k}/IMPL", g.p, g.q, g.context).valid:
                raise DerivationError("implication does not hold")
            return []
        if r == "split":
            return [Goal("leadsto", mk_and(g.p, mk_not(g.q)), g.q, g.context, g.path)]
        if r == "trans":
            pts = [g.p] + list(st.preds) + [g.q]
            return [Goal("leadsto", pts[i], pts[i + 1], g.context, f"{g.path}/s{k}.{i + 1}")
                    for i in range(len(pts) - 1)]
        if r == "ensure":
            un = self.lookup(st.labels[0], g, ("unless",))
            self.certified(un.label)
            self.bridge(g, un.p, un.q, k)
            return [Goal("transient", mk_and(un.p, mk_not(un.q)), None, g.context, g.path)]
        if r == "induction":
            return self.induction(st, g, k)
        if r == "psp":
            lt = self.lookup(st.labels[0], g, ("leadsto",))
            un = self.lookup(st.labels[1], g, ("unless",))
            self.certified(lt.label)
            self.certified(un.label)
            p0 = mk_and(lt.p, un.p)
            q0 = mk_or(mk_and(lt.q, un.p), un.q)
            self.bridge(g, p0, q0, k)
            return []
        if r == "transient":
            return [Goal("transient", mk_not(g.q), None, g.context, g.path)]
        if r == "falsifies":
            return self.falsifies(st, g, k)
        if r == "cite":
            prop = self.lookup(st.labels[0], g, ("leadsto", "transient"))
            self.certified(prop.label)
            self.use(prop, g, k)
            return []
        if r == "reuse":
            return self.reuse(st, g, k)
        if r == "mc":
            return self.semantic(g)
        raise DerivationError(f"unknown rule {r}")

    def use(self, prop: Property, g: Goal, k: int):
        """Discharge ``g`` from a certified property ``prop``."""
        if g.kind == "transient":
            if prop.kind != "transient":
                raise DerivationError(f"{prop.label} is not a transient property")
            self.bridge(g, prop.p, None, k)
            return
        if prop.kind == "transient":
            # tr p0 gives true ~> not p0
            self.bridge(g, None, mk_not(prop.p), k)
            return
        self.bridge(g, prop.p, prop.q, k)

    def induction(self, st: Step, g: Goal, k: int) -> list:
        v = st.preds[0]
        name = st.name or "M"
        sort = _int_sort_of(self.m, v, g.context)
        if sort is None or sort not in self.m.sort_map or not self.m.sort_map[sort].is_int:
            raise DerivationError("variant must range over a bounded integer sort")
        if name in dict(g.context):
            raise DerivationError(f"induction name {name} clashes with the goal context")
        mv = bvar(name)
        if not self.implication(f"{g.path}/s{k}/WD_variant", g.p, mk("wd", mk("eq", v, v)), g.context).valid:
            raise DerivationError("variant is not well defined where the antecedent holds")
        p = mk_and(g.p, mk("wd", mk("eq", v, mv)))
        q = mk_or(mk_and(g.p, mk("wd", mk("lt", v, mv))), g.q)
        return [Goal("leadsto", p, q, g.context + ((name, sort),), g.path)]

    def falsifies(self, st: Step, g: Goal, k: int) -> list:
        ev = self.m.event_map.get(st.event)
        if ev is None or ev.is_skip:
            raise DerivationError(f"no event {st.event}")
        if len(st.index_exprs) != len(ev.indices):
            raise DerivationError(f"event {st.event} takes {len(ev.indices)} index expressions")
        target = g.p if g.kind == "transient" else mk_not(g.q)
        prefix = f"{g.path}/s{k}"
        res = po_falsifies(self.m, ev, st.index_exprs, target, g.context, prefix, st.tag)
        self.rep.falsifies_events.add(ev.name)
        ok_neg = self.po(res.neg).valid
        ok_cen = self.po(res.c_en).valid
        if not (ok_neg and ok_cen):
            failed = [n for n, ok in (("NEG", ok_neg), ("C_EN", ok_cen)) if not ok]
            self.rep.errors.append(f"{prefix}: falsifies {st.event} fails {', '.join(failed)}")
        if res.f_en is None:
            return []
        suffix = f"_{st.tag}" if st.tag else ""
        return [Goal("leadsto", res.f_en[0], res.f_en[1], g.context, f"{prefix}/F_EN{suffix}")]

    def reuse(self, st: Step, g: Goal, k: int) -> list:
        mname, label = st.machine, st.labels[0]
        cert = self.cert.earlier.get(mname)
        if cert is None:
            raise DerivationError(f"machine {mname} is not an earlier machine of the development")
        prop = self.lookup(label, g, ("leadsto", "transient"), cert.m)
        ok, why = cert.is_certified(label)
        self.rep.reuses.add((mname, label))
        self.rep.items.append(Item("reuse", f"{mname}.{label}", prop.describe(), ok))
        if not ok:
            self.rep.errors.append(f"reused {mname}.{label}: {why}")
        self.use(prop, g, k)
        return []

    def semantic(self, g: Goal) -> list:
        from .semantics import check_leadsto_goal, check_transient_goal

        ts = self.cert.ts()
        if g.kind == "transient":
            r = check_transient_goal(ts, g.p, g.context)
        else:
            r = check_leadsto_goal(ts, g.p, g.q, g.context)
        self.rep.items.append(Item("semantic", g.path, g.describe(), r.holds,
                                   extra={"check": r.to_json(ts)}))
        return []


def _int_sort_of(m: Machine, v: Expr, context: tuple) -> Optional[str]:
    from .typecheck import Checker

    _, t = Checker(m).expr(v, dict(context), False)
    if t is None or t.kind != "elem":
        return None
    return t.sort


# ---------------------------------------------------------------------------
# Dependencies


@dataclass
class DependencyViolation:
    machine: str
    event: str
    condition: str  # C_FLW or F_FLW
    via: str  # label used in the refinement proof
    reused: str  # machine.label of the reused property
    depends_on: list

    def describe(self) -> str:
        return (f"{self.machine}: {self.condition} of {self.event} is proved with {self.via}, "
                f"which reuses {self.reused}; {self.reused} depends on {', '.join(self.depends_on)}, "
                f"so the reasoning is circular")


def check_dependencies(cert: Certifier, resolutions: list) -> list:
    """Violations among ``resolutions``: (event, condition, label) triples
    naming the labels that prove C_FLW/F_FLW goals of abstract events."""
    out = []
    for event, cond, label in resolutions:
        for mname, l in sorted(cert.reuse_closure(label)):
            earlier = cert.earlier.get(mname)
            if earlier is None:
                continue
            deps = earlier.dependencies(l)
            if event in deps:
                out.append(DependencyViolation(cert.m.name, event, cond, label, f"{mname}.{l}", sorted(deps)))
    return out


__all__ = [
    "Certifier", "DependencyViolation", "DerivationReport", "Goal", "Item",
    "check_dependencies", "check_derivation", "run_script",
]
