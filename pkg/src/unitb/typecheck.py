"""Name resolution and sort checking for parsed machines.

Identifiers are resolved in the order bound name, state variable, element,
sort.  Types of expressions use root sorts, so an element of a subsort is
comparable with any element of its parent sort.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Optional

from .kernel import (
    BOOL, INT_LITERAL, Assignment, Derivation, Event, Expr, Machine, Property, Type,
)
from .parser import Diagnostic

EMPTY_SET = Type("set", None)


def elem_t(sort: Optional[str]) -> Type:
    return Type("elem", sort)


def _unify_sort(a: Optional[str], b: Optional[str], machine: Machine) -> tuple:
    """(ok, merged) for two root sort names; INT_LITERAL joins any int sort."""
    if a == b:
        return True, a
    if a == INT_LITERAL and b in machine.sort_map and machine.sort_map[b].is_int:
        return True, b
    if b == INT_LITERAL and a in machine.sort_map and machine.sort_map[a].is_int:
        return True, a
    return False, None


def unify(a: Type, b: Type, machine: Machine) -> Optional[Type]:
    if a == EMPTY_SET and b.kind in ("set", "rel"):
        return b
    if b == EMPTY_SET and a.kind in ("set", "rel"):
        return a
    if a.kind != b.kind:
        return None
    if a.kind == "bool":
        return a
    ok, s = _unify_sort(a.sort, b.sort, machine)
    if not ok:
        return None
    if a.kind in ("rel", "pair"):
        ok, c = _unify_sort(a.cod, b.cod, machine)
        if not ok:
            return None
        return Type(a.kind, s, c)
    return Type(a.kind, s)


class Checker:
    def __init__(self, machine: Machine, file: Optional[str] = None):
        self.m = machine
        self.file = file
        self.diags: list = []
        self.where = ""

    def err(self, e: Optional[Expr], kind: str, msg: str):
        span = e.span if e is not None else None
        self.diags.append(Diagnostic(span, kind, msg, self.where))

    # declared types
    def root(self, sort: str) -> str:
        return self.m.root(sort)

    def var_type(self, decl_type: Type) -> Type:
        t = decl_type
        if t.kind == "bool":
            return BOOL
        if t.kind == "elem":
            return elem_t(self.root(t.sort))
        if t.kind == "set":
            return Type("set", self.root(t.sort))
        return Type("rel", self.root(t.sort), self.root(t.cod))

    def check_decl_type(self, t: Type, where: str) -> bool:
        for s in (t.sort, t.cod):
            if s is not None and s not in self.m.sort_map:
                self.diags.append(Diagnostic(None, "scope", f"undeclared sort {s}", where))
                return False
        return True

    # expressions
    def expr(self, e: Expr, bound: dict, allow_primed) -> tuple:
        """Resolve ``e``; returns (expr, type) with type None after an error.

        ``allow_primed`` is False, True (any variable) or a set of names."""
        try:
            return self._expr(e, bound, allow_primed)
        except _Abort:
            return e, None

    def pred(self, e: Expr, bound: dict, allow_primed=False) -> Expr:
        out, t = self.expr(e, bound, allow_primed)
        if t is not None and t != BOOL:
            self.err(e, "sort", f"expected a predicate, got {t}")
        return out

    def _fail(self, e, kind, msg):
        self.err(e, kind, msg)
        raise _Abort()

    def _sub(self, e, bound, ap):
        return self._expr(e, bound, ap)

    def _expr(self, e: Expr, bound: dict, ap) -> tuple:
        op = e.op
        m = self.m
        if op == "bool":
            return e, BOOL
        if op == "int":
            return e, elem_t(INT_LITERAL)
        if op in ("name", "var", "bvar", "elem", "sortset"):
            return self._name(e, bound, ap)
        if op in ("and", "or", "not", "implies", "iff", "wd"):
            args = []
            for a in e.args:
                r, t = self._sub(a, bound, ap)
                if t != BOOL:
                    self._fail(a, "sort", f"operand of {op} must be a predicate, got {t}")
                args.append(r)
            return replace(e, args=tuple(args)), BOOL
        if op in ("forall", "exists"):
            inner = dict(bound)
            for b, s in e.binders:
                if s not in m.sort_map:
                    self._fail(e, "scope", f"undeclared sort {s}")
                inner[b] = s
            rng, tr = self._sub(e.args[0], inner, ap)
            term, tt = self._sub(e.args[1], inner, ap)
            if tr != BOOL or tt != BOOL:
                self._fail(e, "sort", "quantifier range and term must be predicates")
            return replace(e, args=(rng, term)), BOOL
        args, types = [], []
        for a in e.args:
            r, t = self._sub(a, bound, ap)
            args.append(r)
            types.append(t)
        out = replace(e, args=tuple(args))
        if op == "eq":
            u = unify(types[0], types[1], m)
            if u is None:
                self._fail(e, "sort", f"cannot compare {types[0]} with {types[1]}")
            return out, BOOL
        if op == "member":
            x, s = types
            if s.kind == "set":
                if s == EMPTY_SET or unify(elem_t(s.sort), x, m) is not None:
                    return out, BOOL
            elif s.kind == "rel" and x.kind == "pair":
                if unify(Type("pair", s.sort, s.cod), x, m) is not None:
                    return out, BOOL
            self._fail(e, "sort", f"cannot test membership of {x} in {s}")
        if op == "subset":
            if types[0].kind in ("set", "rel") and unify(types[0], types[1], m) is not None:
                return out, BOOL
            self._fail(e, "sort", f"cannot compare {types[0]} with {types[1]} by inclusion")
        if op == "setlit":
            if not args:
                return out, EMPTY_SET
            t = types[0]
            for a, ti in zip(args, types):
                u = unify(t, ti, m)
                if u is None or u.kind not in ("elem", "pair"):
                    self._fail(a, "sort", f"set items of mixed or unsupported types ({t}, {ti})")
                t = u
            if t.kind == "elem":
                return out, Type("set", t.sort)
            return out, Type("rel", t.sort, t.cod)
        if op == "maplet":
            a, b = types
            if a.kind != "elem" or b.kind != "elem":
                self._fail(e, "sort", "maplet needs two elements")
            return out, Type("pair", a.sort, b.sort)
        if op in ("union", "inter", "diff", "ovl"):
            u = unify(types[0], types[1], m)
            if u is None or u.kind not in ("set", "rel") or (op == "ovl" and u.kind == "set" and u != EMPTY_SET):
                self._fail(e, "sort", f"{op} of {types[0]} and {types[1]}")
            return out, u
        if op in ("dom", "ran", "inv"):
            r = types[0]
            if r == EMPTY_SET:
                self._fail(e, "sort", f"{op} of an untyped empty set")
            if r.kind != "rel":
                self._fail(e, "sort", f"{op} expects a relation, got {r}")
            if op == "dom":
                return out, Type("set", r.sort)
            if op == "ran":
                return out, Type("set", r.cod)
            return out, Type("rel", r.cod, r.sort)
        if op == "img":
            r, s = types
            if r.kind != "rel" or s.kind != "set" or unify(Type("set", r.sort), s, m) is None:
                self._fail(e, "sort", f"image of {s} under {r}")
            return out, Type("set", r.cod)
        if op == "domsub":
            s, r = types
            if r.kind != "rel" or s.kind != "set" or unify(Type("set", r.sort), s, m) is None:
                self._fail(e, "sort", f"domain subtraction of {s} from {r}")
            return out, r
        if op == "ransub":
            r, s = types
            if r.kind != "rel" or s.kind != "set" or unify(Type("set", r.cod), s, m) is None:
                self._fail(e, "sort", f"range subtraction of {s} from {r}")
            return out, r
        if op == "apply":
            f, x = types
            if f.kind != "rel" or unify(elem_t(f.sort), x, m) is None:
                self._fail(e, "sort", f"cannot apply {f} to {x}")
            return out, elem_t(f.cod)
        if op in ("add", "sub", "lt", "le", "interval"):
            s = self._int_operands(e, types)
            if op in ("add", "sub"):
                return replace(out, sort=s), elem_t(s)
            if op == "interval":
                return replace(out, sort=s), Type("set", s)
            return out, BOOL
        self._fail(e, "syntax", f"unknown operator {op}")

    def _int_operands(self, e: Expr, types: list) -> str:
        m = self.m
        for t in types:
            if t.kind != "elem" or not (t.sort == INT_LITERAL or (t.sort in m.sort_map and m.sort_map[t.sort].is_int)):
                self._fail(e, "sort", f"integer operand expected, got {t}")
        ok, s = _unify_sort(types[0].sort, types[1].sort, m)
        if not ok:
            self._fail(e, "sort", f"mixed integer sorts {types[0].sort} and {types[1].sort}")
        return s

    def _name(self, e: Expr, bound: dict, ap) -> tuple:
        m = self.m
        n = e.name
        if e.primed:
            if n not in m.var_map:
                self._fail(e, "scope", f"primed name {n}' is not a state variable")
            if ap is False or (ap is not True and n not in ap):
                self._fail(e, "scope", f"primed variable {n}' not allowed here")
            return Expr("var", name=n, primed=True, span=e.span), self.var_type(m.var_map[n].type)
        if e.op in ("name", "bvar") and n in bound:
            return Expr("bvar", name=n, span=e.span), elem_t(self.root(bound[n]))
        if e.op in ("name", "var") and n in m.var_map:
            return Expr("var", name=n, span=e.span), self.var_type(m.var_map[n].type)
        if e.op in ("name", "elem") and n in m.element_sort:
            return Expr("elem", name=n, span=e.span), elem_t(m.element_sort[n])
        if e.op in ("name", "sortset") and n in m.sort_map:
            return Expr("sortset", name=n, span=e.span), Type("set", self.root(n))
        self._fail(e, "scope", f"undeclared name {n}")


class _Abort(Exception):
    pass


def _check_names(m: Machine, diags: list):
    seen = {}
    for s in m.sorts:
        seen.setdefault(s.name, []).append("sort")
    for v in m.variables:
        seen.setdefault(v.name, []).append("variable")
    for el in m.element_sort:
        seen.setdefault(el, []).append("element")
    for n, kinds in seen.items():
        if len(kinds) > 1 and not (set(kinds) == {"element"}):
            where = f"variable {n}" if "variable" in kinds else f"sort {n}"
            diags.append(Diagnostic(None, "scope", f"name {n} declared more than once ({', '.join(kinds)})", where))


def typecheck_machine_full(m: Machine, file: Optional[str] = None) -> tuple:
    """Resolve and check a normalized machine; returns (machine, diagnostics)."""
    ck = Checker(m, file)
    diags = ck.diags
    _check_names(m, diags)
    for v in m.variables:
        ck.check_decl_type(v.type, f"variable {v.name}")
    if diags:
        return m, list(diags)

    ck.where = "init"
    init = ck.pred(m.init, {})

    invariants = []
    labels = set()
    for inv in m.invariants:
        ck.where = f"invariant {inv.label}"
        if inv.label in labels:
            ck.err(inv.p, "scope", f"duplicate label {inv.label}")
        labels.add(inv.label)
        invariants.append(replace(inv, p=ck.pred(inv.p, {})))

    events = []
    for ev in m.events:
        ck.where = f"event {ev.name}"
        events.append(_check_event(ck, ev))

    props = []
    for p in m.properties:
        ck.where = f"property {p.label}"
        if p.label in labels:
            ck.err(p.p, "scope", f"duplicate label {p.label}")
        labels.add(p.label)
        bound = {}
        for x, s in p.free:
            if s not in m.sort_map:
                ck.err(p.p, "scope", f"undeclared sort {s}")
            bound[x] = s
        pp = ck.pred(p.p, bound)
        qq = ck.pred(p.q, bound) if p.q is not None else None
        props.append(replace(p, p=pp, q=qq))

    pmap = {p.label: p for p in props}
    derivs = []
    dlabels = set()
    for d in m.derivations:
        ck.where = f"derivation {d.label}"
        goal = pmap.get(d.label)
        if goal is None or goal.kind not in ("leadsto", "transient", "unless"):
            ck.err(None, "scope", f"derivation for undeclared progress property {d.label}")
            derivs.append(d)
            continue
        if d.label in dlabels:
            ck.err(None, "scope", f"second derivation for {d.label}")
        dlabels.add(d.label)
        derivs.append(_check_derivation(ck, d, goal))

    for lab, evn in m.dependencies:
        ck.where = f"depends {lab}"
        if lab not in pmap:
            ck.err(None, "scope", f"dependency on undeclared property {lab}")
        if evn not in m.event_map:
            ck.err(None, "scope", f"dependency on undeclared event {evn}")

    wits = []
    for w in m.witnesses:
        ck.where = f"witness {w.event}.{w.index}"
        ev = m.event_map.get(w.event)
        if ev is None:
            ck.err(w.expr, "scope", f"witness for undeclared event {w.event}")
            wits.append(w)
            continue
        if w.index in dict(ev.indices):
            ck.err(w.expr, "scope", f"witnessed index {w.index} is still an index of {w.event}")
        e, t = ck.expr(w.expr, dict(ev.indices), False)
        if t is not None and t.kind != "elem":
            ck.err(w.expr, "sort", f"witness must denote an element, got {t}")
        wits.append(replace(w, expr=e))

    out = replace(m, init=init, invariants=tuple(invariants), events=tuple(events),
                  properties=tuple(props), derivations=tuple(derivs), witnesses=tuple(wits))
    return out, list(diags)


def _check_event(ck: Checker, ev: Event) -> Event:
    m = ck.m
    bound = {}
    for ix, s in ev.indices:
        if ix in bound:
            ck.err(None, "scope", f"duplicate index {ix}")
        if s not in m.sort_map:
            ck.err(None, "scope", f"undeclared sort {s}")
        bound[ix] = s
    coarse = ck.pred(ev.coarse, bound)
    fine = ck.pred(ev.fine, bound)
    guard = ck.pred(ev.guard, bound)
    assigned: set = set()
    for a in ev.action:
        for t in a.targets:
            if t in assigned:
                ck.err(a.expr, "structure", f"variable {t} assigned more than once")
            assigned.add(t)
    actions = []
    for a in ev.action:
        actions.append(_check_assignment(ck, a, bound, frozenset(assigned)))
    return replace(ev, coarse=coarse, fine=fine, guard=guard, action=tuple(actions))


def _check_assignment(ck: Checker, a: Assignment, bound: dict, frame: frozenset) -> Assignment:
    m = ck.m
    for t in a.targets:
        if t not in m.var_map:
            ck.err(a.expr, "scope", f"assignment to undeclared variable {t}")
            return a
    if a.kind == "st":
        return replace(a, expr=ck.pred(a.expr, bound, set(a.targets)))
    vt = ck.var_type(m.var_map[a.target].type)
    # deterministic right-hand sides may read values chosen by other
    # assignments of the same action
    ap = set(frame - {a.target}) if a.kind == "det" else False
    arg = None
    if a.arg is not None:
        if vt.kind != "rel":
            ck.err(a.arg, "sort", f"point update of non-function {a.target}")
            return a
        arg, at = ck.expr(a.arg, bound, ap)
        if at is not None and unify(elem_t(vt.sort), at, m) is None:
            ck.err(a.arg, "sort", f"argument of {a.target} must be {vt.sort}, got {at}")
        vt = elem_t(vt.cod)
    e, t = ck.expr(a.expr, bound, ap)
    if t is not None:
        want = vt if a.kind == "det" else (Type("set", vt.sort) if vt.kind == "elem" else None)
        if want is None:
            ck.err(a.expr, "sort", f"choice assignment needs an element variable, {a.target} is {vt}")
        elif unify(want, t, m) is None:
            ck.err(a.expr, "sort", f"cannot assign {t} to {a.target} ({want})")
    return replace(a, expr=e, arg=arg)


def _check_derivation(ck: Checker, d: Derivation, goal: Property) -> Derivation:
    m = ck.m
    scope = dict(goal.free)
    steps = []
    for st in d.steps:
        preds = []
        if st.rule == "induction":
            v, t = ck.expr(st.preds[0], scope, False)
            if t is not None:
                if t.kind != "elem" or not t.sort or t.sort == INT_LITERAL or not m.sort_map[t.sort].is_int:
                    ck.err(st.preds[0], "sort", f"variant must range over a bounded integer sort, got {t}")
                else:
                    if st.name in scope or st.name in m.var_map:
                        ck.err(st.preds[0], "scope", f"induction name {st.name} is already in use")
                    scope[st.name] = t.sort
            preds.append(v)
        else:
            for p in st.preds:
                preds.append(ck.pred(p, scope))
        idx = []
        if st.rule == "falsifies":
            ev = m.event_map.get(st.event)
            if ev is None:
                ck.err(None, "scope", f"falsifies step names undeclared event {st.event}")
            elif len(ev.indices) != len(st.index_exprs):
                ck.err(None, "sort", f"event {st.event} takes {len(ev.indices)} index expressions")
            else:
                for (ix, s), x in zip(ev.indices, st.index_exprs):
                    r, t = ck.expr(x, scope, False)
                    if t is not None and unify(elem_t(ck.root(s)), t, m) is None:
                        ck.err(x, "sort", f"index {ix} of {st.event} is {s}, got {t}")
                    idx.append(r)
        steps.append(replace(st, preds=tuple(preds), index_exprs=tuple(idx) if idx else st.index_exprs))
    return replace(d, steps=tuple(steps))
