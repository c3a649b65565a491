"""SMT-LIB 2 export of proof obligations.

Every predicate is translated to a pair (D, V) of formulas: D states that
the predicate is well defined and V gives its value where it is.  The
connectives follow the same three-valued rules as the evaluator, so an
obligation's script is unsat exactly when discharge reports it valid.

Enumerated sorts become datatypes and integer sorts become Int with range
guards.  Set and relation variables are characteristic predicates
(``declare-fun``); operations on sets are expanded pointwise over the finite
carriers, and quantifiers are expanded over the carriers of their binders.
"""
from __future__ import annotations

import itertools
import re
from typing import Callable, Optional

from .kernel import INT_LITERAL, Expr, Machine, ProofObligation, Type, walk

_SIMPLE = re.compile(r"^[A-Za-z~!$%^&*_+=<>?/\-][A-Za-z0-9~!$%^&*_+=<>.?/\-]*$")
_RESERVED = {
    "and", "or", "not", "=>", "=", "ite", "true", "false", "let", "forall", "exists",
    "distinct", "Bool", "Int", "assert", "par", "_", "!", "as", "match",
}


def symbol(name: str) -> str:
    if _SIMPLE.match(name) and name not in _RESERVED:
        return name
    return "|" + name.replace("|", "_").replace("\\", "_") + "|"


# ---------------------------------------------------------------------------
# Formula building with light simplification

T, F = "true", "false"


def s_and(*xs) -> str:
    out = []
    for x in xs:
        if x == F:
            return F
        if x != T and x not in out:
            out.append(x)
    if not out:
        return T
    return out[0] if len(out) == 1 else f"(and {' '.join(out)})"


def s_or(*xs) -> str:
    out = []
    for x in xs:
        if x == T:
            return T
        if x != F and x not in out:
            out.append(x)
    if not out:
        return F
    return out[0] if len(out) == 1 else f"(or {' '.join(out)})"


def s_not(x: str) -> str:
    if x == T:
        return F
    if x == F:
        return T
    if x.startswith("(not ") and x.endswith(")"):
        inner = x[5:-1]
        if _balanced(inner):
            return inner
    return f"(not {x})"


def s_implies(a: str, b: str) -> str:
    return s_or(s_not(a), b)


def s_eq(a: str, b: str) -> str:
    if a == b:
        return T
    return f"(= {a} {b})"


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


# three-valued connectives on (D, V) pairs

def k_and(parts: list) -> tuple:
    ds = [d for d, _ in parts]
    d = s_or(s_and(*ds), *(s_and(d_, s_not(v)) for d_, v in parts))
    return d, s_and(*(v for _, v in parts))


def k_or(parts: list) -> tuple:
    ds = [d for d, _ in parts]
    d = s_or(s_and(*ds), *(s_and(d_, v) for d_, v in parts))
    return d, s_or(*(v for _, v in parts))


def k_not(p: tuple) -> tuple:
    return p[0], s_not(p[1])


# ---------------------------------------------------------------------------


class _SetVal:
    """A set-valued translation: definedness plus a membership builder."""

    def __init__(self, d: str, mem: Callable, typ: Type):
        self.d = d
        self.mem = mem
        self.typ = typ


class Encoder:
    def __init__(self, machine: Machine, literals: set = frozenset()):
        from .typecheck import Checker

        self.m = machine
        self.checker = Checker(machine)
        self.literals = sorted(literals)

    # carriers --------------------------------------------------------------
    def smt_sort(self, root: str) -> str:
        s = self.m.sort_map[root]
        return "Int" if s.is_int else symbol(root)

    def value(self, v, root: Optional[str]) -> str:
        if isinstance(v, bool):
            return T if v else F
        if isinstance(v, int):
            return str(v) if v >= 0 else f"(- {-v})"
        return symbol(f"{root}__{v}")

    def carrier(self, root: Optional[str]) -> list:
        """SMT terms for the values of a root sort (or of integer literals)."""
        if root is None:
            return []
        if root == INT_LITERAL:
            return [self.value(v, None) for v in self.literals]
        vals = list(self.m.sort_map[root].values)
        if self.m.sort_map[root].is_int:
            vals += [v for v in self.literals if v not in vals]
        return [self.value(v, root) for v in vals]

    def in_sort(self, sort: str, x: str) -> str:
        s = self.m.sort_map[sort]
        if s.is_int:
            return s_and(f"(<= {self.value(s.lo, None)} {x})", f"(<= {x} {self.value(s.hi, None)})")
        if s.parent is None:
            return T
        root = self.m.root(sort)
        return s_or(*(s_eq(x, self.value(v, root)) for v in s.values))

    def type_of(self, e: Expr, bsorts: dict) -> Optional[Type]:
        _, t = self.checker.expr(e, bsorts, True)
        return t

    # names -------------------------------------------------------------
    @staticmethod
    def var_symbol(name: str, primed: bool) -> str:
        return symbol(name + ("__p" if primed else ""))

    @staticmethod
    def bound_symbol(name: str) -> str:
        return symbol("i!" + name)

    # predicates ------------------------------------------------------------
    def pred(self, e: Expr, env: dict, bsorts: dict) -> tuple:
        op = e.op
        if op == "bool":
            return T, (T if e.value else F)
        if op == "var":
            return T, self.var_symbol(e.name, e.primed)
        if op == "bvar":
            return T, env[e.name]
        if op == "and":
            return k_and([self.pred(a, env, bsorts) for a in e.args])
        if op == "or":
            return k_or([self.pred(a, env, bsorts) for a in e.args])
        if op == "not":
            return k_not(self.pred(e.args[0], env, bsorts))
        if op == "implies":
            a, b = (self.pred(x, env, bsorts) for x in e.args)
            return k_or([k_not(a), b])
        if op == "iff":
            (da, va), (db, vb) = (self.pred(x, env, bsorts) for x in e.args)
            return s_and(da, db), s_eq(va, vb)
        if op == "wd":
            d, v = self.pred(e.args[0], env, bsorts)
            return T, s_and(d, v)
        if op in ("forall", "exists"):
            return self.quant(e, env, bsorts)
        if op == "eq":
            return self.equality(e, env, bsorts)
        if op == "member":
            x, s = e.args
            sv = self.set_value(s, env, bsorts)
            if x.op == "maplet":
                (d1, a), (d2, b) = (self.term(y, env, bsorts) for y in x.args)
                return s_and(d1, d2, sv.d), sv.mem(a, b)
            dx, tx = self.term(x, env, bsorts)
            return s_and(dx, sv.d), sv.mem(tx)
        if op == "subset":
            a, b = (self.set_value(x, env, bsorts) for x in e.args)
            typ = self._join(a.typ, b.typ)
            cells = self.cells(typ)
            return s_and(a.d, b.d), s_and(*(s_implies(a.mem(*c), b.mem(*c)) for c in cells))
        if op in ("lt", "le"):
            (da, ta), (db, tb) = (self.term(x, env, bsorts) for x in e.args)
            sym = "<" if op == "lt" else "<="
            return s_and(da, db), f"({sym} {ta} {tb})"
        raise ValueError(f"cannot encode predicate operator {op}")

    def quant(self, e: Expr, env: dict, bsorts: dict) -> tuple:
        rng, term = e.args
        names = [n for n, _ in e.binders]
        domains = [[(self.value(v, self.m.root(s))) for v in self.m.sort_map[s].values] for _, s in e.binders]
        inner_s = dict(bsorts)
        for n, s in e.binders:
            inner_s[n] = s
        parts = []
        for combo in itertools.product(*domains):
            inner = dict(env)
            inner.update(zip(names, combo))
            r = self.pred(rng, inner, inner_s)
            t = self.pred(term, inner, inner_s)
            parts.append(k_or([k_not(r), t]) if e.op == "forall" else k_and([r, t]))
        return k_and(parts) if e.op == "forall" else k_or(parts)

    def equality(self, e: Expr, env: dict, bsorts: dict) -> tuple:
        a, b = e.args
        ta = self.type_of(a, bsorts)
        tb = self.type_of(b, bsorts)
        kinds = {t.kind for t in (ta, tb) if t is not None}
        if kinds & {"set", "rel"}:
            sa, sb = self.set_value(a, env, bsorts), self.set_value(b, env, bsorts)
            typ = self._join(sa.typ, sb.typ)
            return s_and(sa.d, sb.d), s_and(*(s_eq(sa.mem(*c), sb.mem(*c)) for c in self.cells(typ)))
        if kinds == {"bool"}:
            (da, va), (db, vb) = self.pred(a, env, bsorts), self.pred(b, env, bsorts)
            return s_and(da, db), s_eq(va, vb)
        if a.op == "maplet" or b.op == "maplet":
            (d1, x1), (d2, y1) = (self.term(x, env, bsorts) for x in a.args)
            (d3, x2), (d4, y2) = (self.term(x, env, bsorts) for x in b.args)
            return s_and(d1, d2, d3, d4), s_and(s_eq(x1, x2), s_eq(y1, y2))
        (da, xa), (db, xb) = self.term(a, env, bsorts), self.term(b, env, bsorts)
        return s_and(da, db), s_eq(xa, xb)

    def _join(self, a: Type, b: Type) -> Type:
        from .typecheck import unify

        t = unify(a, b, self.m)
        return t if t is not None else a

    def cells(self, typ: Type) -> list:
        """Argument tuples over which two sets of this type are compared."""
        if typ.sort is None:
            return []
        if typ.kind == "rel":
            return [(x, y) for x in self.carrier(typ.sort) for y in self.carrier(typ.cod)]
        return [(x,) for x in self.carrier(typ.sort)]

    # element terms ---------------------------------------------------------
    def term(self, e: Expr, env: dict, bsorts: dict) -> tuple:
        op = e.op
        if op == "int":
            return T, self.value(e.value, None)
        if op == "elem":
            return T, self.value(e.name, self.m.element_sort[e.name])
        if op == "var":
            return T, self.var_symbol(e.name, e.primed)
        if op == "bvar":
            return T, env[e.name]
        if op in ("add", "sub"):
            (da, ta), (db, tb) = (self.term(x, env, bsorts) for x in e.args)
            raw = f"({'+' if op == 'add' else '-'} {ta} {tb})"
            s = self.m.sort_map.get(e.sort) if e.sort else None
            if s is None or not s.is_int:
                return s_and(da, db), raw
            lo, size = s.lo, s.hi - s.lo + 1
            if s.modular:
                base = raw if lo == 0 else f"(- {raw} {self.value(lo, None)})"
                out = f"(mod {base} {size})"
                return s_and(da, db), out if lo == 0 else f"(+ {out} {self.value(lo, None)})"
            return s_and(da, db, self.in_sort(s.name, raw)), raw
        if op == "apply":
            f, x = e.args
            fv = self.set_value(f, env, bsorts)
            dx, tx = self.term(x, env, bsorts)
            outs = self.carrier(fv.typ.cod) if fv.typ.kind == "rel" else []
            hits = [fv.mem(tx, c) for c in outs]
            exactly_one = s_or(*(s_and(h, *(s_not(o) for j, o in enumerate(hits) if j != i))
                                 for i, h in enumerate(hits)))
            if not outs:
                return F, T
            val = outs[-1]
            for c, h in reversed(list(zip(outs[:-1], hits[:-1]))):
                val = f"(ite {h} {c} {val})"
            return s_and(fv.d, dx, exactly_one), val
        raise ValueError(f"cannot encode term operator {op}")

    # set terms -------------------------------------------------------------
    def set_value(self, e: Expr, env: dict, bsorts: dict) -> _SetVal:
        op = e.op
        typ = self.type_of(e, bsorts) or Type("set", None)
        if op == "var":
            decl = self.m.var_map[e.name].type
            sym = self.var_symbol(e.name, e.primed)
            if decl.kind == "set":
                return _SetVal(T, lambda a: s_and(self.in_sort(decl.sort, a), f"({sym} {a})"), typ)
            return _SetVal(T, lambda a, b: s_and(self.in_sort(decl.sort, a), self.in_sort(decl.cod, b),
                                                 f"({sym} {a} {b})"), typ)
        if op == "sortset":
            return _SetVal(T, lambda a: self.in_sort(e.name, a), typ)
        if op == "setlit":
            ds, elems = [], []
            for x in e.args:
                if x.op == "maplet":
                    (d1, a), (d2, b) = (self.term(y, env, bsorts) for y in x.args)
                    ds += [d1, d2]
                    elems.append((a, b))
                else:
                    d, a = self.term(x, env, bsorts)
                    ds.append(d)
                    elems.append((a,))
            return _SetVal(s_and(*ds), lambda *args: s_or(*(s_and(*(s_eq(p, q) for p, q in zip(args, el)))
                                                           for el in elems)), typ)
        if op == "interval":
            (da, lo), (db, hi) = (self.term(x, env, bsorts) for x in e.args)
            return _SetVal(s_and(da, db), lambda a: s_and(f"(<= {lo} {a})", f"(<= {a} {hi})"), typ)
        if op in ("union", "inter", "diff"):
            a, b = (self.set_value(x, env, bsorts) for x in e.args)
            comb = {"union": lambda p, q: s_or(p, q), "inter": lambda p, q: s_and(p, q),
                    "diff": lambda p, q: s_and(p, s_not(q))}[op]
            return _SetVal(s_and(a.d, b.d), lambda *args: comb(a.mem(*args), b.mem(*args)), typ)
        if op in ("dom", "ran", "inv"):
            r = self.set_value(e.args[0], env, bsorts)
            if op == "inv":
                return _SetVal(r.d, lambda a, b: r.mem(b, a), typ)
            if op == "dom":
                cs = self.carrier(r.typ.cod)
                return _SetVal(r.d, lambda a: s_or(*(r.mem(a, c) for c in cs)), typ)
            cs = self.carrier(r.typ.sort)
            return _SetVal(r.d, lambda b: s_or(*(r.mem(c, b) for c in cs)), typ)
        if op == "img":
            r, s = (self.set_value(x, env, bsorts) for x in e.args)
            cs = self.carrier(r.typ.sort)
            return _SetVal(s_and(r.d, s.d), lambda b: s_or(*(s_and(s.mem(c), r.mem(c, b)) for c in cs)), typ)
        if op == "domsub":
            s, r = (self.set_value(x, env, bsorts) for x in e.args)
            return _SetVal(s_and(s.d, r.d), lambda a, b: s_and(s_not(s.mem(a)), r.mem(a, b)), typ)
        if op == "ransub":
            r, s = (self.set_value(x, env, bsorts) for x in e.args)
            return _SetVal(s_and(s.d, r.d), lambda a, b: s_and(r.mem(a, b), s_not(s.mem(b))), typ)
        if op == "ovl":
            r, s = (self.set_value(x, env, bsorts) for x in e.args)
            cs = self.carrier(s.typ.cod if s.typ.cod else r.typ.cod)

            def mem(a, b):
                in_dom = s_or(*(s.mem(a, c) for c in cs))
                return s_or(s.mem(a, b), s_and(s_not(in_dom), r.mem(a, b)))
            return _SetVal(s_and(r.d, s.d), mem, typ)
        raise ValueError(f"cannot encode set operator {op}")


# ---------------------------------------------------------------------------


def _literals(exprs) -> set:
    out = set()
    for e in exprs:
        for sub in walk(e):
            if sub.op == "int":
                out.add(sub.value)
    return out


def _uses_primed(exprs) -> bool:
    return any(sub.op == "var" and sub.primed for e in exprs for sub in walk(e))


def encode_obligation(po: ProofObligation, machine: Machine) -> str:
    """An SMT-LIB 2 script that is unsat iff ``po`` is valid."""
    from .obligations import all_hypotheses
    from .parser import show_expr

    m = machine
    hyps = all_hypotheses(po, m)
    exprs = list(hyps) + [po.goal]
    enc = Encoder(m, _literals(exprs))
    lines = [f"; obligation {po.name}", f"; origin {po.origin}", "(set-logic ALL)"]
    for s in m.sorts:
        if s.kind == "enum" and s.parent is None:
            cons = " ".join(f"({symbol(s.name + '__' + c)})" for c in s.carrier)
            lines.append(f"(declare-datatypes (({symbol(s.name)} 0)) (({cons})))")
    copies = [False] + ([True] if _uses_primed(exprs) else [])
    facts = []
    for primed in copies:
        for v in m.variables:
            sym = enc.var_symbol(v.name, primed)
            t = v.type
            if t.kind == "bool":
                lines.append(f"(declare-fun {sym} () Bool)")
            elif t.kind == "elem":
                lines.append(f"(declare-fun {sym} () {enc.smt_sort(m.root(t.sort))})")
                facts.append(enc.in_sort(t.sort, sym))
            elif t.kind == "set":
                lines.append(f"(declare-fun {sym} ({enc.smt_sort(m.root(t.sort))}) Bool)")
            else:
                lines.append(f"(declare-fun {sym} ({enc.smt_sort(m.root(t.sort))} "
                             f"{enc.smt_sort(m.root(t.cod))}) Bool)")
                facts.extend(_function_facts(enc, sym, t))
    env, bsorts = {}, {}
    for n, s in po.context:
        sym = enc.bound_symbol(n)
        env[n] = sym
        bsorts[n] = s
        lines.append(f"(declare-fun {sym} () {enc.smt_sort(m.root(s))})")
        facts.append(enc.in_sort(s, sym))
    for f in facts:
        if f != T:
            lines.append(f"(assert {f})")
    for h in hyps:
        d, v = enc.pred(h, env, bsorts)
        lines.append(f"; {show_expr(h)}")
        lines.append(f"(assert {s_and(d, v)})")
    d, v = enc.pred(po.goal, env, bsorts)
    lines.append(f"; goal {show_expr(po.goal)}")
    lines.append(f"(assert {s_not(s_and(d, v))})")
    lines.append("(check-sat)")
    lines.append("(exit)")
    return "\n".join(_one_line(x) for x in lines) + "\n"


def _one_line(x: str) -> str:
    return x.replace("\n", " ") if x.startswith(";") else x


def _function_facts(enc: Encoder, sym: str, t: Type) -> list:
    """Functionality (and totality) of a declared function variable."""
    m = enc.m
    if t.kind == "rel":
        return []
    dom_vals = [enc.value(v, m.root(t.sort)) for v in m.sort_map[t.sort].values]
    cod_vals = [enc.value(v, m.root(t.cod)) for v in m.sort_map[t.cod].values]
    out = []
    for a in dom_vals:
        hits = [f"({sym} {a} {b})" for b in cod_vals]
        for i, j in itertools.combinations(range(len(hits)), 2):
            out.append(s_not(s_and(hits[i], hits[j])))
        if t.kind == "tfun":
            out.append(s_or(*hits))
    return out


def well_formed(script: str) -> list:
    """Structural problems of a script: unbalanced parentheses or undeclared
    symbols.  An empty list means the script is well formed."""
    problems = []
    depth = 0
    text = "\n".join(line.split(";", 1)[0] if not line.startswith(";") else "" for line in script.splitlines())
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                problems.append("unbalanced ')'")
                depth = 0
    if depth:
        problems.append("unbalanced '('")
    declared = set()
    for mt in re.finditer(r"\(declare-fun (\S+)", text):
        declared.add(mt.group(1))
    for mt in re.finditer(r"\(declare-datatypes \(\((\S+) 0\)\) \(\((.*)\)\)\)", text):
        declared.add(mt.group(1))
        declared.update(re.findall(r"\((\S+?)\)", mt.group(2)))
    builtin = {"and", "or", "not", "=>", "=", "ite", "true", "false", "<", "<=", "+", "-", "mod",
               "assert", "check-sat", "exit", "set-logic", "ALL", "declare-fun", "declare-datatypes",
               "Bool", "Int", "0"}
    for tok in re.findall(r"\|[^|]*\||[^\s()]+", text):
        if tok in builtin or tok in declared or re.fullmatch(r"\d+", tok):
            continue
        problems.append(f"undeclared symbol {tok}")
    return sorted(set(problems))
