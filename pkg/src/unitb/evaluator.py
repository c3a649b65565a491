"""Three-valued evaluation, valuation enumeration and event successors.

Values: elements are strings, integers are ints, sets are frozensets and
functions/relations are frozensets of pairs.  ``BOT`` marks an ill-defined
value (a partial function applied outside its domain, an out-of-range
bounded integer).  Predicates evaluate to True, False or BOT (Kleene logic).

Expressions are compiled once into closures ``f(cur, nxt, bound)`` over
three dictionaries: current state, next (primed) state and bound names.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .kernel import (
    SKIP, Event, Expr, Machine, Type, mk, mk_and, free_bvars, var, walk,
)


class _Bot:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "BOT"

    def __bool__(self):
        raise TypeError("BOT has no truth value")


BOT = _Bot()


class EvalError(Exception):
    pass


class LimitExceeded(Exception):
    def __init__(self, what: str, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(f"{what}: {size} exceeds the limit of {limit}")


class WDError(Exception):
    """Ill-defined guard or action at a concrete state."""

    def __init__(self, message: str, state: dict, instance: str = ""):
        self.state = state
        self.instance = instance
        super().__init__(message)


# ---------------------------------------------------------------------------
# Domains


def subsets(values: tuple) -> list:
    out = []
    for k in range(len(values) + 1):
        for combo in itertools.combinations(values, k):
            out.append(frozenset(combo))
    return out


def type_domain(machine: Machine, t: Type) -> list:
    """All values of a declared variable type, in a fixed order."""
    sm = machine.sort_map
    if t.kind == "bool":
        return [False, True]
    if t.kind == "elem":
        return list(sm[t.sort].values)
    if t.kind == "set":
        return subsets(sm[t.sort].values)
    dom = sm[t.sort].values
    cod = sm[t.cod].values
    if t.kind == "tfun":
        return [frozenset(zip(dom, combo)) for combo in itertools.product(cod, repeat=len(dom))]
    out = []
    for combo in itertools.product((None,) + tuple(cod), repeat=len(dom)):
        out.append(frozenset((d, c) for d, c in zip(dom, combo) if c is not None))
    out.sort(key=len)
    return out


def domain_size(machine: Machine, t: Type) -> int:
    sm = machine.sort_map
    if t.kind == "bool":
        return 2
    if t.kind == "elem":
        return sm[t.sort].size
    if t.kind == "set":
        return 2 ** sm[t.sort].size
    n, k = sm[t.sort].size, sm[t.cod].size
    return k ** n if t.kind == "tfun" else (k + 1) ** n


def in_type(machine: Machine, t: Type, v) -> bool:
    sm = machine.sort_map
    if v is BOT:
        return False
    if t.kind == "bool":
        return isinstance(v, bool)
    if t.kind == "elem":
        return not isinstance(v, bool) and v in sm[t.sort].values
    if not isinstance(v, frozenset):
        return False
    if t.kind == "set":
        vals = sm[t.sort].values
        return all(not isinstance(x, (bool, tuple)) and x in vals for x in v)
    dvals, cvals = sm[t.sort].values, sm[t.cod].values
    seen = set()
    for p in v:
        if not isinstance(p, tuple) or p[0] not in dvals or p[1] not in cvals or p[0] in seen:
            return False
        seen.add(p[0])
    if t.kind == "tfun":
        return len(seen) == len(dvals)
    return True


def valuation_count(machine: Machine) -> int:
    n = 1
    for v in machine.variables:
        n *= domain_size(machine, v.type)
    return n


def enumerate_valuations(machine: Machine, limit: int = 10_000_000) -> Iterator[dict]:
    """Every valuation of the machine's variables exactly once."""
    size = valuation_count(machine)
    if size > limit:
        raise LimitExceeded("valuation space", size, limit)
    names = [v.name for v in machine.variables]
    domains = [type_domain(machine, v.type) for v in machine.variables]
    for combo in itertools.product(*domains):
        yield dict(zip(names, combo))


# ---------------------------------------------------------------------------
# Compilation


def _and(fs):
    def f(c, n, b):
        res = True
        for g in fs:
            v = g(c, n, b)
            if v is False:
                return False
            if v is BOT:
                res = BOT
        return res
    return f


def _or(fs):
    def f(c, n, b):
        res = False
        for g in fs:
            v = g(c, n, b)
            if v is True:
                return True
            if v is BOT:
                res = BOT
        return res
    return f


def _apply(rel, x):
    out = BOT
    for a, y in rel:
        if a == x:
            if out is not BOT:
                return BOT
            out = y
    return out


def _strict2(op):
    def make(fa, fb):
        def f(c, n, b):
            x = fa(c, n, b)
            if x is BOT:
                return BOT
            y = fb(c, n, b)
            if y is BOT:
                return BOT
            return op(x, y)
        return f
    return make


def _strict1(op):
    def make(fa):
        def f(c, n, b):
            x = fa(c, n, b)
            if x is BOT:
                return BOT
            return op(x)
        return f
    return make


def _ovl(r, s):
    d = {a for a, _ in s}
    return frozenset(p for p in r if p[0] not in d) | s


_BINARY = {
    "eq": lambda x, y: x == y,
    "member": lambda x, s: x in s,
    "subset": lambda a, b: a <= b,
    "union": lambda a, b: a | b,
    "inter": lambda a, b: a & b,
    "diff": lambda a, b: a - b,
    "img": lambda r, s: frozenset(y for x, y in r if x in s),
    "domsub": lambda s, r: frozenset(p for p in r if p[0] not in s),
    "ransub": lambda r, s: frozenset(p for p in r if p[1] not in s),
    "ovl": _ovl,
    "apply": _apply,
    "maplet": lambda x, y: (x, y),
    "lt": lambda x, y: x < y,
    "le": lambda x, y: x <= y,
    "iff": lambda x, y: x == y,
    "interval": lambda lo, hi: frozenset(range(lo, hi + 1)),
}

_UNARY = {
    "dom": lambda r: frozenset(x for x, _ in r),
    "ran": lambda r: frozenset(y for _, y in r),
    "inv": lambda r: frozenset((y, x) for x, y in r),
    "not": lambda v: not v,
}


class Compiler:
    """Compiles expressions of one machine; results are cached."""

    def __init__(self, machine: Machine):
        self.m = machine
        self._cache: dict = {}

    def __call__(self, e: Expr) -> Callable:
        f = self._cache.get(e)
        if f is None:
            f = self._compile(e)
            self._cache[e] = f
        return f

    def _compile(self, e: Expr) -> Callable:
        op = e.op
        if op in ("bool", "int"):
            v = e.value
            return lambda c, n, b: v
        if op == "elem":
            v = e.name
            return lambda c, n, b: v
        if op == "sortset":
            v = frozenset(self.m.sort_map[e.name].values)
            return lambda c, n, b: v
        if op == "var":
            name = e.name
            if e.primed:
                return lambda c, n, b: n[name]
            return lambda c, n, b: c[name]
        if op == "bvar":
            name = e.name
            return lambda c, n, b: b[name]
        args = [self(a) for a in e.args]
        if op == "and":
            return _and(args)
        if op == "or":
            return _or(args)
        if op == "implies":
            fa, fb = args

            def f(c, n, b):
                x = fa(c, n, b)
                if x is False:
                    return True
                y = fb(c, n, b)
                if y is True:
                    return True
                if x is BOT or y is BOT:
                    return BOT
                return False
            return f
        if op == "wd":
            fa = args[0]

            def f(c, n, b):
                v = fa(c, n, b)
                return False if v is BOT else v
            return f
        if op in ("forall", "exists"):
            return self._quant(e, args)
        if op == "setlit":
            def f(c, n, b):
                out = []
                for g in args:
                    v = g(c, n, b)
                    if v is BOT:
                        return BOT
                    out.append(v)
                return frozenset(out)
            return f
        if op in ("add", "sub"):
            return self._arith(e, args)
        if op in _UNARY:
            return _strict1(_UNARY[op])(args[0])
        if op in _BINARY:
            return _strict2(_BINARY[op])(*args)
        raise EvalError(f"cannot evaluate operator {op}")

    def _arith(self, e: Expr, args) -> Callable:
        fa, fb = args
        sign = 1 if e.op == "add" else -1
        s = self.m.sort_map.get(e.sort) if e.sort else None
        if s is None or not s.is_int:
            return _strict2(lambda x, y: x + sign * y)(fa, fb)
        lo, hi, size = s.lo, s.hi, s.hi - s.lo + 1
        if s.modular:
            return _strict2(lambda x, y: (x + sign * y - lo) % size + lo)(fa, fb)

        def bounded(x, y):
            r = x + sign * y
            return r if lo <= r <= hi else BOT
        return _strict2(bounded)(fa, fb)

    def _quant(self, e: Expr, args) -> Callable:
        rng, term = args
        names = [n for n, _ in e.binders]
        domains = [self.m.sort_map[s].values for _, s in e.binders]
        is_all = e.op == "forall"

        def f(c, n, b):
            inner = dict(b)
            res = is_all
            for combo in itertools.product(*domains):
                for k, v in zip(names, combo):
                    inner[k] = v
                r = rng(c, n, inner)
                if r is False:
                    continue
                t = term(c, n, inner)
                # forall: range => term ; exists: range and term
                if is_all:
                    if t is True:
                        continue
                    if r is True and t is False:
                        return False
                    res = BOT
                else:
                    if r is True and t is True:
                        return True
                    if t is False:
                        continue
                    res = BOT
            return res
        return f


_compilers: dict = {}


def compiler_for(machine: Machine) -> Compiler:
    key = id(machine)
    entry = _compilers.get(key)
    if entry is None or entry[0] is not machine:
        if len(_compilers) > 64:
            _compilers.clear()
        entry = (machine, Compiler(machine))
        _compilers[key] = entry
    return entry[1]


def eval_expr(expr: Expr, val: dict, machine: Machine, bound: Optional[dict] = None,
              nxt: Optional[dict] = None):
    return compiler_for(machine)(expr)(val, nxt or {}, bound or {})


def eval_pred(pred: Expr, val: dict, machine: Machine, bound: Optional[dict] = None,
              nxt: Optional[dict] = None):
    """True, False or BOT."""
    return eval_expr(pred, val, machine, bound, nxt)


# ---------------------------------------------------------------------------
# Actions


def _primed_refs(e: Expr) -> set:
    return {n.name for n in walk(e) if n.op == "var" and n.primed}


def order_assignments(action: tuple) -> list:
    """Choice assignments first, then deterministic ones in dependency order."""
    choices = [a for a in action if a.kind != "det"]
    dets = [a for a in action if a.kind == "det"]
    det_targets = {a.target for a in dets}
    done = {t for a in choices for t in a.targets}
    ordered = list(choices)
    pending = list(dets)
    while pending:
        progress = False
        for a in list(pending):
            refs = _primed_refs(a.expr) | (_primed_refs(a.arg) if a.arg is not None else set())
            if refs & det_targets - done - {a.target}:
                continue
            if a.target in refs:
                raise EvalError(f"assignment to {a.target} reads its own new value")
            ordered.append(a)
            done.add(a.target)
            pending.remove(a)
            progress = True
        if not progress:
            raise EvalError("cyclic dependency among the assignments of an action: "
                            + ", ".join(a.target for a in pending))
    return ordered


@dataclass
class CompiledEvent:
    event: Event
    coarse: Callable
    fine: Callable
    guard: Callable
    steps: list  # (assignment, compiled expr, compiled arg or None)
    st_domains: dict  # such-that assignment index -> list of target value tuples


def compile_event(machine: Machine, ev: Event) -> CompiledEvent:
    comp = compiler_for(machine)
    steps = []
    st_domains = {}
    for i, a in enumerate(order_assignments(ev.action)):
        steps.append((a, comp(a.expr), comp(a.arg) if a.arg is not None else None))
        if a.kind == "st":
            doms = [type_domain(machine, machine.var_map[t].type) for t in a.targets]
            st_domains[i] = list(itertools.product(*doms))
    return CompiledEvent(ev, comp(ev.coarse), comp(ev.fine), comp(ev.guard), steps, st_domains)


_events: dict = {}


def compiled_event(machine: Machine, ev: Event) -> CompiledEvent:
    key = (id(machine), ev.name)
    entry = _events.get(key)
    if entry is None or entry[0] is not machine or entry[1].event is not ev:
        if len(_events) > 512:
            _events.clear()
        entry = (machine, compile_event(machine, ev))
        _events[key] = entry
    return entry[1]


def apply_action(machine: Machine, ev: Event, cur: dict, bound: dict,
                 strict: bool = False, label: str = "") -> list:
    """All next states of ``ev`` at ``cur`` (guard not checked).

    Lenient mode drops ill-defined or out-of-type outcomes; strict mode
    raises WDError for them."""
    ce = compiled_event(machine, ev)
    results = []
    nxt = dict(cur)

    def fail(msg):
        if strict:
            raise WDError(msg, dict(cur), label or ev.name)

    def go(k):
        if k == len(ce.steps):
            results.append(dict(nxt))
            return
        a, fe, fa = ce.steps[k]
        vt = machine.var_map[a.targets[0]].type
        if a.kind == "st":
            saved = [nxt[t] for t in a.targets]
            for combo in ce.st_domains[k]:
                for t, v in zip(a.targets, combo):
                    nxt[t] = v
                r = fe(cur, nxt, bound)
                if r is BOT:
                    fail(f"ill-defined before-after predicate for {', '.join(a.targets)}")
                    continue
                if r:
                    go(k + 1)
            for t, v in zip(a.targets, saved):
                nxt[t] = v
            return
        t = a.target
        saved = nxt[t]
        arg = None
        if fa is not None:
            arg = fa(cur, nxt, bound)
            if arg is BOT:
                fail(f"ill-defined argument in the update of {t}")
                return
        val = fe(cur, nxt, bound)
        if val is BOT:
            fail(f"ill-defined right-hand side for {t}")
            return
        options = [val] if a.kind == "det" else sorted(val, key=_order_key)
        for v in options:
            if fa is not None:
                new = _ovl(cur[t], frozenset({(arg, v)}))
            else:
                new = v
            if not in_type(machine, vt, new):
                fail(f"value assigned to {t} leaves its type")
                continue
            nxt[t] = new
            go(k + 1)
        nxt[t] = saved

    go(0)
    return results


def _order_key(v):
    return (type(v).__name__, repr(v))


def successors(machine: Machine, state: dict, strict: bool = True) -> list:
    """(instance label, next state) pairs, Skip last."""
    from .kernel import event_instances, instance_label

    out = []
    for name, valuation in event_instances(machine):
        if name == SKIP:
            out.append((SKIP, dict(state)))
            continue
        ev = machine.event_map[name]
        ce = compiled_event(machine, ev)
        b = dict(valuation)
        label = instance_label(name, valuation)
        g = ce.guard(state, {}, b)
        if g is BOT:
            if strict:
                raise WDError(f"ill-defined guard of {label}", dict(state), label)
            continue
        if not g:
            continue
        for s2 in apply_action(machine, ev, state, b, strict, label):
            out.append((label, s2))
    return out


def before_after(machine: Machine, ev: Event) -> Expr:
    """The action as one predicate over current and primed variables."""
    parts = []
    frame = ev.frame
    for a in ev.action:
        if a.kind == "st":
            parts.append(a.expr)
            continue
        t = a.target
        tp = var(t, primed=True)
        if a.kind == "det":
            if a.arg is None:
                parts.append(mk("eq", tp, a.expr))
            else:
                upd = mk("ovl", var(t), mk("setlit", mk("maplet", a.arg, a.expr)))
                parts.append(mk("eq", tp, upd))
        else:
            if a.arg is None:
                parts.append(mk("member", tp, a.expr))
            else:
                point = mk("setlit", a.arg)
                parts.append(mk("eq", mk("domsub", point, tp), mk("domsub", point, var(t))))
                parts.append(mk("wd", mk("member", mk("apply", tp, a.arg), a.expr)))
    for v in machine.variables:
        if v.name not in frame:
            parts.append(mk("eq", var(v.name, primed=True), var(v.name)))
    return mk_and(*parts)


# ---------------------------------------------------------------------------
# Constraint-driven enumeration


class Slot:
    """A symbol to enumerate: ('cur'|'nxt'|'bnd', name) with its domain."""

    __slots__ = ("space", "name", "domain")

    def __init__(self, space: str, name: str, domain: list):
        self.space = space
        self.name = name
        self.domain = domain


def expr_symbols(e: Expr) -> set:
    out = set()
    for n in walk(e):
        if n.op == "var":
            out.add(("nxt" if n.primed else "cur", n.name))
    for b in free_bvars(e):
        out.add(("bnd", b))
    return out


def solve(slots: list, constraints: list, limit: int) -> Iterator[tuple]:
    """Yield (cur, nxt, bnd) dicts for assignments of ``slots`` under which
    every constraint (symbols, compiled predicate) is True.

    Each constraint is tested as soon as its symbols are bound.  ``limit``
    bounds the number of (partial) valuations visited; pruning usually keeps
    this far below the full product.  LimitExceeded is raised past it."""
    visited = [0]
    position = {(s.space, s.name): i for i, s in enumerate(slots)}
    checks = [[] for _ in range(len(slots) + 1)]
    for syms, fn in constraints:
        ready = max((position[x] + 1 for x in syms if x in position), default=0)
        checks[ready].append(fn)
    spaces = {"cur": {}, "nxt": {}, "bnd": {}}
    c, n, b = spaces["cur"], spaces["nxt"], spaces["bnd"]
    for fn in checks[0]:
        if fn(c, n, b) is not True:
            return

    def go(i):
        if i == len(slots):
            yield c, n, b
            return
        s = slots[i]
        target = spaces[s.space]
        for v in s.domain:
            visited[0] += 1
            if visited[0] > limit:
                raise LimitExceeded("enumeration", visited[0], limit)
            target[s.name] = v
            if all(fn(c, n, b) is True for fn in checks[i + 1]):
                yield from go(i + 1)
        target.pop(s.name, None)

    yield from go(0)


def ordered_slots(machine: Machine, context: tuple, state_names, primed_names=()) -> list:
    """Slots for bound names first, then state variables, then primed ones."""
    sm = machine.sort_map
    slots = [Slot("bnd", n, list(sm[s].values)) for n, s in context]
    for v in machine.variables:
        if v.name in state_names:
            slots.append(Slot("cur", v.name, type_domain(machine, v.type)))
    for v in machine.variables:
        if v.name in primed_names:
            slots.append(Slot("nxt", v.name, type_domain(machine, v.type)))
    return slots


def satisfying(machine: Machine, pred: Expr, limit: int = 10_000_000) -> Iterator[dict]:
    """Full valuations satisfying ``pred`` (used to compute initial states)."""
    comp = compiler_for(machine)
    names = {v.name for v in machine.variables}
    slots = ordered_slots(machine, (), names)
    cons = [(expr_symbols(p), comp(p)) for p in (pred.args if pred.op == "and" else (pred,))]
    for c, _, _ in solve(slots, cons, limit):
        yield dict(c)


__all__ = [
    "BOT", "Compiler", "EvalError", "LimitExceeded", "WDError", "apply_action",
    "before_after", "compiler_for", "enumerate_valuations", "eval_expr",
    "eval_pred", "in_type", "satisfying", "solve", "successors", "type_domain",
]
