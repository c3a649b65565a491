"""Core data model: sorts, typed expressions, events, machines and obligations.

Everything here is immutable.  Expressions are a single generic node type
keyed by an operator tag, which keeps substitution, normalization and
printing uniform across the other modules.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, Optional

SKIP = "Skip"


class KernelError(Exception):
    """Raised for structural errors that make a machine unusable."""


# ---------------------------------------------------------------------------
# Sorts and types


@dataclass(frozen=True)
class Sort:
    name: str
    kind: str  # "enum" or "int"
    carrier: tuple = ()
    lo: int = 0
    hi: int = 0
    modular: bool = False
    # an enumerated sort whose elements belong to another sort is a subsort
    parent: Optional[str] = None

    def __post_init__(self):
        if self.kind == "enum":
            if not self.carrier:
                raise KernelError(f"sort {self.name} has an empty carrier")
            if len(set(self.carrier)) != len(self.carrier):
                raise KernelError(f"sort {self.name} has duplicate elements")
        elif self.kind == "int":
            if self.lo > self.hi:
                raise KernelError(f"sort {self.name}: lower bound exceeds upper bound")
        else:
            raise KernelError(f"unknown sort kind {self.kind!r}")

    @cached_property
    def values(self) -> tuple:
        if self.kind == "enum":
            return tuple(self.carrier)
        return tuple(range(self.lo, self.hi + 1))

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def is_int(self) -> bool:
        return self.kind == "int"


INT_LITERAL = "<int>"  # pseudo sort of integer literals; unifies with any int sort


@dataclass(frozen=True)
class Type:
    """Semantic type.  ``kind`` is one of bool, elem, set, pfun, tfun or rel.

    Declared variables use pfun/tfun; expressions over relations use rel.
    """

    kind: str
    sort: Optional[str] = None
    cod: Optional[str] = None

    def __str__(self) -> str:
        if self.kind == "bool":
            return "bool"
        if self.kind == "elem":
            return self.sort or "?"
        if self.kind == "set":
            return f"set({self.sort})"
        if self.kind == "pfun":
            return f"{self.sort} +-> {self.cod}"
        if self.kind == "tfun":
            return f"{self.sort} --> {self.cod}"
        return f"rel({self.sort}, {self.cod})"


BOOL = Type("bool")


@dataclass(frozen=True)
class VarDecl:
    name: str
    type: Type


# ---------------------------------------------------------------------------
# Expressions

BINDER_OPS = frozenset({"forall", "exists"})


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple = ()
    name: Optional[str] = None
    value: object = None
    primed: bool = False
    binders: tuple = ()  # ((name, sort), ...) for quantifiers
    # annotation filled by the type checker (e.g. the sort of an arithmetic
    # result); it never takes part in equality
    sort: Optional[str] = field(default=None, compare=False)
    span: object = field(default=None, compare=False)

    def __repr__(self) -> str:  # compact, for debugging
        try:
            from .parser import show_expr

            return f"<{show_expr(self)}>"
        except Exception:
            return f"Expr({self.op!r}, {self.args!r}, name={self.name!r}, value={self.value!r})"


TRUE = Expr("bool", value=True)
FALSE = Expr("bool", value=False)


def var(name: str, primed: bool = False) -> Expr:
    return Expr("var", name=name, primed=primed)


def bvar(name: str) -> Expr:
    return Expr("bvar", name=name)


def elem(name: str) -> Expr:
    return Expr("elem", name=name)


def intlit(v: int) -> Expr:
    return Expr("int", value=v)


def mk(op: str, *args: Expr) -> Expr:
    return Expr(op, tuple(args))


def mk_and(*parts: Expr) -> Expr:
    flat = []
    for p in parts:
        if p.op == "and":
            flat.extend(p.args)
        elif p == TRUE:
            continue
        else:
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return Expr("and", tuple(flat))


def mk_or(*parts: Expr) -> Expr:
    flat = []
    for p in parts:
        if p.op == "or":
            flat.extend(p.args)
        elif p == FALSE:
            continue
        else:
            flat.append(p)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Expr("or", tuple(flat))


def mk_not(p: Expr) -> Expr:
    if p.op == "not":
        return p.args[0]
    if p == TRUE:
        return FALSE
    if p == FALSE:
        return TRUE
    return Expr("not", (p,))


def mk_implies(p: Expr, q: Expr) -> Expr:
    return Expr("implies", (p, q))


def conjuncts(p: Expr) -> tuple:
    if p.op == "and":
        return p.args
    if p == TRUE:
        return ()
    return (p,)


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for a in e.args:
        yield from walk(a)


def state_vars(e: Expr) -> set:
    """Names of state variables occurring in ``e``; primed ones get a quote."""
    out = set()
    for n in walk(e):
        if n.op == "var":
            out.add(n.name + "'" if n.primed else n.name)
    return out


def free_bvars(e: Expr, bound: frozenset = frozenset()) -> set:
    if e.op == "bvar":
        return set() if e.name in bound else {e.name}
    if e.op in BINDER_OPS:
        inner = bound | {b for b, _ in e.binders}
        out = set()
        for a in e.args:
            out |= free_bvars(a, inner)
        return out
    out = set()
    for a in e.args:
        out |= free_bvars(a, bound)
    return out


def has_primed(e: Expr) -> bool:
    return any(n.op == "var" and n.primed for n in walk(e))


def _rebuild(e: Expr, args: tuple) -> Expr:
    if e.op == "and":
        return mk_and(*args)
    if e.op == "or":
        return mk_or(*args)
    return replace(e, args=args)


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace free bound-variables (indices, free variables) by expressions.

    Quantifier binders that would capture a variable of the replacement are
    renamed first.
    """
    if not mapping:
        return e
    if e.op == "bvar":
        return mapping.get(e.name, e)
    if e.op in BINDER_OPS:
        names = {b for b, _ in e.binders}
        inner = {k: v for k, v in mapping.items() if k not in names}
        if not inner:
            return e
        captured = set()
        for v in inner.values():
            captured |= free_bvars(v)
        binders = list(e.binders)
        renames = {}
        used = captured | set(inner) | free_bvars(e)
        for i, (b, s) in enumerate(binders):
            if b in captured:
                fresh = _fresh(b, used)
                used.add(fresh)
                renames[b] = bvar(fresh)
                binders[i] = (fresh, s)
        args = tuple(substitute(a, renames) for a in e.args) if renames else e.args
        args = tuple(substitute(a, inner) for a in args)
        return replace(e, args=args, binders=tuple(binders))
    if not e.args:
        return e
    return _rebuild(e, tuple(substitute(a, mapping) for a in e.args))


def _fresh(base: str, used: set) -> str:
    for i in itertools.count(1):
        cand = f"{base}_{i}"
        if cand not in used:
            return cand
    raise AssertionError


def prime(e: Expr, names: Optional[Iterable[str]] = None) -> Expr:
    """Prime state variables (all of them, or only those in ``names``)."""
    wanted = None if names is None else set(names)
    if e.op == "var":
        if not e.primed and (wanted is None or e.name in wanted):
            return replace(e, primed=True)
        return e
    if not e.args:
        return e
    return _rebuild(e, tuple(prime(a, names) for a in e.args))


def rename_vars(e: Expr, mapping: dict) -> Expr:
    if e.op == "var" and e.name in mapping:
        return replace(e, name=mapping[e.name])
    if not e.args:
        return e
    return _rebuild(e, tuple(rename_vars(a, mapping) for a in e.args))


# AC-normalization and alpha-renaming, used for syntactic matching

_COMMUTATIVE = frozenset({"and", "or", "eq", "union", "inter", "iff"})


def canonical(e: Expr) -> Expr:
    """Normal form modulo associativity/commutativity of the connectives and
    renaming of quantified variables.  Only used for comparisons."""
    return _canon(e, {}, [0])


def _canon(e: Expr, ren: dict, counter: list) -> Expr:
    if e.op == "bvar":
        return bvar(ren.get(e.name, e.name))
    if e.op in BINDER_OPS:
        inner = dict(ren)
        binders = []
        for b, s in e.binders:
            counter[0] += 1
            nb = f"%{counter[0]}"
            inner[b] = nb
            binders.append((nb, s))
        args = tuple(_canon(a, inner, counter) for a in e.args)
        return Expr(e.op, args, binders=tuple(binders))
    if not e.args:
        return Expr(e.op, (), name=e.name, value=e.value, primed=e.primed)
    args = [_canon(a, ren, counter) for a in e.args]
    if e.op in ("and", "or"):
        flat = []
        for a in args:
            if a.op == e.op:
                flat.extend(a.args)
            else:
                flat.append(a)
        unit = TRUE if e.op == "and" else FALSE
        zero = FALSE if e.op == "and" else TRUE
        if zero in flat:
            return zero
        flat = sorted({a for a in flat if a != unit}, key=_key)
        if not flat:
            return unit
        if len(flat) == 1:
            return flat[0]
        return Expr(e.op, tuple(flat))
    if e.op == "not" and args[0].op == "not":
        return args[0].args[0]
    if e.op in _COMMUTATIVE:
        args = sorted(args, key=_key)
    return Expr(e.op, tuple(args), name=e.name, value=e.value, primed=e.primed)


def _key(e: Expr) -> str:
    return _skey(e)


def _skey(e: Expr) -> str:
    head = f"{e.op}:{e.name}:{e.value!r}:{int(e.primed)}:{e.binders}"
    if not e.args:
        return head
    return head + "(" + ",".join(_skey(a) for a in e.args) + ")"


def ac_equal(a: Expr, b: Expr) -> bool:
    return canonical(a) == canonical(b)


# ---------------------------------------------------------------------------
# Actions, events, properties


@dataclass(frozen=True)
class Assignment:
    """One assignment of an action.

    kind "det":   target := expr            (target(arg) := expr when arg given)
    kind "in":    target :: expr            (nondeterministic choice from a set)
    kind "st":    targets :| expr           (before-after predicate)
    """

    kind: str
    targets: tuple
    expr: Expr
    arg: Optional[Expr] = None

    @property
    def target(self) -> str:
        return self.targets[0]


@dataclass(frozen=True)
class Event:
    name: str
    indices: tuple = ()  # ((name, sort), ...)
    coarse: Optional[Expr] = None
    fine: Optional[Expr] = None
    guard: Optional[Expr] = None
    action: tuple = ()  # Assignments

    @property
    def is_skip(self) -> bool:
        return self.name == SKIP

    @property
    def frame(self) -> frozenset:
        out = set()
        for a in self.action:
            out.update(a.targets)
        return frozenset(out)


SKIP_EVENT = Event(SKIP, (), FALSE, TRUE, TRUE, ())


@dataclass(frozen=True)
class Property:
    label: str
    kind: str  # invariant, unless, leadsto, transient
    p: Expr
    q: Optional[Expr] = None
    free: tuple = ()  # ((name, sort), ...)

    def describe(self) -> str:
        from .parser import show_expr

        if self.kind == "invariant":
            return show_expr(self.p)
        if self.kind == "transient":
            return "tr " + show_expr(self.p)
        sym = "~>" if self.kind == "leadsto" else "un"
        return f"{show_expr(self.p)} {sym} {show_expr(self.q)}"


@dataclass(frozen=True)
class Step:
    """One rule application of a derivation script."""

    rule: str
    preds: tuple = ()
    labels: tuple = ()
    event: Optional[str] = None
    index_exprs: tuple = ()
    machine: Optional[str] = None
    name: Optional[str] = None  # bound variable name for induction
    tag: Optional[str] = None  # suffix for the names of generated obligations


@dataclass(frozen=True)
class Derivation:
    label: str
    steps: tuple


@dataclass(frozen=True)
class Witness:
    event: str
    index: str
    expr: Expr


@dataclass(frozen=True)
class Machine:
    name: str
    sorts: tuple = ()
    variables: tuple = ()
    init: Expr = TRUE
    invariants: tuple = ()
    events: tuple = ()
    properties: tuple = ()
    refines: Optional[str] = None
    derivations: tuple = ()
    dependencies: tuple = ()  # ((label, event), ...)
    witnesses: tuple = ()
    source: Optional[str] = field(default=None, compare=False)
    # declaration ("event enter", "variable st", ...) -> source span
    spans: Optional[dict] = field(default=None, compare=False, repr=False)

    @cached_property
    def sort_map(self) -> dict:
        return {s.name: s for s in self.sorts}

    @cached_property
    def var_map(self) -> dict:
        return {v.name: v for v in self.variables}

    @cached_property
    def event_map(self) -> dict:
        return {e.name: e for e in self.events}

    @cached_property
    def property_map(self) -> dict:
        return {p.label: p for p in self.properties + self.invariants}

    @cached_property
    def derivation_map(self) -> dict:
        return {d.label: d for d in self.derivations}

    @cached_property
    def element_sort(self) -> dict:
        """Element name -> root sort name."""
        out = {}
        for s in self.sorts:
            if s.kind == "enum" and s.parent is None:
                for c in s.carrier:
                    out[c] = s.name
        return out

    def root(self, sort: str) -> str:
        s = self.sort_map[sort]
        while s.parent is not None:
            s = self.sort_map[s.parent]
        return s.name

    def user_events(self) -> tuple:
        return tuple(e for e in self.events if not e.is_skip)

    def invariant_conj(self) -> Expr:
        return mk_and(*(i.p for i in self.invariants))


@dataclass(frozen=True)
class ActionRef:
    """Which event action a proof obligation's primed variables come from.

    ``index_exprs`` maps the event's index names to expressions over the
    obligation's context (identity when the indices are kept symbolic)."""

    event: Event
    index_exprs: tuple  # ((index-name, Expr), ...)


@dataclass(frozen=True)
class ProofObligation:
    name: str
    origin: str
    hypotheses: tuple
    goal: Expr
    context: tuple = ()  # ((name, sort), ...) bound symbols besides state variables
    action: Optional[ActionRef] = field(default=None, compare=False)
    machine: str = ""


ORIGINS = (
    "INV-init", "INV-preserve", "UN", "NEG", "C_EN", "SCH_FIS", "GRD-STR",
    "SIM", "F_STR", "C_WKN", "FNS_RMV", "WITNESS", "IMPL",
)


# ---------------------------------------------------------------------------
# Operations


def normalize(machine: Machine) -> Machine:
    """Insert schedule and guard defaults and materialize Skip."""
    seen = set()
    events = []
    for ev in machine.events:
        if ev.is_skip:
            continue
        if ev.name in seen:
            raise KernelError(f"duplicate event name {ev.name}")
        seen.add(ev.name)
        for ix, s in ev.indices:
            if s not in machine.sort_map:
                raise KernelError(f"event {ev.name}: index {ix} over undeclared sort {s}")
        coarse, fine = ev.coarse, ev.fine
        if coarse is None and fine is None:
            coarse, fine = FALSE, TRUE
        elif fine is None:
            fine = TRUE
        elif coarse is None:
            coarse = TRUE
        guard = TRUE if ev.guard is None else ev.guard
        events.append(replace(ev, coarse=coarse, fine=fine, guard=guard))
    events.append(SKIP_EVENT)
    return replace(machine, events=tuple(events))


def event_instances(machine: Machine) -> list:
    """All (event-name, index-valuation) pairs, Skip last."""
    out = []
    for ev in machine.events:
        if ev.is_skip:
            continue
        domains = [machine.sort_map[s].values for _, s in ev.indices]
        names = [n for n, _ in ev.indices]
        for combo in itertools.product(*domains):
            out.append((ev.name, tuple(zip(names, combo))))
    out.append((SKIP, ()))
    return out


def instance_label(name: str, valuation: tuple) -> str:
    if not valuation:
        return name
    return f"{name}[{', '.join(str(v) for _, v in valuation)}]"


def well_formed(machine: Machine) -> list:
    """Diagnostics as (location, message) pairs; empty when well formed."""
    from .parser import typecheck_machine

    return typecheck_machine(machine)
