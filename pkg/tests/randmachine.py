"""Seeded random machines, written as source text.

Machines stay tiny (at most 4 variables over sorts of at most 3 elements,
at most 4 events), are always well defined at reachable states, and carry
random properties with derivation scripts drawn from a template grammar.
Most scripts fail; the soundness suite only cares about the ones that pass.
"""
from __future__ import annotations

import random

ELEMS = ("a", "b", "c")


class Gen:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.seed = seed
        r = self.rng
        self.k = r.choice((2, 3))
        self.elems = ELEMS[: self.k]
        self.int_hi = r.choice((1, 2))
        self.modular = r.random() < 0.5
        kinds = ["elem", "set", "int", "pfun"]
        nvars = r.randint(1, 4)
        self.vars = []
        for j in range(nvars):
            kind = r.choice(kinds)
            if kind == "pfun" and self.k == 3 and r.random() < 0.5:
                kind = "set"
            self.vars.append((f"{'xsnf'[kinds.index(kind)]}{j}", kind))

    # -- expressions -------------------------------------------------------

    def elem(self, binders=()) -> str:
        pool = list(self.elems) + list(binders)
        return self.rng.choice(pool)

    def atom(self, binders=()) -> str:
        r = self.rng
        name, kind = r.choice(self.vars)
        e = self.elem(binders)
        if kind == "elem":
            return r.choice((f"{name} = {e}", f"{name} /= {e}"))
        if kind == "set":
            return r.choice((f"{e} in {name}", f"{e} notin {name}", f"{name} = {{}}",
                             f"{name} subset {{{e}}}"))
        if kind == "int":
            k = r.randint(0, self.int_hi)
            return r.choice((f"{name} = {k}", f"{name} < {k}", f"{name} <= {k}", f"{name} /= {k}"))
        e2 = self.elem(binders)
        return r.choice((f"wd({name}({e}) = {e2})", f"{e} in dom({name})", f"{name} = {{}}",
                         f"not wd({name}({e}) = {e2})"))

    def pred(self, binders=(), depth: int = 0) -> str:
        r = self.rng
        x = r.random()
        if depth >= 2 or x < 0.5:
            return self.atom(binders)
        if x < 0.7:
            return f"({self.pred(binders, depth + 1)} and {self.pred(binders, depth + 1)})"
        if x < 0.9:
            return f"({self.pred(binders, depth + 1)} or {self.pred(binders, depth + 1)})"
        return f"not ({self.pred(binders, depth + 1)})"

    def assignment(self, name, kind, binders) -> tuple:
        """(assignment text, predicate it establishes or None)."""
        r = self.rng
        e = self.elem(binders)
        e2 = self.elem(binders)
        if kind == "elem":
            return r.choice(((f"{name} := {e}", f"{name} = {e}"), (f"{name} :: {{{e}, {e2}}}", None)))
        if kind == "set":
            return r.choice(((f"{name} := {name} union {{{e}}}", f"{e} in {name}"),
                             (f"{name} := {name} \\ {{{e}}}", f"{e} notin {name}"),
                             (f"{name} := {{}}", f"{name} = {{}}")))
        if kind == "int":
            k = r.randint(0, self.int_hi)
            opts = [(f"{name} := {k}", f"{name} = {k}")]
            if self.modular:
                opts += [(f"{name} := {name} + 1", None), (f"{name} := {name} - 1", None)]
            return r.choice(opts)
        return r.choice(((f"{name}({e}) := {e2}", f"wd({name}({e}) = {e2})"),
                         (f"{name} := {{{e}}} <<| {name}", f"{e} notin dom({name})")))

    # -- machine -----------------------------------------------------------

    def init(self) -> str:
        parts = []
        for name, kind in self.vars:
            if self.rng.random() < 0.2:
                continue
            parts.append({"elem": f"{name} = a", "set": f"{name} = {{}}", "int": f"{name} = 0",
                          "pfun": f"{name} = {{}}"}[kind])
        return " and ".join(parts) or "true"

    def event(self, j: int) -> tuple:
        """Source lines plus (indexed?, coarse schedule, established predicates)."""
        r = self.rng
        binders = ("i",) if r.random() < 0.5 else ()
        lines = [f"  event e{j}" + (" [i : S]" if binders else "")]
        during = self.pred(binders) if r.random() < 0.6 else None
        upon = self.pred(binders) if r.random() < 0.3 else None
        guard = []
        if during and r.random() < 0.8:
            guard.append(during)
        if upon and r.random() < 0.8:
            guard.append(upon)
        if r.random() < 0.4:
            guard.append(self.pred(binders))
        if during:
            lines.append(f"    during {during}")
        if upon:
            lines.append(f"    upon {upon}")
        if guard:
            lines.append(f"    when {' and '.join(guard)}")
        targets = r.sample(self.vars, r.randint(1, min(2, len(self.vars))))
        acts = [self.assignment(n, k, binders) for n, k in targets]
        lines.append("    then " + " ; ".join(a for a, _ in acts))
        lines.append("  end")
        posts = [p for _, p in acts if p is not None] if upon is None else []
        return lines, (bool(binders), during, posts)

    def script(self, goal_free, ev_defs, unless_labels, leadsto_labels) -> str:
        """A random derivation script for a leads-to goal."""
        r = self.rng
        binders = tuple(goal_free)

        def falsify():
            j = r.randrange(len(ev_defs))
            idx = f"[{self.elem(binders)}]" if ev_defs[j][0] else ""
            return f"transient via falsifies e{j}{idx}"

        x = r.random()
        if x < 0.15:
            return "implication"
        if x < 0.45 and unless_labels:
            return f"ensure({r.choice(unless_labels)}) ; {falsify()}"
        if x < 0.6:
            return f"split ; {self.script(goal_free, ev_defs, unless_labels, leadsto_labels)}"
        if x < 0.75:
            mid = self.pred(binders)
            return (f"trans({mid}) ; {self.leaf(goal_free, ev_defs, unless_labels, leadsto_labels)} ; "
                    f"{self.leaf(goal_free, ev_defs, unless_labels, leadsto_labels)}")
        if x < 0.85 and leadsto_labels and unless_labels:
            return f"psp({r.choice(leadsto_labels)}, {r.choice(unless_labels)})"
        ints = [n for n, k in self.vars if k == "int"]
        if x < 0.92 and ints:
            return (f"induction({r.choice(ints)}) ; "
                    f"{self.leaf(goal_free, ev_defs, unless_labels, leadsto_labels)}")
        return self.leaf(goal_free, ev_defs, unless_labels, leadsto_labels)

    def leaf(self, goal_free, ev_defs, unless_labels, leadsto_labels) -> str:
        r = self.rng
        x = r.random()
        if x < 0.3:
            return "implication"
        if x < 0.6 and leadsto_labels:
            return f"cite {r.choice(leadsto_labels)}"
        if unless_labels:
            j = r.randrange(len(ev_defs))
            idx = f"[{self.elem(tuple(goal_free))}]" if ev_defs[j][0] else ""
            return f"ensure({r.choice(unless_labels)}) ; transient via falsifies e{j}{idx}"
        return "implication"

    def machine(self) -> str:
        r = self.rng
        out = [f"-- random machine, seed {self.seed}", f"machine R{self.seed}"]
        sets = f"  sets S = {{{', '.join(self.elems)}}}"
        if any(k == "int" for _, k in self.vars):
            sets += f" ; N = int 0 .. {self.int_hi}" + (" mod" if self.modular else "")
        out.append(sets)
        types = {"elem": "S", "set": "set(S)", "int": "N", "pfun": "S +-> S"}
        out.append("  vars " + " ; ".join(f"{n} : {types[k]}" for n, k in self.vars))
        out.append(f"  init {self.init()}")
        if r.random() < 0.4:
            out.append(f"  invariant inv0 : {self.pred()}")
        ev_defs = []
        for j in range(r.randint(1, 4)):
            lines, info = self.event(j)
            out.extend(lines)
            ev_defs.append(info)
        unless_labels, leadsto_labels = [], []
        derivs = []
        for j in range(r.randint(1, 3)):
            free = ("p",) if r.random() < 0.3 else ()
            head = f"  property u{j}" + (" [p : S]" if free else "")
            out.append(f"{head} : {self.pred(free)} un {self.pred(free)}")
            if not free:
                unless_labels.append(f"u{j}")
        designed = [(j, d) for j, d in enumerate(ev_defs) if d[1] is not None and d[2]]
        for j, (indexed, during, posts) in designed[:2]:
            # falsified by event j by construction: c and not P, with P its effect
            inst = self.elem()
            c = _instantiate(during, inst) if indexed else during
            post = _instantiate(r.choice(posts), inst) if indexed else r.choice(posts)
            idx = f"[{inst}]" if indexed else ""
            out.append(f"  property d{j} : tr ({c}) and not ({post})")
            derivs.append(f"  derivation d{j} by transient via falsifies e{j}{idx}")
            out.append(f"  property du{j} : ({c}) and not ({post}) un ({post}) or not ({c})")
            out.append(f"  property dl{j} : ({c}) and not ({post}) ~> ({post}) or not ({c})")
            derivs.append(f"  derivation dl{j} by ensure(du{j}) ; transient via falsifies e{j}{idx}")
            unless_labels.append(f"du{j}")
            leadsto_labels.append(f"dl{j}")
        for j in range(r.randint(0, 1)):
            free = ("p",) if r.random() < 0.4 else ()
            head = f"  property t{j}" + (" [p : S]" if free else "")
            out.append(f"{head} : tr {self.pred(free)}")
            k = r.randrange(len(ev_defs))
            idx = f"[{self.elem(free)}]" if ev_defs[k][0] else ""
            derivs.append(f"  derivation t{j} by transient via falsifies e{k}{idx}")
        for j in range(r.randint(1, 3)):
            free = ("p",) if r.random() < 0.2 else ()
            head = f"  property l{j}" + (" [p : S]" if free else "")
            out.append(f"{head} : {self.pred(free)} ~> {self.pred(free)}")
            if r.random() < 0.85:
                derivs.append(f"  derivation l{j} by "
                              f"{self.script(free, ev_defs, unless_labels, leadsto_labels)}")
            if not free:
                leadsto_labels.append(f"l{j}")
        out.extend(derivs)
        out.append("end")
        return "\n".join(out) + "\n"


def _instantiate(text: str, element: str) -> str:
    import re

    return re.sub(r"\bi\b", element, text)


def random_machine_text(seed: int) -> str:
    return Gen(seed).machine()
