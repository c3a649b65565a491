"""Refinement between machines: event safety and schedule (liveness) checks.

Each concrete event refines the abstract event of the same name (or the
one given by a ``pair`` entry of the development index); concrete events
without an abstract counterpart refine Skip.  Refinement is superposition
only: the concrete machine keeps every abstract sort and variable.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Optional

from .derivations import Certifier, Goal, check_dependencies, run_script
from .evaluator import before_after
from .kernel import (
    TRUE, Event, Expr, Machine, ProofObligation, Property, Step, ac_equal,
    conjuncts, mk, mk_and, mk_not, substitute, var,
)
from .obligations import DEFAULT_PO_LIMIT, Verdict, discharge, identity_action, po_to_json, po_unless


class DevelopmentError(Exception):
    pass


# ---------------------------------------------------------------------------
# Development index

@dataclass
class StepConfig:
    abstract: str
    concrete: str
    pairs: dict = field(default_factory=dict)  # concrete event -> abstract event
    new: set = field(default_factory=set)
    resolve: dict = field(default_factory=dict)  # (event, condition) -> label
    tags: dict = field(default_factory=dict)  # event -> obligation tag


@dataclass
class Development:
    name: str
    directory: str
    files: dict  # machine name -> path
    steps: dict  # (abstract, concrete) -> StepConfig
    order: list

    def step(self, abstract: str, concrete: str) -> StepConfig:
        return self.steps.get((abstract, concrete)) or StepConfig(abstract, concrete)


_CONDITIONS = ("C_FLW", "C_STB", "F_FLW")


def parse_development(text: str, path: str) -> Development:
    """Line-oriented index; ``--`` starts a comment."""
    directory = os.path.dirname(os.path.abspath(path))
    name = None
    files, steps, order = {}, {}, []
    cur: Optional[StepConfig] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("--", 1)[0].strip()
        if not line:
            continue
        words = line.replace(",", " ").split()

        def bad(msg="malformed line"):
            raise DevelopmentError(f"{path}:{lineno}: {msg}: {raw.strip()}")

        head = words[0]
        if head == "development" and len(words) == 2 and name is None:
            name = words[1]
        elif head == "machine" and len(words) == 4 and words[2] == "=":
            files[words[1]] = os.path.normpath(os.path.join(directory, words[3]))
            order.append(words[1])
        elif head == "step" and len(words) == 4 and words[2] == "->":
            if cur is not None:
                bad("nested step")
            cur = StepConfig(words[1], words[3])
        elif head == "end":
            if cur is None:
                if len(words) == 1:
                    continue
                bad()
            steps[(cur.abstract, cur.concrete)] = cur
            cur = None
        elif cur is None:
            bad("entry outside a step")
        elif head == "pair" and len(words) == 4 and words[2] == "->":
            cur.pairs[words[1]] = words[3]
        elif head == "new" and len(words) >= 2:
            cur.new.update(words[1:])
        elif head == "resolve" and len(words) == 5 and words[3] == "by" and words[2] in _CONDITIONS:
            cur.resolve[(words[1], words[2])] = words[4]
        elif head == "tag" and len(words) == 3:
            cur.tags[words[1]] = words[2]
        else:
            bad()
    if cur is not None:
        raise DevelopmentError(f"{path}: step {cur.abstract} -> {cur.concrete} lacks 'end'")
    if name is None:
        raise DevelopmentError(f"{path}: missing 'development NAME' line")
    return Development(name, directory, files, steps, order)


DEV_INDEX = "development.ub-dev"
_HEADER = re.compile(r"^\s*machine\s+([A-Za-z_][A-Za-z0-9_]*)", re.M)


def machine_header(path: str) -> Optional[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError:
        return None
    text = re.sub(r"--(?!>).*", "", text)
    m = _HEADER.search(text)
    return m.group(1) if m else None


class Workspace:
    """Loads machines by name and keeps one certifier per machine."""

    def __init__(self, po_limit: int = DEFAULT_PO_LIMIT, state_limit: int = 1_000_000):
        self.po_limit = po_limit
        self.state_limit = state_limit
        self.machines: dict = {}
        self.paths: dict = {}
        self.devs: dict = {}  # directory -> Development | None
        self.certs: dict = {}
        self.refinements: dict = {}  # concrete machine name -> RefinementReport | None
        self.index_for: dict = {}  # machine name -> Development

    def development(self, directory: str) -> Optional[Development]:
        directory = os.path.abspath(directory)
        if directory not in self.devs:
            p = os.path.join(directory, DEV_INDEX)
            dev = None
            if os.path.exists(p):
                with open(p, encoding="utf-8") as fh:
                    dev = parse_development(fh.read(), p)
            self.devs[directory] = dev
        return self.devs[directory]

    def add_development(self, dev: Development):
        self.devs.setdefault(dev.directory, dev)
        for n, p in dev.files.items():
            self.paths.setdefault(n, p)
            self.index_for.setdefault(n, dev)

    def load(self, path: str) -> Machine:
        from .parser import parse_machine

        path = os.path.abspath(path)
        with open(path, encoding="utf-8") as fh:
            m = parse_machine(fh.read(), path)
        if m.name in self.machines and self.paths.get(m.name) != path:
            known = self.paths.get(m.name)
            if known is not None and os.path.abspath(known) != path:
                raise DevelopmentError(f"machine {m.name} is defined in both {known} and {path}")
        self.machines[m.name] = m
        self.paths[m.name] = path
        dev = self.development(os.path.dirname(path))
        if dev is not None:
            self.add_development(dev)
        return m

    def find(self, name: str, near: str) -> Machine:
        if name in self.machines:
            return self.machines[name]
        if name in self.paths:
            return self.load(self.paths[name])
        directory = os.path.dirname(os.path.abspath(near))
        dev = self.development(directory)
        if dev is not None:
            self.add_development(dev)
            if name in dev.files:
                return self.load(dev.files[name])
        for f in sorted(os.listdir(directory)):
            if f.endswith(".ub") and machine_header(os.path.join(directory, f)) == name:
                return self.load(os.path.join(directory, f))
        raise DevelopmentError(f"cannot find machine {name} (refined by {os.path.basename(near)})")

    def abstract_of(self, m: Machine) -> Optional[Machine]:
        if m.refines is None:
            return None
        return self.find(m.refines, self.paths.get(m.name) or m.source or ".")

    def ancestors(self, m: Machine) -> list:
        out = []
        seen = {m.name}
        cur = m
        while cur.refines is not None:
            a = self.abstract_of(cur)
            if a.name in seen:
                raise DevelopmentError(f"refinement cycle through {a.name}")
            seen.add(a.name)
            out.append(a)
            cur = a
        return out

    def certifier(self, m: Machine) -> Certifier:
        if m.name not in self.certs:
            earlier = {}
            for a in self.ancestors(m):
                earlier[a.name] = self.certifier(a)
            self.certs[m.name] = Certifier(m, earlier, self.po_limit, self.state_limit)
        return self.certs[m.name]

    def step_config(self, abstract: Machine, concrete: Machine) -> StepConfig:
        for key in (concrete.name, abstract.name):
            dev = self.index_for.get(key)
            if dev is not None and (abstract.name, concrete.name) in dev.steps:
                return dev.steps[(abstract.name, concrete.name)]
        for dev in self.devs.values():
            if dev is not None and (abstract.name, concrete.name) in dev.steps:
                return dev.steps[(abstract.name, concrete.name)]
        return StepConfig(abstract.name, concrete.name)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class POResult:
    po: ProofObligation
    verdict: Verdict

    @property
    def valid(self) -> bool:
        return self.verdict.valid


@dataclass
class GoalResult:
    condition: str  # C_FLW, C_STB, F_FLW, SCHEDULE
    statement: str
    resolution: str  # "derivation LABEL", "semantic", "UN", "syntactic"
    valid: bool
    detail: dict = field(default_factory=dict)
    pos: list = field(default_factory=list)  # POResult of the goal's own obligations


@dataclass
class PairReport:
    concrete: str
    abstract: str  # Skip for new events
    mapping: str  # identical, removal, new
    pos: list = field(default_factory=list)
    goals: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.errors and all(p.valid for p in self.pos) and all(g.valid for g in self.goals)


@dataclass
class RefinementReport:
    abstract: str
    concrete: str
    pairs: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    dependency_violations: list = field(default_factory=list)
    resolutions: list = field(default_factory=list)  # (event, condition, label)

    @property
    def valid(self) -> bool:
        return (not self.errors and not self.dependency_violations
                and all(p.valid for p in self.pairs))

    def all_pos(self) -> list:
        out = []
        for p in self.pairs:
            out.extend(p.pos)
            for g in p.goals:
                out.extend(g.pos)
        return out

    def to_json(self, conc: Machine) -> dict:
        pairs = []
        for p in self.pairs:
            pairs.append({
                "concrete": p.concrete, "abstract": p.abstract, "mapping": p.mapping,
                "valid": p.valid,
                "obligations": [po_to_json(r.po, conc, r.verdict) for r in p.pos],
                "goals": [{"condition": g.condition, "statement": g.statement,
                           "resolution": g.resolution, "valid": g.valid, **g.detail} for g in p.goals],
                "notes": list(p.notes), "errors": list(p.errors),
            })
        return {
            "abstract": self.abstract, "concrete": self.concrete, "valid": self.valid,
            "pairs": pairs, "errors": list(self.errors),
            "dependency_violations": [v.describe() for v in self.dependency_violations],
        }


# ---------------------------------------------------------------------------
# Checking


def _superposition_errors(a: Machine, c: Machine) -> list:
    out = []
    for s in a.sorts:
        cs = c.sort_map.get(s.name)
        if cs is None or cs != s:
            out.append(f"sort {s.name} of {a.name} is missing or different in {c.name}")
    for v in a.variables:
        cv = c.var_map.get(v.name)
        if cv is None or cv.type != v.type:
            out.append(f"variable {v.name} of {a.name} is missing or retyped in {c.name}")
    return out


def check_refinement(absM: Machine, concM: Machine, config: Optional[StepConfig] = None,
                     cert: Optional[Certifier] = None, po_limit: int = DEFAULT_PO_LIMIT) -> RefinementReport:
    config = config or StepConfig(absM.name, concM.name)
    cert = cert or Certifier(concM, {absM.name: Certifier(absM, po_limit=po_limit)}, po_limit)
    rep = RefinementReport(absM.name, concM.name)
    rep.errors.extend(_superposition_errors(absM, concM))
    if rep.errors:
        return rep
    covered = set()
    for ev in concM.user_events():
        aname = config.pairs.get(ev.name, ev.name)
        if ev.name in config.new or aname not in absM.event_map or absM.event_map[aname].is_skip:
            if ev.name in config.pairs and ev.name not in config.new:
                rep.errors.append(f"{ev.name} is paired with unknown abstract event {aname}")
                continue
            rep.pairs.append(_check_new(absM, concM, ev, config, po_limit))
            continue
        covered.add(aname)
        rep.pairs.append(_check_pair(absM, concM, absM.event_map[aname], ev, config, cert, po_limit, rep))
    for ev in absM.user_events():
        if ev.name not in covered:
            rep.errors.append(f"abstract event {ev.name} is not refined by any event of {concM.name}")
    rep.dependency_violations = check_dependencies(cert, rep.resolutions)
    return rep


def _po(name, origin, hyps, goal, ctx, action, m: Machine, limit) -> POResult:
    po = ProofObligation(name, origin, tuple(hyps), goal, tuple(ctx), action, m.name)
    return POResult(po, discharge(po, m, limit))


def _check_new(absM, concM, ev: Event, config, limit) -> PairReport:
    pr = PairReport(ev.name, "Skip", "new")
    inv = [i.p for i in concM.invariants]
    tag = config.tags.get(ev.name)
    sfx = f"_{tag}" if tag else ""
    goal = mk_and(*(mk("eq", var(v.name, True), var(v.name)) for v in absM.variables))
    pr.pos.append(_po(f"{concM.name}/refines/{ev.name}/SIM{sfx}", "SIM", inv + list(conjuncts(ev.guard)),
                      goal, ev.indices, identity_action(ev), concM, limit))
    pr.notes.append("new event refines Skip; no liveness obligation (Skip is unscheduled)")
    return pr


def _check_pair(absM, concM, a: Event, c: Event, config, cert, limit, rep: RefinementReport) -> PairReport:
    aidx, cidx = dict(a.indices), dict(c.indices)
    removed = [i for i, _ in a.indices if i not in cidx]
    mapping = "removal" if removed else "identical"
    pr = PairReport(c.name, a.name, mapping)
    for i, s in c.indices:
        if aidx.get(i) != s:
            pr.errors.append(f"index {i} : {s} of {c.name} is not an index of the abstract event")
    if pr.errors:
        return pr
    witness = {w.index: w.expr for w in concM.witnesses if w.event == c.name}
    sub = {}
    for i in removed:
        if i not in witness:
            pr.errors.append(f"no witness for removed index {i} of {a.name}")
        else:
            sub[i] = witness[i]
    if pr.errors:
        return pr
    tag = config.tags.get(c.name)
    sfx = f"_{tag}" if tag else ""
    base = f"{concM.name}/refines/{c.name}"
    inv = [i.p for i in concM.invariants]
    g1 = list(conjuncts(c.guard))
    for i in removed:
        pr.pos.append(_po(f"{base}/WITNESS/{i}{sfx}", "WITNESS", inv + g1,
                          mk("wd", mk("member", sub[i], Expr("sortset", name=aidx[i]))),
                          c.indices, None, concM, limit))
    pr.pos.append(_po(f"{base}/GRD-STR{sfx}", "GRD-STR", inv + g1, substitute(a.guard, sub),
                      c.indices, None, concM, limit))
    ba0 = substitute(before_after(absM, a), sub)
    pr.pos.append(_po(f"{base}/SIM{sfx}", "SIM", inv + g1, ba0, c.indices, identity_action(c), concM, limit))
    if removed:
        _index_removal(pr, a, c, removed, sub)
    else:
        _schedules(pr, absM, concM, a, c, config, cert, limit, base, sfx, rep)
    return pr


def _index_removal(pr: PairReport, a: Event, c: Event, removed: list, sub: dict):
    rest = list(conjuncts(a.coarse))
    for i in removed:
        e = sub[i]
        found = None
        for k, conj in enumerate(rest):
            inner = conj.args[0] if conj.op == "wd" else conj
            if inner.op == "eq":
                l, r = inner.args
                if (l.op == "bvar" and l.name == i and ac_equal(r, e)) or (r.op == "bvar" and r.name == i and ac_equal(l, e)):
                    found = k
                    break
        if found is None:
            pr.goals.append(GoalResult("SCHEDULE", f"coarse schedule of {a.name} has a conjunct {i} = witness",
                                       "syntactic", False,
                                       {"reason": f"abstract coarse schedule lacks a conjunct {i} = E matching the witness"}))
            return
        del rest[found]
    c_expect = substitute(mk_and(*rest), sub)
    f_expect = substitute(a.fine, sub)
    ok_c = ac_equal(c.coarse, c_expect)
    ok_f = ac_equal(c.fine, f_expect)
    from .parser import show_expr

    pr.goals.append(GoalResult(
        "SCHEDULE", "schedules equal after substituting the witness", "syntactic", ok_c and ok_f,
        {"expected_coarse": show_expr(c_expect), "expected_fine": show_expr(f_expect),
         **({} if ok_c and ok_f else {"reason": "syntactic-equality failure: "
             + ", ".join(n for n, ok in (("coarse", ok_c), ("fine", ok_f)) if not ok)})}))
    pr.notes.append("index removal: liveness follows from equal schedules")


def _schedules(pr, absM, concM, a: Event, c: Event, config, cert, limit, base, sfx, rep):
    inv = [i.p for i in concM.invariants]
    ctx = c.indices
    c0, f0, c1, f1 = a.coarse, a.fine, c.coarse, c.fine
    # coarse part
    need_c = True
    if ac_equal(c1, c0):
        pr.notes.append("coarse schedule unchanged: C_FLW and C_STB are trivial")
        need_c = False
    else:
        wkn = _po(f"{base}/C_WKN{sfx}", "C_WKN", inv + list(conjuncts(c0)), c1, ctx, None, concM, limit)
        if wkn.valid:
            pr.pos.append(wkn)
            pr.notes.append("coarse schedule weakening: C_FLW and C_STB follow from C_WKN")
            need_c = False
        else:
            pr.notes.append("coarse schedule replaced: C_WKN does not hold, checking C_FLW and C_STB")
    # fine part
    need_fflw = False
    if ac_equal(f1, f0):
        pr.notes.append("fine schedule unchanged: F_FLW and F_STR are trivial")
    else:
        if f1 == TRUE:
            pr.notes.append("fine schedule removal: F_FLW is trivial")
        else:
            need_fflw = True
        if f0 == TRUE:
            pr.notes.append("abstract fine schedule is true: F_STR is trivial")
        else:
            origin = "FNS_RMV" if f1 == TRUE and ac_equal(c1, c0) else "F_STR"
            pr.pos.append(_po(f"{base}/F_STR{sfx}", origin, inv + list(conjuncts(c1)) + list(conjuncts(f1)),
                              f0, ctx, None, concM, limit))
    if need_c:
        _leadsto_goal(pr, concM, "C_FLW", mk_and(c0, f0), c1, ctx, config, cert, base, sfx, rep, c.name)
        _unless_goal(pr, concM, "C_STB", c1, mk_not(c0), ctx, cert, base, sfx, limit)
    if need_fflw:
        _leadsto_goal(pr, concM, "F_FLW", mk_and(c0, f0), f1, ctx, config, cert, base, sfx, rep, c.name)


def _leadsto_goal(pr, concM, cond, p, q, ctx, config, cert, base, sfx, rep, event):
    from .parser import show_expr
    from .semantics import check_leadsto_goal

    statement = f"{show_expr(p)} ~> {show_expr(q)}"
    label = config.resolve.get((pr.abstract, cond)) or config.resolve.get((event, cond))
    if label is not None:
        goal = Goal("leadsto", p, q, tuple(ctx), f"{base}/{cond}{sfx}")
        d = run_script(concM, goal, (Step("cite", labels=(label,)),), cert, f"{cond}{sfx}")
        rep.resolutions.append((pr.abstract, cond, label))
        pr.goals.append(GoalResult(f"{cond}{sfx}", statement, f"derivation {label}", d.valid,
                                   {"derivation": d.to_json()},
                                   [POResult(it.po, it.verdict) for it in d.items if it.po is not None]))
        return
    ts = cert.ts()
    r = check_leadsto_goal(ts, p, q, tuple(ctx))
    pr.goals.append(GoalResult(f"{cond}{sfx}", statement, "semantic", r.holds, {"check": r.to_json(ts)}))


def _unless_goal(pr, concM, cond, p, q, ctx, cert, base, sfx, limit):
    from .parser import show_expr
    from .semantics import check_unless_goal

    statement = f"{show_expr(p)} un {show_expr(q)}"
    prop = Property(f"{cond}{sfx}", "unless", p, q, tuple(ctx))
    pos = po_unless(concM, prop, prefix=f"{base}/{cond}{sfx}")
    results = [POResult(po, discharge(po, concM, limit)) for po in pos]
    if all(r.valid for r in results):
        pr.goals.append(GoalResult(f"{cond}{sfx}", statement, "UN", True,
                                   {"obligations": [po_to_json(r.po, concM, r.verdict) for r in results]},
                                   results))
        return
    ts = cert.ts()
    r = check_unless_goal(ts, p, q, tuple(ctx))
    failing = [po_to_json(x.po, concM, x.verdict) for x in results if not x.valid]
    pr.goals.append(GoalResult(f"{cond}{sfx}", statement, "semantic", r.holds,
                               {"failing_obligations": failing, "check": r.to_json(ts)}, results))


__all__ = [
    "Development", "DevelopmentError", "GoalResult", "PairReport", "RefinementReport",
    "StepConfig", "Workspace", "check_refinement", "parse_development",
]
