"""Explicit-state semantics: reachable transition system and fair-lasso search.

An infinite execution of a finite system is witnessed by a lasso.  A cycle
is schedule consistent when no event instance is continuously coarse
scheduled, fine scheduled somewhere on the cycle, and yet never taken from
a fine-scheduled state of the cycle.  Liveness checks look for a reachable
consistent cycle that avoids a forbidden region; none means the property
holds.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .evaluator import BOT, LimitExceeded, WDError, compiler_for, satisfying, successors
from .kernel import SKIP, Expr, Machine, Property, event_instances, instance_label


@dataclass
class TransitionSystem:
    machine: Machine
    states: list  # valuation dicts
    initial: list  # state indices
    edges: list  # per state: list of (label, target index)
    parent: list  # BFS tree: (predecessor, label) or None
    index: dict = field(default_factory=dict, repr=False)
    _sched: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def edge_count(self) -> int:
        return sum(len(e) for e in self.edges)

    def path_to(self, s: int) -> list:
        """Shortest path from an initial state as [s0, label, s1, ...]."""
        out = [s]
        while self.parent[s] is not None:
            p, lab = self.parent[s]
            out[:0] = [p, lab]
            s = p
        return out

    def values(self, pred: Expr, bound: Optional[dict] = None, what: str = "predicate") -> list:
        """Truth value of ``pred`` at every state; BOT raises WDError."""
        f = compiler_for(self.machine)(pred)
        b = bound or {}
        out = []
        for i, s in enumerate(self.states):
            v = f(s, {}, b)
            if v is BOT:
                raise WDError(f"{what} is ill-defined at a reachable state", dict(s))
            out.append(v)
        return out

    def schedules(self) -> list:
        """Per event instance: (label, coarse values, fine values)."""
        if "all" not in self._sched:
            m = self.machine
            comp = compiler_for(m)
            rows = []
            for name, val in event_instances(m):
                if name == SKIP:
                    continue
                ev = m.event_map[name]
                label = instance_label(name, val)
                b = dict(val)
                fc, ff = comp(ev.coarse), comp(ev.fine)
                cs, fs = [], []
                for s in self.states:
                    c, f = fc(s, {}, b), ff(s, {}, b)
                    if c is BOT or f is BOT:
                        raise WDError(f"schedule of {label} is ill-defined at a reachable state", dict(s), label)
                    cs.append(c)
                    fs.append(f)
                rows.append((label, cs, fs))
            self._sched["all"] = rows
        return self._sched["all"]


def state_key(machine: Machine, s: dict) -> tuple:
    return tuple(s[v.name] for v in machine.variables)


def build_ts(machine: Machine, state_limit: int = 1_000_000, init_limit: int = 10_000_000) -> TransitionSystem:
    """Reachable states by breadth-first search; numbering is deterministic."""
    states, index, parent, edges = [], {}, [], []
    initial = []
    for s in satisfying(machine, machine.init, init_limit):
        k = state_key(machine, s)
        if k not in index:
            index[k] = len(states)
            states.append(s)
            parent.append(None)
            initial.append(index[k])
    if len(states) > state_limit:
        raise LimitExceeded("reachable states", len(states), state_limit)
    ts = TransitionSystem(machine, states, initial, edges, parent, index)
    queue = deque(initial)
    while queue:
        i = queue.popleft()
        while len(edges) <= i:
            edges.append([])
        try:
            succ = successors(machine, states[i], strict=True)
        except WDError as exc:
            exc.path = ts.path_to(i)
            raise
        seen = set()
        out = []
        for label, s2 in succ:
            k = state_key(machine, s2)
            j = index.get(k)
            if j is None:
                j = len(states)
                if j >= state_limit:
                    raise LimitExceeded("reachable states", j + 1, state_limit)
                index[k] = j
                states.append(s2)
                parent.append((i, label))
                queue.append(j)
            if (label, j) not in seen:
                seen.add((label, j))
                out.append((label, j))
        edges[i] = out
    while len(edges) < len(states):
        edges.append([])
    return ts


# ---------------------------------------------------------------------------
# Results


@dataclass
class Lasso:
    stem: list  # [s0, label, s1, ..., sk]; sk is the first cycle state
    cycle: list  # [sk, label, ..., sk]

    def to_json(self, ts: TransitionSystem) -> dict:
        return {
            "stem": _render_path(ts, self.stem),
            "cycle": _render_path(ts, self.cycle),
            "violated_instance_analysis": cycle_schedule_consistent(ts, self.cycle)[0],
        }


def _render_path(ts, path):
    out = []
    for i, x in enumerate(path):
        out.append(render_state(ts.states[x]) if i % 2 == 0 else x)
    return out


def render_value(v):
    if isinstance(v, frozenset):
        items = sorted(v, key=lambda x: (repr(type(x)), repr(x)))
        return [list(x) if isinstance(x, tuple) else x for x in items]
    return v


def render_state(s: dict) -> dict:
    return {k: render_value(v) for k, v in s.items()}


def show_value(v) -> str:
    if isinstance(v, frozenset):
        items = sorted(v, key=lambda x: (repr(type(x)), repr(x)))
        return "{" + ", ".join(f"{x[0]}|->{x[1]}" if isinstance(x, tuple) else str(x) for x in items) + "}"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def show_state(s: dict) -> str:
    return ", ".join(f"{k}={show_value(v)}" for k, v in s.items())


@dataclass
class CheckResult:
    holds: bool
    kind: str
    instance: tuple = ()  # free-variable valuation of the failing instance
    path: Optional[list] = None  # invariant: path to the violating state
    edge: Optional[tuple] = None  # unless: (from, label, to)
    lasso: Optional[Lasso] = None
    detail: str = ""

    def to_json(self, ts: TransitionSystem) -> dict:
        out = {"holds": self.holds, "kind": self.kind}
        if self.instance:
            out["instance"] = {k: render_value(v) for k, v in self.instance}
        if self.path is not None:
            out["path"] = _render_path(ts, self.path)
        if self.edge is not None:
            a, lab, b = self.edge
            out["edge"] = {"from": render_state(ts.states[a]), "label": lab, "to": render_state(ts.states[b])}
        if self.lasso is not None:
            out["lasso"] = self.lasso.to_json(ts)
        if self.detail:
            out["detail"] = self.detail
        return out


# ---------------------------------------------------------------------------
# Safety


def check_invariant(ts: TransitionSystem, inv: Expr, bound: Optional[dict] = None) -> CheckResult:
    vals = ts.values(inv, bound, "invariant")
    # states are numbered in BFS order, so the first violation is nearest
    for i, v in enumerate(vals):
        if not v:
            return CheckResult(False, "invariant", path=ts.path_to(i))
    return CheckResult(True, "invariant")


def check_unless(ts: TransitionSystem, p: Expr, q: Expr, bound: Optional[dict] = None) -> CheckResult:
    pv = ts.values(p, bound)
    qv = ts.values(q, bound)
    for i, out in enumerate(ts.edges):
        if pv[i] and not qv[i]:
            for lab, j in out:
                if not pv[j] and not qv[j]:
                    return CheckResult(False, "unless", edge=(i, lab, j))
    return CheckResult(True, "unless")


# ---------------------------------------------------------------------------
# Fairness


def cycle_schedule_consistent(ts: TransitionSystem, cycle: list) -> tuple:
    """Per instance label: violated?  Plus the overall verdict.

    ``cycle`` alternates states and labels and ends where it starts."""
    cstates = cycle[0::2][:-1] if len(cycle) > 1 else cycle[0::2]
    cedges = [(cycle[k], cycle[k + 1]) for k in range(0, len(cycle) - 1, 2)]
    out = {}
    for label, cs, fs in ts.schedules():
        violated = (all(cs[s] for s in cstates) and any(fs[s] for s in cstates)
                    and not any(lab == label and fs[s] for s, lab in cedges))
        out[label] = violated
    return out, not any(out.values())


def schedule_violated(coarse: list, fine: list, taken_from: list) -> bool:
    """The three-conjunct violation test on plain lists of booleans.

    ``taken_from[i]`` tells whether the instance is taken at cycle state i."""
    return all(coarse) and any(fine) and not any(f and t for f, t in zip(fine, taken_from))


def _sccs(nodes: set, succ) -> list:
    """Tarjan's algorithm, iterative; components in discovery order."""
    index, low, on, stack, out = {}, {}, set(), [], []
    counter = itertools.count()
    for root in sorted(nodes):
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = next(counter)
        stack.append(root)
        on.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in nodes:
                    continue
                if w not in index:
                    index[w] = low[w] = next(counter)
                    stack.append(w)
                    on.add(w)
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                if w in on:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def _is_cycle(ts, comp: set) -> bool:
    if len(comp) > 1:
        return True
    (s,) = comp
    return any(j == s for _, j in ts.edges[s])


def fair_components(ts: TransitionSystem, allowed: set) -> list:
    """Maximal sets inside ``allowed`` that carry a schedule-consistent cycle
    through all their states."""
    sched = ts.schedules()
    succ = lambda s: [j for _, j in ts.edges[s]]  # noqa: E731
    result = []
    work = [c for c in _sccs(allowed, succ) if _is_cycle(ts, c)]
    while work:
        comp = work.pop()
        remove = set()
        for label, cs, fs in sched:
            if not all(cs[s] for s in comp):
                continue
            fstates = [s for s in comp if fs[s]]
            if not fstates:
                continue
            if any(lab == label and j in comp for s in fstates for lab, j in ts.edges[s]):
                continue
            remove.update(fstates)
        if not remove:
            result.append(comp)
            continue
        rest = comp - remove
        work.extend(c for c in _sccs(rest, succ) if _is_cycle(ts, c))
    result.sort(key=min)
    return result


def _bfs_path(ts, sources, goal, inside: Optional[set] = None) -> Optional[list]:
    """Shortest [s, label, ..., t] from any source to a state satisfying goal."""
    prev = {}
    queue = deque()
    for s in sources:
        if s not in prev and (inside is None or s in inside):
            prev[s] = None
            queue.append(s)
    while queue:
        s = queue.popleft()
        if goal(s):
            path = [s]
            while prev[s] is not None:
                p, lab = prev[s]
                path[:0] = [p, lab]
                s = p
            return path
        for lab, j in ts.edges[s]:
            if j not in prev and (inside is None or j in inside):
                prev[j] = (s, lab)
                queue.append(j)
    return None


def _fair_cycle(ts, comp: set, entry: int) -> list:
    """A schedule-consistent cycle through ``entry`` inside ``comp``."""
    targets = []
    for label, cs, fs in ts.schedules():
        off = [s for s in sorted(comp) if not cs[s]]
        if off:
            targets.append(("state", off[0]))
            continue
        fstates = [s for s in sorted(comp) if fs[s]]
        for s in fstates:
            hits = [(lab, j) for lab, j in ts.edges[s] if lab == label and j in comp]
            if hits:
                targets.append(("edge", (s, hits[0][0], hits[0][1])))
                break
    cycle = [entry]
    cur = entry
    for kind, t in targets:
        if kind == "state":
            if t == cur:
                continue
            seg = _bfs_path(ts, [cur], lambda s, t=t: s == t, comp)
            cycle += seg[1:]
            cur = t
        else:
            a, lab, b = t
            if a != cur:
                seg = _bfs_path(ts, [cur], lambda s, a=a: s == a, comp)
                cycle += seg[1:]
            cycle += [lab, b]
            cur = b
    if cur != entry or len(cycle) == 1:
        if cur == entry:
            loops = [lab for lab, j in ts.edges[entry] if j == entry]
            cycle += [loops[0], entry]
        else:
            seg = _bfs_path(ts, [cur], lambda s: s == entry, comp)
            cycle += seg[1:]
    return cycle


def find_fair_lasso(ts: TransitionSystem, start: set, forbid: list) -> Optional[Lasso]:
    """A lasso entering ``start`` whose suffix avoids ``forbid`` states and
    whose cycle is schedule consistent, or None."""
    allowed = {s for s in range(ts.size) if not forbid[s]}
    comps = fair_components(ts, allowed)
    if not comps:
        return None
    in_fair = {}
    for k, c in enumerate(comps):
        for s in c:
            in_fair[s] = k
    # states of ``allowed`` that reach a fair component staying in ``allowed``
    pred = {s: [] for s in allowed}
    for s in allowed:
        for _, j in ts.edges[s]:
            if j in allowed:
                pred[j].append(s)
    back = set(in_fair)
    queue = deque(in_fair)
    while queue:
        s = queue.popleft()
        for p in pred[s]:
            if p not in back:
                back.add(p)
                queue.append(p)
    good_start = set(start) & back
    if not good_start:
        return None
    stem = _bfs_path(ts, ts.initial, lambda s: s in good_start)
    s0 = stem[-1]
    tail = _bfs_path(ts, [s0], lambda s: s in in_fair, allowed)
    stem = stem + tail[1:]
    entry = stem[-1]
    cycle = _fair_cycle(ts, comps[in_fair[entry]], entry)
    return Lasso(stem, cycle)


def naive_fair_cycle_exists(ts: TransitionSystem, start: set, forbid: list, max_states: int = 10) -> bool:
    """Independent check by enumerating every state subset."""
    if ts.size > max_states:
        raise LimitExceeded("naive lasso enumeration", ts.size, max_states)
    allowed = [s for s in range(ts.size) if not forbid[s]]
    sched = ts.schedules()
    reach = set()
    queue = deque(s for s in start if not forbid[s])
    reach.update(queue)
    while queue:
        s = queue.popleft()
        for _, j in ts.edges[s]:
            if not forbid[j] and j not in reach:
                reach.add(j)
                queue.append(j)
    for k in range(1, len(allowed) + 1):
        for subset in itertools.combinations(allowed, k):
            w = set(subset)
            if not w <= reach:
                continue
            if not _strongly_connected(ts, w):
                continue
            ok = True
            for label, cs, fs in sched:
                if all(cs[s] for s in w) and any(fs[s] for s in w):
                    if not any(lab == label and j in w and fs[s] for s in w for lab, j in ts.edges[s]):
                        ok = False
                        break
            if ok:
                return True
    return False


def _strongly_connected(ts, w: set) -> bool:
    first = next(iter(w))
    if len(w) == 1:
        return any(j == first for _, j in ts.edges[first])

    def reach(fwd):
        seen = {first}
        stack = [first]
        while stack:
            s = stack.pop()
            nbrs = ([j for _, j in ts.edges[s]] if fwd
                    else [p for p in w for _, j in ts.edges[p] if j == s])
            for j in nbrs:
                if j in w and j not in seen:
                    seen.add(j)
                    stack.append(j)
        return seen
    return reach(True) == w and reach(False) == w


# ---------------------------------------------------------------------------
# Progress


def check_leadsto(ts: TransitionSystem, p: Expr, q: Expr, bound: Optional[dict] = None,
                  naive: Optional[int] = None) -> CheckResult:
    pv = ts.values(p, bound)
    qv = ts.values(q, bound)
    start = {s for s in range(ts.size) if pv[s]}
    return _progress(ts, start, qv, "leadsto", naive)


def check_transient(ts: TransitionSystem, p: Expr, bound: Optional[dict] = None,
                    naive: Optional[int] = None) -> CheckResult:
    pv = ts.values(p, bound)
    forbid = [not v for v in pv]
    return _progress(ts, set(range(ts.size)), forbid, "transient", naive)


def _progress(ts, start, forbid, kind, naive) -> CheckResult:
    if naive is not None:
        exists = naive_fair_cycle_exists(ts, start, forbid, naive)
        if not exists:
            return CheckResult(True, kind, detail="naive enumeration")
        lasso = find_fair_lasso(ts, start, forbid)
        return CheckResult(False, kind, lasso=lasso, detail="naive enumeration")
    lasso = find_fair_lasso(ts, start, forbid)
    if lasso is None:
        return CheckResult(True, kind)
    return CheckResult(False, kind, lasso=lasso)


def free_instances(machine: Machine, free: tuple) -> list:
    names = [n for n, _ in free]
    domains = [machine.sort_map[s].values for _, s in free]
    return [tuple(zip(names, combo)) for combo in itertools.product(*domains)]


def check_property(ts: TransitionSystem, prop: Property, naive: Optional[int] = None) -> CheckResult:
    """Check every instantiation of the property's free variables."""
    for inst in free_instances(ts.machine, prop.free):
        b = dict(inst)
        if prop.kind == "invariant":
            r = check_invariant(ts, prop.p, b)
        elif prop.kind == "unless":
            r = check_unless(ts, prop.p, prop.q, b)
        elif prop.kind == "leadsto":
            r = check_leadsto(ts, prop.p, prop.q, b, naive)
        elif prop.kind == "transient":
            r = check_transient(ts, prop.p, b, naive)
        else:
            raise ValueError(prop.kind)
        if not r.holds:
            r.instance = inst
            return r
    kind = prop.kind
    return CheckResult(True, kind)


def check_leadsto_goal(ts: TransitionSystem, p: Expr, q: Expr, free: tuple) -> CheckResult:
    return check_property(ts, Property("goal", "leadsto", p, q, free))


def check_transient_goal(ts: TransitionSystem, p: Expr, free: tuple) -> CheckResult:
    return check_property(ts, Property("goal", "transient", p, None, free))


def check_unless_goal(ts: TransitionSystem, p: Expr, q: Expr, free: tuple) -> CheckResult:
    return check_property(ts, Property("goal", "unless", p, q, free))


__all__ = [
    "CheckResult", "Lasso", "TransitionSystem", "build_ts", "check_invariant",
    "check_leadsto", "check_property", "check_transient", "check_unless",
    "cycle_schedule_consistent", "fair_components", "find_fair_lasso",
    "naive_fair_cycle_exists", "schedule_violated",
]
