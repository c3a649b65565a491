"""Command implementations shared by the CLI and the tests.

Each command returns a plain dict report; the exit code is computed from
the report alone (see ``exit_code``).
"""
from __future__ import annotations

import glob
import os
from dataclasses import dataclass
from typing import Optional

from . import __version__
from .evaluator import LimitExceeded, WDError
from .kernel import Machine
from .obligations import DEFAULT_PO_LIMIT, discharge, machine_obligations, po_to_json
from .parser import ParseError
from .refinement import DEV_INDEX, DevelopmentError, Workspace, check_refinement, parse_development

OK, FAILURE, USAGE, LIMIT = 0, 1, 2, 3


@dataclass
class RunConfig:
    state_limit: int = 1_000_000
    po_limit: int = DEFAULT_PO_LIMIT
    seed: int = 0
    oracle: bool = False
    naive_lasso: Optional[int] = None

    def __post_init__(self):
        if self.state_limit <= 0 or self.po_limit <= 0:
            raise ValueError("limits must be positive")
        if self.naive_lasso is not None and self.naive_lasso <= 0:
            raise ValueError("--naive-lasso needs a positive state count")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Inputs


def expand_paths(paths: list) -> list:
    """Machine files in order; a directory or index stands for its chain."""
    out = []
    listed = []
    for p in paths:
        # patterns the shell did not expand (quoted, or no shell at all)
        matches = sorted(glob.glob(p)) if not os.path.exists(p) and glob.has_magic(p) else []
        listed.extend(matches or [p])
    for p in listed:
        if os.path.isdir(p):
            p = os.path.join(p, DEV_INDEX)
        if p.endswith(".ub-dev"):
            if not os.path.exists(p):
                raise UsageError(f"{p}: no such development index")
            with open(p, encoding="utf-8") as fh:
                dev = parse_development(fh.read(), p)
            out.extend(dev.files[n] for n in dev.order)
        else:
            out.append(p)
    seen, uniq = set(), []
    for p in out:
        k = os.path.abspath(p)
        if k not in seen:
            seen.add(k)
            uniq.append(p)
    return uniq


def _load(ws: Workspace, path: str) -> Machine:
    if not os.path.exists(path):
        raise UsageError(f"{path}: no such file")
    return ws.load(path)


def _error_entry(path: str, exc: Exception) -> dict:
    if isinstance(exc, ParseError):
        return {"file": path, "status": "error",
                "errors": [d.location + ": " + d.kind + " error: " + d.message for d in exc.diagnostics]}
    return {"file": path, "status": "error", "errors": [str(exc)]}


# ---------------------------------------------------------------------------
# Obligations of one machine


def collect_obligations(ws: Workspace, m: Machine, refinement=None) -> list:
    """(po, verdict) for every obligation of the machine, in a stable order:
    invariance and feasibility, unless, derivations, refinement."""
    cert = ws.certifier(m)
    out, seen = [], set()

    def add(po, verdict):
        if po.name not in seen:
            seen.add(po.name)
            out.append((po, verdict))

    for po in machine_obligations(m):
        if po.origin == "UN":
            continue
        add(po, discharge(po, m, ws.po_limit))
    for prop in m.properties:
        if prop.kind == "unless" and prop.label not in m.derivation_map:
            for it in cert.unless_items(prop.label):
                add(it.po, it.verdict)
    for rep in cert.check_all():
        for it in rep.items:
            if it.po is not None:
                add(it.po, it.verdict)
    if refinement is not None:
        for r in refinement.all_pos():
            add(r.po, r.verdict)
    return out


def refinement_of(ws: Workspace, m: Machine):
    if m.name not in ws.refinements:
        a = ws.abstract_of(m)
        ws.refinements[m.name] = (None if a is None else
                                  check_refinement(a, m, ws.step_config(a, m), ws.certifier(m), ws.po_limit))
    return ws.refinements[m.name]


# ---------------------------------------------------------------------------
# check


def rule_method(m: Machine, prop) -> Optional[str]:
    """How the proof rules certify ``prop``; None when only model checking can."""
    if prop.kind == "invariant":
        return "INV"
    if prop.label in m.derivation_map:
        return "derivation"
    if prop.kind == "unless":
        return "UN"
    return None


def reuse_justified(ws: Workspace, m: Machine, label: str) -> bool:
    """A property reused from an earlier machine carries over only along
    valid refinement steps, and only if its own reuses do too."""
    for mname, l in sorted(ws.certifier(m).reuse_closure(label)):
        x = m
        while x.name != mname:
            rep = refinement_of(ws, x)
            if rep is None or not rep.valid:
                return False
            x = ws.abstract_of(x)
        if not reuse_justified(ws, x, l):
            return False
    return True


def _rule_valid(ws: Workspace, m: Machine, prop, pos: list) -> bool:
    cert = ws.certifier(m)
    if prop.kind == "invariant":
        return all(v.valid for po, v in pos if po.origin in ("INV-init", "INV-preserve")
                   and po.name.rsplit("/", 1)[-1] == prop.label)
    if prop.label in m.derivation_map:
        return cert.check(prop.label).valid and reuse_justified(ws, m, prop.label)
    return all(i.valid for i in cert.unless_items(prop.label))


def rule_certified(ws: Workspace, m: Machine) -> dict:
    """Label -> True/False for every property the proof rules address.

    Every obligation assumes all invariants, so nothing is certified unless
    every invariant is."""
    pos = [(po, discharge(po, m, ws.po_limit)) for po in machine_obligations(m)
           if po.origin in ("INV-init", "INV-preserve")]
    ok = all(v.valid for _, v in pos)
    return {p.label: ok and _rule_valid(ws, m, p, pos)
            for p in m.invariants + m.properties if rule_method(m, p) is not None}


def _property_entries(ws: Workspace, m: Machine, cfg: RunConfig, pos: list) -> list:
    from .semantics import check_property

    cert = ws.certifier(m)
    invariants_ok = all(v.valid for po, v in pos if po.origin in ("INV-init", "INV-preserve"))
    out = []
    for prop in m.invariants + m.properties:
        entry = {"label": prop.label, "kind": prop.kind, "statement": prop.describe()}
        method = rule_method(m, prop)
        if method is not None:
            entry["method"] = method
            entry["valid"] = invariants_ok and _rule_valid(ws, m, prop, pos)
            if method == "derivation" and cert.check(prop.label).valid and not reuse_justified(ws, m, prop.label):
                entry["reason"] = "reuses a property across a refinement step that is not valid"
        else:
            ts = cert.ts()
            r = check_property(ts, prop, cfg.naive_lasso)
            entry["method"] = "model-check"
            entry["valid"] = r.holds
            entry["check"] = r.to_json(ts)
        if cfg.oracle and entry["method"] != "model-check":
            ts = cert.ts()
            r = check_property(ts, prop, cfg.naive_lasso)
            entry["oracle"] = {"holds": r.holds, "agree": r.holds or not entry["valid"]}
            if not r.holds:
                entry["oracle"]["check"] = r.to_json(ts)
        out.append(entry)
    return out


def check_machine(ws: Workspace, m: Machine, path: str, cfg: RunConfig) -> dict:
    entry = {"file": path, "machine": m.name, "status": "valid", "errors": [], "limits": []}
    try:
        refinement = refinement_of(ws, m)
        pos = collect_obligations(ws, m, refinement)
        entry["obligations"] = [po_to_json(po, m, v) for po, v in pos]
        entry["derivations"] = [r.to_json() for r in ws.certifier(m).check_all()]
        entry["properties"] = _property_entries(ws, m, cfg, pos)
        entry["refinement"] = refinement.to_json(m) if refinement is not None else None
        for po, v in pos:
            if v.status == "skipped":
                entry["limits"].append(f"{po.name}: {v.reason}")
        entry["failures"] = _classify_failures(pos, entry, ws.certifier(m), refinement)
    except LimitExceeded as exc:
        entry["limits"].append(str(exc))
        entry["failures"] = []
    except WDError as exc:
        entry["failures"] = ["well-definedness"]
        entry["errors"].append(_wd_message(exc))
    entry["status"] = _status(entry)
    return entry


def _classify_failures(pos, entry, cert, refinement) -> list:
    """Definite failures, or nothing when every failure may stem from a limit.

    A skipped obligation makes the derivations and refinements above it
    inconclusive rather than wrong; those are reported as limits.  Derivation
    errors are not definite since many of them come from skipped steps."""
    definite = [po.name for po, v in pos if v.status in ("counter-model", "wd-failure")]
    definite += [f"property {p['label']}" for p in entry["properties"]
                 if not p["valid"] and p["method"] == "model-check"]
    definite += [f"oracle disagrees on {p['label']}" for p in entry["properties"]
                 if "oracle" in p and not p["oracle"]["agree"]]
    for d in entry["derivations"]:
        definite += [f"derivation {d['label']}: {it['name']}" for it in d["items"]
                     if it["kind"] == "semantic" and not it["valid"]]
    if refinement is not None:
        definite += list(refinement.errors)
        definite += [v.describe() for v in refinement.dependency_violations]
        definite += [e for p in refinement.pairs for e in p.errors]
    soft = [f"property {p['label']}" for p in entry["properties"] if not p["valid"]]
    soft += [f"derivation {d['label']}" for d in entry["derivations"] if not d["valid"]]
    if refinement is not None and not refinement.valid:
        soft.append(f"refinement {refinement.abstract} -> {refinement.concrete}")
    if not definite and entry["limits"]:
        entry["limits"].extend(f"{x} is inconclusive" for x in soft)
        return []
    failures = definite + soft
    return sorted(set(failures), key=failures.index)


def _wd_message(exc: WDError) -> str:
    from .semantics import show_state

    return f"{exc} at {show_state(exc.state)}"


def _status(entry: dict) -> str:
    if entry.get("failures"):
        return "invalid"
    if entry.get("limits"):
        return "limit"
    return "valid"


def cmd_check(paths: list, cfg: RunConfig) -> dict:
    ws = Workspace(cfg.po_limit, cfg.state_limit)
    results = []
    for path in _safe_expand(paths, results):
        try:
            m = _load(ws, path)
        except (ParseError, DevelopmentError, UsageError, OSError) as exc:
            results.append(_error_entry(path, exc))
            continue
        try:
            results.append(check_machine(ws, m, path, cfg))
        except (DevelopmentError, ParseError) as exc:
            results.append(_error_entry(path, exc))
    return _finish("check", cfg, results)


def _safe_expand(paths, results) -> list:
    try:
        return expand_paths(paths)
    except (UsageError, DevelopmentError, OSError) as exc:
        results.append({"file": " ".join(paths), "status": "error", "errors": [str(exc)]})
        return []


def _finish(command: str, cfg: RunConfig, results: list) -> dict:
    report = {"tool": "unitb", "version": __version__, "command": command, "seed": cfg.seed,
              "results": results}
    report["exit_code"] = exit_code(report)
    report["valid"] = report["exit_code"] == OK
    return report


def exit_code(report: dict) -> int:
    statuses = [r["status"] for r in report["results"]]
    if not statuses or "error" in statuses:
        return USAGE
    if "invalid" in statuses:
        return FAILURE
    if "limit" in statuses:
        return LIMIT
    return OK


# ---------------------------------------------------------------------------
# mc


def cmd_mc(path: str, labels: list, cfg: RunConfig) -> dict:
    from .semantics import build_ts, check_property

    ws = Workspace(cfg.po_limit, cfg.state_limit)
    results = []
    try:
        m = _load(ws, path)
    except (ParseError, DevelopmentError, UsageError, OSError) as exc:
        return _finish("mc", cfg, [_error_entry(path, exc)])
    props = {p.label: p for p in m.invariants + m.properties}
    chosen = labels or list(props)
    missing = [l for l in chosen if l not in props]
    if missing:
        return _finish("mc", cfg, [{"file": path, "status": "error",
                                     "errors": [f"{m.name} has no property {l}" for l in missing]}])
    entry = {"file": path, "machine": m.name, "properties": [], "errors": [], "limits": [], "failures": []}
    try:
        ts = build_ts(m, cfg.state_limit)
        entry["states"] = ts.size
        entry["transitions"] = ts.edge_count()
        for l in chosen:
            r = check_property(ts, props[l], cfg.naive_lasso)
            entry["properties"].append({"label": l, "kind": props[l].kind, "statement": props[l].describe(),
                                        "valid": r.holds, "check": r.to_json(ts)})
            if not r.holds:
                entry["failures"].append(f"property {l}")
    except LimitExceeded as exc:
        entry["limits"].append(str(exc))
    except WDError as exc:
        entry["failures"].append("well-definedness")
        entry["errors"].append(_wd_message(exc))
    entry["status"] = _status(entry)
    results.append(entry)
    return _finish("mc", cfg, results)


# ---------------------------------------------------------------------------
# po and export


def _obligation_entries(paths: list, cfg: RunConfig, with_scripts: bool = False) -> tuple:
    ws = Workspace(cfg.po_limit, cfg.state_limit)
    results, scripts = [], []
    for path in _safe_expand(paths, results):
        try:
            m = _load(ws, path)
        except (ParseError, DevelopmentError, UsageError, OSError) as exc:
            results.append(_error_entry(path, exc))
            continue
        entry = {"file": path, "machine": m.name, "errors": [], "limits": [], "failures": []}
        try:
            pos = collect_obligations(ws, m, refinement_of(ws, m))
        except LimitExceeded as exc:
            entry["limits"].append(str(exc))
            pos = []
        except WDError as exc:
            entry["failures"].append("well-definedness")
            entry["errors"].append(_wd_message(exc))
            pos = []
        entry["obligations"] = [po_to_json(po, m, v) for po, v in pos]
        for po, v in pos:
            if v.status == "skipped":
                entry["limits"].append(f"{po.name}: {v.reason}")
            elif not v.valid:
                entry["failures"].append(po.name)
        if with_scripts:
            scripts.append((m, pos, entry))
        entry["status"] = _status(entry)
        results.append(entry)
    return results, scripts


def cmd_po(paths: list, cfg: RunConfig) -> dict:
    results, _ = _obligation_entries(paths, cfg)
    return _finish("po", cfg, results)


def obligation_file(out_dir: str, name: str) -> str:
    """File of an exported obligation: its name's segments become directories."""
    parts = [p for p in name.split("/") if p not in ("", ".", "..")]
    return os.path.join(out_dir, *parts[:-1], parts[-1] + ".smt2")


def name_of_file(out_dir: str, path: str) -> str:
    rel = os.path.relpath(path, out_dir)
    assert rel.endswith(".smt2")
    return "/".join(rel[: -len(".smt2")].split(os.sep))


def cmd_export(paths: list, out_dir: str, cfg: RunConfig) -> dict:
    from .smtlib import encode_obligation

    results, scripts = _obligation_entries(paths, cfg, with_scripts=True)
    for m, pos, entry in scripts:
        files = []
        for po, v in pos:
            target = obligation_file(out_dir, po.name)
            os.makedirs(os.path.dirname(target), exist_ok=True)
            with open(target, "w", encoding="utf-8") as fh:
                fh.write(encode_obligation(po, m))
            files.append({"name": po.name, "file": target, "expected": "unsat" if v.valid else
                          ("unknown" if v.status == "skipped" else "sat")})
        entry["exported"] = files
        del entry["obligations"]
    return _finish("export", cfg, results)


# ---------------------------------------------------------------------------
# refine


def cmd_refine(paths: list, cfg: RunConfig) -> dict:
    ws = Workspace(cfg.po_limit, cfg.state_limit)
    results = []
    for path in _safe_expand(paths, results):
        try:
            m = _load(ws, path)
        except (ParseError, DevelopmentError, UsageError, OSError) as exc:
            results.append(_error_entry(path, exc))
            continue
        entry = {"file": path, "machine": m.name, "errors": [], "limits": [], "failures": []}
        try:
            rep = refinement_of(ws, m)
            entry["refinement"] = rep.to_json(m) if rep is not None else None
            if rep is not None:
                for r in rep.all_pos():
                    if r.verdict.status == "skipped":
                        entry["limits"].append(f"{r.po.name}: {r.verdict.reason}")
                definite = ([r.po.name for r in rep.all_pos() if r.verdict.status in ("counter-model", "wd-failure")]
                            + rep.errors + [v.describe() for v in rep.dependency_violations]
                            + [e for p in rep.pairs for e in p.errors])
                if not rep.valid and (definite or not entry["limits"]):
                    entry["failures"].extend(definite + [f"refinement {rep.abstract} -> {rep.concrete}"])
        except LimitExceeded as exc:
            entry["limits"].append(str(exc))
        except WDError as exc:
            entry["failures"].append("well-definedness")
            entry["errors"].append(_wd_message(exc))
        except DevelopmentError as exc:
            results.append(_error_entry(path, exc))
            continue
        entry["status"] = _status(entry)
        results.append(entry)
    return _finish("refine", cfg, results)


__all__ = [
    "RunConfig", "UsageError", "cmd_check", "cmd_export", "cmd_mc", "cmd_po", "cmd_refine",
    "collect_obligations", "exit_code", "expand_paths", "name_of_file", "obligation_file",
    "refinement_of", "reuse_justified", "rule_certified", "rule_method",
]
