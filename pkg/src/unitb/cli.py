"""``unitb`` command line."""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import pipeline
from .pipeline import USAGE, RunConfig


def _color_enabled(stream) -> bool:
    env = os.environ.get("UNITB_COLOR")
    if env in ("0", "1"):
        return env == "1"
    return hasattr(stream, "isatty") and stream.isatty()


class Painter:
    CODES = {"valid": "32", "holds": "32", "invalid": "31", "fails": "31", "limit": "33",
             "skipped": "33", "error": "31"}

    def __init__(self, on: bool):
        self.on = on

    def __call__(self, word: str) -> str:
        code = self.CODES.get(word)
        if not self.on or code is None:
            return word
        return f"\033[{code}m{word}\033[0m"


def _verdict_word(v: dict) -> str:
    s = v["status"]
    return {"valid": "valid", "skipped": "skipped"}.get(s, "invalid")


def _show_json_value(v, top=True) -> str:
    if isinstance(v, list):
        inner = ", ".join(_show_json_value(x, False) for x in v)
        # a JSON list is a set at the top and a pair inside a set
        return "{" + inner + "}" if top else "(" + inner + ")"
    return str(v)


def _show_val(val: dict) -> str:
    return ", ".join(f"{k} = {_show_json_value(v)}" for k, v in val.items())


def _show_step(step) -> str:
    if isinstance(step, dict):
        return _show_val(step)
    return f"  --{step}-->"


def _render_check(res: dict, lines: list, paint):
    if "holds" not in res:
        return
    if res.get("instance"):
        lines.append(f"      instance: {_show_val(res['instance'])}")
    if "path" in res:
        lines.append("      path:")
        for step in res["path"]:
            lines.append("        " + _show_step(step))
    if "edge" in res:
        e = res["edge"]
        lines.append(f"      edge {e['label']}: {_show_val(e['from'])}  -->  {_show_val(e['to'])}")
    if "lasso" in res:
        la = res["lasso"]
        for part in ("stem", "cycle"):
            lines.append(f"      {part}:")
            for step in la.get(part, []):
                lines.append("        " + _show_step(step))


def _obligation_lines(obls: list, lines: list, paint, verbose: bool):
    for o in obls:
        v = o.get("verdict")
        if v is None:
            lines.append(f"  PO    {o['name']}")
            continue
        word = _verdict_word(v)
        if verbose or word != "valid":
            lines.append(f"  PO    {paint(word):8} {o['name']}")
        if "valuation" in v:
            lines.append(f"      counter-model: {_show_val(v['valuation'])}")
        if v.get("reason"):
            lines.append(f"      {v['reason']}")


def render_text(report: dict, paint, verbose: bool = False) -> str:
    lines = []
    cmd = report["command"]
    for r in report["results"]:
        head = r.get("machine", "")
        lines.append(f"{paint(r['status'])} {head} {r['file']}".replace("  ", " "))
        for e in r.get("errors", []):
            lines.append(f"  error: {e}")
        for e in r.get("limits", []):
            lines.append(f"  {paint('limit')}: {e}")
        if cmd == "po":
            for o in r.get("obligations", []):
                lines.append(f"  {o['name']}  [{o['origin']}]")
                if o["context"]:
                    lines.append(f"      for {', '.join(o['context'])}")
                for h in o["hypotheses"]:
                    lines.append(f"      hyp  {h}")
                lines.append(f"      goal {o['goal']}")
                if "verdict" in o:
                    lines.append(f"      {paint(_verdict_word(o['verdict']))}")
                    v = o["verdict"]
                    if "valuation" in v:
                        lines.append(f"      counter-model: {_show_val(v['valuation'])}")
            continue
        if cmd == "export":
            for f in r.get("exported", []):
                lines.append(f"  {f['file']}  (expected {f['expected']})")
            continue
        if "obligations" in r:
            n = len(r["obligations"])
            ok = sum(1 for o in r["obligations"] if o.get("verdict", {}).get("status") == "valid")
            lines.append(f"  obligations: {ok}/{n} valid")
            _obligation_lines(r["obligations"], lines, paint, verbose)
        for d in r.get("derivations", []):
            if verbose or not d["valid"]:
                lines.append(f"  DERIV {paint('valid' if d['valid'] else 'invalid'):8} {d['label']}")
                for it in d.get("items", []):
                    if not it.get("valid", True):
                        lines.append(f"      {it.get('kind', '')} {it.get('name', '')}: {it.get('detail', '')}")
                for e in d.get("errors", []):
                    lines.append(f"      {e}")
        for p in r.get("properties", []):
            word = "holds" if p["valid"] else "fails"
            method = p.get("method", "model-check")
            lines.append(f"  PROP  {paint(word):8} {p['label']}: {p['statement']}  ({method})")
            if "reason" in p:
                lines.append(f"      {p['reason']}")
            if "check" in p:
                _render_check(p["check"], lines, paint)
            if "oracle" in p:
                o = p["oracle"]
                lines.append(f"      oracle: {'holds' if o['holds'] else 'fails'}"
                             f"{'' if o['agree'] else '  (DISAGREES with the proof rules)'}")
        ref = r.get("refinement")
        if ref:
            lines.append(f"  REF   {paint('valid' if ref['valid'] else 'invalid'):8} "
                         f"{ref['abstract']} -> {ref['concrete']}")
            for pr in ref["pairs"]:
                if verbose or not pr["valid"]:
                    lines.append(f"    {pr['concrete']} refines {pr['abstract'] or '(skip)'}: "
                                 f"{'valid' if pr['valid'] else 'invalid'}")
                    _obligation_lines(pr["obligations"], lines, paint, verbose)
                    for g in pr["goals"]:
                        if verbose or not g["valid"]:
                            lines.append(f"      {g['condition']} by {g['resolution']}: "
                                         f"{'valid' if g['valid'] else 'invalid'}  {g['statement']}")
                    for e in pr["errors"]:
                        lines.append(f"      error: {e}")
            for e in ref["errors"]:
                lines.append(f"    error: {e}")
            for v in ref["dependency_violations"]:
                lines.append(f"    circular: {v}")
        for f in r.get("failures", []):
            lines.append(f"  failed: {f}")
    lines.append(f"exit {report['exit_code']}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON report")
    common.add_argument("--state-limit", type=int, default=1_000_000, metavar="N")
    common.add_argument("--po-limit", type=int, default=pipeline.DEFAULT_PO_LIMIT, metavar="N",
                        help="valuations visited per obligation before giving up")
    common.add_argument("--seed", type=int, default=0, metavar="N")
    common.add_argument("--oracle", action="store_true",
                        help="also model-check every rule-certified property")
    common.add_argument("--naive-lasso", type=int, nargs="?", const=10, default=None, metavar="N",
                        help="use subset enumeration for fair cycles (at most N states)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="unitb", description="Check machines with coarse and fine schedules.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("check", "discharge obligations, derivations and refinement"),
                           ("po", "list proof obligations"),
                           ("refine", "check refinement steps")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("paths", nargs="+")
    p = sub.add_parser("mc", parents=[common], help="model-check properties")
    p.add_argument("path")
    p.add_argument("labels", nargs="*")
    p = sub.add_parser("export", parents=[common], help="write obligations as SMT-LIB scripts")
    p.add_argument("paths", nargs="+")
    p.add_argument("--out", default="smt", metavar="DIR")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else 0
    try:
        cfg = RunConfig(args.state_limit, args.po_limit, args.seed, args.oracle, args.naive_lasso)
    except ValueError as exc:
        print(f"unitb: {exc}", file=sys.stderr)
        return USAGE
    if args.command == "check":
        report = pipeline.cmd_check(args.paths, cfg)
    elif args.command == "mc":
        report = pipeline.cmd_mc(args.path, args.labels, cfg)
    elif args.command == "po":
        report = pipeline.cmd_po(args.paths, cfg)
    elif args.command == "export":
        report = pipeline.cmd_export(args.paths, args.out, cfg)
    else:
        report = pipeline.cmd_refine(args.paths, cfg)
    if args.json:
        sys.stdout.write(json.dumps(report, indent=2) + "\n")
    else:
        sys.stdout.write(render_text(report, Painter(_color_enabled(sys.stdout)), args.verbose))
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
