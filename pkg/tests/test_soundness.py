"""Whatever the proof rules certify must hold in the transition system."""
import glob
import os
import random

import pytest

from conftest import CONTROLS, CORPUS, SEED, TRAIN
from randmachine import Gen
from unitb.parser import parse_machine
from unitb.pipeline import rule_certified
from unitb.refinement import Workspace
from unitb.semantics import build_ts, check_property

RANDOM_MACHINES = 250
NAIVE_MAX = 10


def random_seeds(n=RANDOM_MACHINES):
    rng = random.Random(SEED)
    return [rng.randrange(10**9) for _ in range(n)]


def unsound(ws, m, ts=None):
    """Labels certified by the rules that fail in the model, plus the count certified."""
    certified = [l for l, ok in rule_certified(ws, m).items() if ok]
    ts = ts or build_ts(m)
    return [l for l in certified if not check_property(ts, m.property_map[l]).holds], len(certified)


def corpus_machines():
    out = []
    for pattern in (os.path.join(CORPUS, "*.ub"), os.path.join(TRAIN, "*.ub"), os.path.join(CONTROLS, "*.ub")):
        ws = Workspace()
        for f in sorted(glob.glob(pattern)):
            ws.load(f)
        out.extend((ws, m) for m in list(ws.machines.values()))
    return out


def engine_disagreements(ts, m):
    """Leads-to and transient properties on which the two lasso engines differ."""
    bad = []
    for prop in m.properties:
        if prop.kind in ("leadsto", "transient"):
            if check_property(ts, prop).holds != check_property(ts, prop, NAIVE_MAX).holds:
                bad.append(prop.label)
    return bad


def random_soundness_run(seeds):
    """(problems, certified count, systems compared by both engines)."""
    problems, certified, compared = [], 0, 0
    for k in seeds:
        m = parse_machine(Gen(k).machine())
        ts = build_ts(m)
        bad, n = unsound(Workspace(), m, ts)
        certified += n
        problems.extend((k, l) for l in bad)
        if ts.size <= NAIVE_MAX:
            compared += 1
            problems.extend((k, "engines", l) for l in engine_disagreements(ts, m))
    return problems, certified, compared


@pytest.mark.parametrize("ws, m", corpus_machines(), ids=lambda x: getattr(x, "name", ""))
def test_corpus_certified_properties_hold(ws, m):
    bad, n = unsound(ws, m)
    assert bad == []
    assert n > 0


def test_random_certified_properties_hold():
    problems, certified, compared = random_soundness_run(random_seeds())
    assert problems == []
    # the test means nothing if the rules never certify anything
    assert certified >= RANDOM_MACHINES
    assert compared >= 50


def test_corpus_engines_agree_on_small_systems():
    small = 0
    for _, m in corpus_machines():
        ts = build_ts(m)
        if ts.size <= NAIVE_MAX:
            small += 1
            assert engine_disagreements(ts, m) == [], m.name
    assert small >= 2
