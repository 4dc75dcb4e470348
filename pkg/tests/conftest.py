import os
import re

import pytest

from tensent.core import Dataset, PolarityLabel, SentenceRecord
from tensent.lexicons import EmoticonMap, Lexicon, MethodBank

P, U, N = PolarityLabel.POSITIVE, PolarityLabel.NEUTRAL, PolarityLabel.NEGATIVE

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def make_dataset(rows, name="fx"):
    """rows: (id, text, gold) triples; gold may be None."""
    return Dataset(name, tuple(SentenceRecord(i, t, g) for i, t, g in rows))


@pytest.fixture
def small_bank():
    """Three hand lexicons over a tiny vocabulary."""
    return MethodBank((
        Lexicon("alpha", {"good": 1.0, "great": 2.0, "bad": -1.0}, frozenset({"not"}), 2),
        Lexicon("beta", {"good": 1.0, "awful": -2.0, "fine": 0.5}),
        Lexicon("gamma", {"bad": -1.0, "awful": -1.0, "great": 1.0, "meh": 0.0}),
    ))


@pytest.fixture
def smiley_map():
    return EmoticonMap({":)": P, ":(": N, ":|": U})


_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if not m:
                continue
            num, name = int(m.group(1)), m.group(2).replace("_", " ")
            ok = rep.outcome == "passed" and outcomes.get(num, (True, name))[0]
            outcomes[num] = (ok, name)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(outcomes):
        ok, name = outcomes[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {name}")
