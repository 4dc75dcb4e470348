"""Acceptance criteria 1-8; each test_criterion_<N>_* function is one criterion."""

import itertools
import json
import math
import os
import shutil
import time
from fractions import Fraction

import numpy as np
import pytest

from tensent.cli import fixture_path, main
from tensent.core import PolarityLabel
from tensent.ensemble import (BootstrapConfig, Provenance, bootstrap_confidence_sweep, build_seed_training,
                              exhaustive_weight_search, majority_vote, majority_vote_codes, weighted_vote,
                              weighted_vote_codes)
from tensent.evaluation import (MAJORITY, SUPERVISED, TENSENT, BenchmarkConfig, accuracy, confusion_matrix,
                                macro_f1, mean_rank, micro_f1, paired_t_test, run_benchmark)
from tensent.lexicons import PredictionMatrix, default_bank, default_emoticon_map, default_lexicon_dir
from tensent.synth import generate_dataset, generate_family

from conftest import DATA_DIR, N, P, U

LABELS = (N, U, P)
SYNTH_SEED = 42


def _expected():
    with open(os.path.join(DATA_DIR, "synth_expected.json"), encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# 1. voting oracle

def _oracle_vote(votes, weights):
    score = {lab: Fraction(0) for lab in LABELS}
    for v, w in zip(votes, weights):
        score[v] += Fraction(w)
    top = max(score.values())
    winners = [lab for lab in LABELS if score[lab] == top]
    return winners[0] if len(winners) == 1 else U


def test_criterion_1_voting_oracle():
    start = time.perf_counter()
    for n in range(1, 6):
        for votes in itertools.product(LABELS, repeat=n):
            expected = _oracle_vote(votes, [1] * n)
            assert majority_vote(list(votes)) is expected
            assert weighted_vote(list(votes), [1.0] * n) is expected
    grid = (0.0, 0.5, 1.0)
    for weights in itertools.product(grid, repeat=3):
        for votes in itertools.product(LABELS, repeat=3):
            assert weighted_vote(list(votes), list(weights)) is _oracle_vote(votes, weights)
    assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------------------
# 2. metric oracles

def _oracle_macro(cm):
    f1s = []
    for k in range(3):
        tp = cm[k][k]
        pred = sum(cm[i][k] for i in range(3))
        gold = sum(cm[k])
        p = Fraction(tp, pred) if pred else Fraction(0)
        r = Fraction(tp, gold) if gold else Fraction(0)
        f1s.append(2 * p * r / (p + r) if p + r else Fraction(0))
    return sum(f1s) / 3


FIXED_MATRICES = [
    [[2, 1, 0], [0, 3, 0], [1, 0, 3]],     # Macro-F1 50/63
    [[5, 0, 0], [0, 5, 0], [0, 0, 5]],     # all diagonal
    [[7, 0, 0], [0, 1, 0], [0, 0, 2]],     # diagonal, unbalanced
    [[5, 0, 0], [2, 0, 2], [0, 0, 5]],     # Neutral never predicted
    [[4, 1, 0], [0, 0, 0], [1, 0, 4]],     # Neutral missing from gold
    [[0, 3, 0], [0, 3, 0], [0, 3, 0]],     # everything predicted Neutral
    [[8, 1, 1], [1, 8, 1], [1, 1, 8]],
    [[1, 0, 9], [0, 10, 0], [9, 0, 1]],
    [[0, 0, 1], [0, 0, 0], [0, 0, 0]],     # single wrong prediction
    [[3, 2, 1], [4, 5, 6], [9, 8, 7]],
    [[100, 1, 0], [0, 0, 1], [0, 0, 1]],
    [[2, 2, 2], [2, 2, 2], [2, 2, 2]],
]


def test_criterion_2_metric_oracles():
    assert _oracle_macro(FIXED_MATRICES[0]) == Fraction(50, 63)
    for cm in FIXED_MATRICES:
        assert macro_f1(cm) == pytest.approx(float(_oracle_macro(cm)), abs=1e-12)
        total = sum(map(sum, cm))
        assert micro_f1(cm) == pytest.approx(sum(cm[k][k] for k in range(3)) / total, abs=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        gold = [LABELS[i] for i in rng.integers(0, 3, n)]
        pred = [LABELS[i] for i in rng.integers(0, 3, n)]
        assert micro_f1(confusion_matrix(gold, pred)) == pytest.approx(accuracy(gold, pred), abs=1e-12)


# ---------------------------------------------------------------------------
# 3. self-training mechanics

def _fixture_matrix(n=400, m=10, seed=3):
    # each method copies a hidden label with its own accuracy, otherwise votes at random
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, 3, n)
    acc = rng.uniform(0.3, 0.9, m)
    codes = np.where(rng.random((n, m)) < acc, truth[:, None], rng.integers(0, 3, (n, m)))
    rows = {f"s{i}": tuple(LABELS[c] for c in codes[i]) for i in range(n)}
    return PredictionMatrix(tuple(f"m{j}" for j in range(m)), rows)


def test_criterion_3_algorithm_mechanics():
    matrix = _fixture_matrix()
    sizes = [len(build_seed_training(matrix, a)[0]) for a in range(3, 11)]
    assert all(x >= y for x, y in zip(sizes, sizes[1:]))
    assert sizes[0] > sizes[-1]

    ds = generate_dataset(1, 600, seed=11)
    bank, emo = default_bank(), default_emoticon_map()
    half = len(ds) // 2
    train, test = ds.subset(ds.ids[:half]).without_gold(), ds.subset(ds.ids[half:]).without_gold()
    for a in (5, 7):
        runs = bootstrap_confidence_sweep(train, test, bank, BootstrapConfig(a, 0.7, seed=1),
                                          (0.0, 0.5, 0.7, 0.9, 1.0), emoticon_map=emo)
        for c, res in runs.items():
            assert res.final_size >= res.seed_size
            assert res.training[:res.seed_size] == res.seeds
            added = {ex.sentence_id for ex in res.training[res.seed_size:]}
            assert all(ex.provenance is Provenance.BOOTSTRAP_ADDED for ex in res.training[res.seed_size:])
            assert added == {rid for rid, (_, conf) in res.candidates.items() if conf >= c}
            assert all(0.0 <= conf <= 1.0 for _, conf in res.predictions.values())
        # closed gate: only unanimous forest votes could pass, so with none the set is unchanged
        closed = runs[1.0]
        non_unanimous = {rid for rid, (_, conf) in closed.candidates.items() if conf < 1.0}
        assert not non_unanimous & {ex.sentence_id for ex in closed.training}
        if len(non_unanimous) == len(closed.candidates):
            assert closed.training == closed.seeds
        assert runs[0.0].final_size == runs[0.0].seed_size + len(runs[0.0].candidates)


# ---------------------------------------------------------------------------
# 4. synthetic stability experiment

@pytest.fixture(scope="module")
def synth_reports():
    bank, emo = default_bank(), default_emoticon_map()
    cfg = BenchmarkConfig(BootstrapConfig(7, 0.7, seed=SYNTH_SEED), folds=5, seed=SYNTH_SEED,
                          weight_grid=None, threads=1)
    start = time.perf_counter()
    reports = [run_benchmark(ds, bank, cfg, emo) for ds in generate_family(8, 2000, seed=SYNTH_SEED)]
    return reports, time.perf_counter() - start


def test_criterion_4_synthetic_stability(synth_reports):
    reports, elapsed = synth_reports
    expected = _expected()["datasets"]
    assert elapsed < 180.0
    base = default_bank().names
    table = {m: [] for m in base + [MAJORITY, TENSENT, SUPERVISED]}
    for rep in reports:
        oracle = expected[rep.dataset]
        for method in table:
            got = 100 * rep.score(method).mean_macro_f1
            assert abs(got - oracle[method]) <= 2.0, (rep.dataset, method, got, oracle[method])
            table[method].append(got)
    ranks = mean_rank(table)
    # (a) better mean rank than every base method
    assert all(ranks[TENSENT] < ranks[m] for m in base)
    # (b) never more than 2 points under majority voting, above it on at least half
    diffs = [t - mv for t, mv in zip(table[TENSENT], table[MAJORITY])]
    assert min(diffs) >= -2.0
    assert sum(d > 0 for d in diffs) >= len(diffs) / 2
    # (c) fully supervised >= 10SENT >= worst base method
    for i in range(len(reports)):
        assert table[SUPERVISED][i] >= table[TENSENT][i] >= min(table[m][i] for m in base)


# ---------------------------------------------------------------------------
# 5. exhaustive weight search

def test_criterion_5_weight_search():
    rng = np.random.default_rng(20)
    gold = [LABELS[i] for i in rng.integers(0, 3, 20)]
    truth = np.array([int(g) for g in gold])
    codes = np.where(rng.random((20, 3)) < [[0.7, 0.5, 0.4]], truth[:, None], rng.integers(-1, 2, (20, 3)))
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)

    start = time.perf_counter()
    weights, f1 = exhaustive_weight_search(codes, gold, grid)
    elapsed = time.perf_counter() - start

    best, best_w = -1.0, None
    for w in itertools.product(grid, repeat=3):
        if not any(w):
            continue
        pred = [_oracle_vote([PolarityLabel(int(c)) for c in row], w) for row in codes]
        score = macro_f1(confusion_matrix(gold, pred))
        if score > best + 1e-12:
            best, best_w = score, w
    assert f1 == pytest.approx(best, abs=1e-12)
    assert weights.weights == best_w
    assert weighted_vote_codes(codes, (1.0, 1.0, 1.0)) == majority_vote_codes(codes)
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# 6. emoticon transfer through the CLI

def test_criterion_6_emoticon_transfer(tmp_path):
    oracle = _expected()["emoticon_transfer"]
    data = tmp_path / "synth"
    assert main(["synth", "--count", "1", "--out", str(data)]) == 0
    path = str(data / "synth_emoticons.tsv")
    common = [path, "--seed", str(SYNTH_SEED), "--no-weight-search", "--threads", "1"]
    assert main(["benchmark", *common, "--out", str(tmp_path / "with")]) == 0
    assert main(["benchmark", *common, "--no-emoticons", "--out", str(tmp_path / "without")]) == 0

    def summary(kind):
        return json.loads((tmp_path / kind / "synth_emoticons.summary.json").read_text())

    def tensent_f1(s):
        return 100 * next(m["mean_macro_f1"] for m in s["methods"] if m["method"] == TENSENT)

    with_, without = summary("with"), summary("without")
    for s in (with_, without):
        assert s["emoticons"] == {"accuracy": oracle["correct"] / oracle["covered"],
                                  "coverage": oracle["covered"] / 2000}
    assert tensent_f1(with_) >= tensent_f1(without) - 0.5
    assert abs(tensent_f1(with_) - oracle["with_emoticons"]) <= 2.0
    assert abs(tensent_f1(without) - oracle["without_emoticons"]) <= 2.0


# ---------------------------------------------------------------------------
# 7. determinism

def test_criterion_7_determinism(tmp_path):
    lex = tmp_path / "lex"
    lex.mkdir()
    for i in range(1, 5):
        shutil.copy(os.path.join(default_lexicon_dir(), f"lex{i:02d}.tsv"), lex)
    conf = tmp_path / "run.ini"
    conf.write_text("[bootstrap]\nagreement = 3\n[forest]\nn_trees = 30\n[evaluation]\nfolds = 3\n"
                    "weight_grid = 0, 0.5, 1\n", encoding="utf-8")
    outs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / name
        assert main(["benchmark", fixture_path(), "--config", str(conf), "--lexicon-dir", str(lex),
                     "--seed", "5", "--threads", str(threads), "--out", str(out)]) == 0
        outs.append({f: (out / f).read_bytes() for f in sorted(os.listdir(out))})
    assert set(outs[0]) == {"fixture.folds.tsv", "fixture.summary.json", "mean_ranks.tsv"}
    assert outs[0] == outs[1] == outs[2]


# ---------------------------------------------------------------------------
# 8. statistical machinery

def test_criterion_8_t_test():
    result = paired_t_test([3.0, 2.0, 4.0, 3.0, 3.0], [1.0] * 5)  # d = [2,1,3,2,2]
    assert result.t_statistic == pytest.approx(2 * math.sqrt(10), abs=1e-9)
    assert result.significant
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(2, 12))
        a, b = rng.uniform(0.4, 0.9, n), rng.uniform(0.4, 0.9, n)
        ab, ba = paired_t_test(a, b), paired_t_test(b, a)
        assert ab.t_statistic == pytest.approx(-ba.t_statistic, abs=1e-12)
        assert ab.significant == ba.significant
