import csv
import json
import math

import numpy as np
import pytest
from scipy import stats

from tensent.core import SentenceRecord, Dataset
from tensent.ensemble import BootstrapConfig
from tensent.evaluation import (BEST_INDIVIDUAL, FOLD_FIELDS, MAJORITY, SUPERVISED, T_CRITICAL_05, TENSENT,
                                WEIGHTED, BenchmarkConfig, ConfusionMatrix, EmptyMatrix, RaggedTable,
                                accuracy, confusion_matrix, dataset_ranks, emoticon_quality, format_report,
                                macro_f1, mean_rank, micro_f1, paired_t_test, per_class_prf, run_benchmark,
                                t_critical, write_mean_ranks, write_report)
from tensent.learner import HyperParams
from tensent.synth import generate_dataset

from conftest import N, P, U


# ---------------------------------------------------------------------------
# metrics

def test_hand_computed_matrix():
    # Negative: p = 2/3, r = 2/3, F1 = 2/3
    # Neutral:  p = 3/4, r = 1,   F1 = 6/7
    # Positive: p = 1,   r = 3/4, F1 = 6/7
    cm = [[2, 1, 0], [0, 3, 0], [1, 0, 3]]
    assert macro_f1(cm) == pytest.approx(50 / 63, abs=1e-12)
    assert micro_f1(cm) == pytest.approx(0.8, abs=1e-12)
    prf = per_class_prf(cm)
    assert prf[0] == pytest.approx((2 / 3, 2 / 3, 2 / 3))
    assert prf[1] == pytest.approx((3 / 4, 1.0, 6 / 7))


def test_confusion_from_labels():
    gold = [N, N, N, U, U, U, P, P, P, P]
    pred = [N, N, U, U, U, U, N, P, P, P]
    assert confusion_matrix(gold, pred).tolist() == [[2, 1, 0], [0, 3, 0], [1, 0, 3]]
    assert accuracy(gold, pred) == 0.8


def test_diagonal_and_missing_class():
    assert macro_f1(np.diag([3, 4, 5])) == 1.0
    # never predicts Neutral although gold has it: F1_neutral = 0
    cm = [[5, 0, 0], [2, 0, 2], [0, 0, 5]]
    neg_f1 = 2 * (5 / 7) * 1 / (5 / 7 + 1)
    assert macro_f1(cm) == pytest.approx((neg_f1 + 0 + neg_f1) / 3, abs=1e-12)


def test_trace_six_of_ten():
    assert micro_f1([[2, 1, 1], [0, 2, 1], [1, 0, 2]]) == pytest.approx(0.6)


def test_balanced_symmetric_errors_macro_equals_micro():
    cm = [[8, 1, 1], [1, 8, 1], [1, 1, 8]]
    assert macro_f1(cm) == pytest.approx(micro_f1(cm), abs=1e-12)


def test_averaged_pr_variant():
    cm = [[2, 1, 0], [0, 3, 0], [1, 0, 3]]
    p = (2 / 3 + 3 / 4 + 1) / 3
    r = (2 / 3 + 1 + 3 / 4) / 3
    assert macro_f1(cm, "averaged_pr") == pytest.approx(2 * p * r / (p + r), abs=1e-12)
    with pytest.raises(ValueError):
        macro_f1(cm, "weighted")


def test_bad_matrices():
    with pytest.raises(EmptyMatrix):
        macro_f1(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ConfusionMatrix(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ConfusionMatrix(-np.eye(3))


# ---------------------------------------------------------------------------
# ranks

def test_mean_rank_arithmetic():
    table = {"a": [3.0, 2.0, 1.0], "b": [2.0, 3.0, 2.0], "c": [1.0, 1.0, 3.0]}
    # per-dataset ranks: a 1,2,3; b 2,1,2; c 3,3,1
    assert mean_rank(table) == {"a": 2.0, "b": 5 / 3, "c": 7 / 3}


def test_tied_best_share_rank():
    assert dataset_ranks({"a": 0.8, "b": 0.8, "c": 0.5}) == {"a": 1.5, "b": 1.5, "c": 3.0}


def test_ragged_table():
    with pytest.raises(RaggedTable):
        mean_rank({"a": [1.0, 2.0], "b": [1.0]})


# ---------------------------------------------------------------------------
# significance

def test_t_test_hand_fixture():
    # d = [2,1,3,2,2]: mean 2, sample sd sqrt(0.5), n 5 -> t = 2 / (sqrt(0.5)/sqrt(5)) = 2*sqrt(10)
    a = [3.0, 2.0, 4.0, 3.0, 3.0]
    b = [1.0, 1.0, 1.0, 1.0, 1.0]
    result = paired_t_test(a, b)
    assert result.t_statistic == pytest.approx(2 * math.sqrt(10), abs=1e-9)
    assert round(result.t_statistic, 3) == 6.325
    assert result.significant


def test_t_test_zero_variance():
    assert paired_t_test([1.0, 2.0], [1.0, 2.0]) == (0.0, False)
    assert paired_t_test([2.0] * 5, [1.0] * 5) == (0.0, False)


def test_critical_table_against_reference():
    for df in range(1, 31):
        assert t_critical(df) == pytest.approx(stats.t.ppf(0.975, df), abs=5e-4)
    assert t_critical(200) == T_CRITICAL_05[-1]
    with pytest.raises(ValueError):
        t_critical(0)


def test_t_statistic_against_reference():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=7), rng.normal(size=7)
        assert paired_t_test(a, b).t_statistic == pytest.approx(stats.ttest_rel(a, b).statistic, rel=1e-9)


# ---------------------------------------------------------------------------
# emoticons

def _emo_dataset(rows):
    return Dataset("e", tuple(SentenceRecord(str(i), t, g, e) for i, (t, g, e) in enumerate(rows)))


def test_emoticon_quality_hand_count():
    # 10 records, 4 carry an emoticon label, 3 of those agree with gold
    rows = [("x", P, P), ("x", N, N), ("x", U, U), ("x", P, N)] + [("x", U, None)] * 6
    assert emoticon_quality(_emo_dataset(rows)) == (0.75, 0.4)


def test_emoticon_quality_edges(smiley_map):
    assert emoticon_quality(_emo_dataset([("plain", P, None)] * 3)) == (None, 0.0)
    rows = [("yay :)", P, None), ("boo :(", N, None)]
    assert emoticon_quality(_emo_dataset(rows), smiley_map) == (1.0, 1.0)


# ---------------------------------------------------------------------------
# benchmark

@pytest.fixture(scope="module")
def small_report():
    from tensent.lexicons import default_bank, default_emoticon_map
    bank = default_bank().subset(4)
    ds = generate_dataset(2, 150, seed=5)
    cfg = BenchmarkConfig(BootstrapConfig(3, 0.7), folds=3, seed=1, param_grid=(HyperParams(n_trees=15),),
                          weight_grid=(0.0, 0.5, 1.0))
    return run_benchmark(ds, bank, cfg, default_emoticon_map()), bank


def test_report_rows(small_report):
    report, bank = small_report
    assert len(report.scores) == len(bank) + 5
    assert report.methods == bank.names + [MAJORITY, TENSENT, WEIGHTED, BEST_INDIVIDUAL, SUPERVISED]
    for s in report.scores:
        assert len(s.per_fold_macro_f1) == 3
        assert all(0.0 <= v <= 1.0 for v in s.per_fold_macro_f1)
    assert set(report.ranks) == set(report.methods)
    assert all(k[0] == TENSENT for k in report.significance)


def test_report_diagnostics(small_report):
    report, _ = small_report
    assert [d.fold for d in report.diagnostics] == [0, 1, 2]
    for d in report.diagnostics:
        assert d.final_size >= d.seed_size > 0
        assert 0.0 <= d.seed_accuracy <= 1.0
        assert d.weights is not None and len(d.weights) == 4


def test_report_files(small_report, tmp_path):
    report, bank = small_report
    folds_path, summary_path = write_report(report, tmp_path)
    with open(folds_path, newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    assert tuple(rows[0]) == FOLD_FIELDS
    assert len(rows) == (len(bank) + 5) * 3
    tensent_rows = [r for r in rows if r["method"] == TENSENT]
    assert all(r["train_seed_size"] and r["train_final_size"] and r["train_accuracy"] for r in tensent_rows)
    summary = json.loads(open(summary_path).read())
    assert [m["method"] for m in summary["methods"]] == report.methods
    ranks = write_mean_ranks([report], tmp_path)
    assert ranks == report.ranks
    text = format_report(report)
    assert TENSENT in text and "emoticons:" in text


def test_benchmark_needs_gold():
    from tensent.lexicons import default_bank
    ds = generate_dataset(0, 20, seed=1).without_gold()
    with pytest.raises(ValueError):
        run_benchmark(ds, default_bank(), BenchmarkConfig(weight_grid=None))
