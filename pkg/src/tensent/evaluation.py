"""Metrics, rank aggregation, significance testing and the cross-validated benchmark."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import Dataset, PolarityLabel, TensentError, split_folds, tokenize
from .ensemble import (DEFAULT_WEIGHT_GRID, BootstrapConfig, exhaustive_weight_search,
                       majority_vote_codes, weighted_vote_codes)
from .learner import HyperParams, build_feature_matrix, build_vocabulary, grid_search, predict_batch, \
    train_or_constant
from .lexicons import EmoticonMap, MethodBank, annotate_emoticons, run_base_methods

MACRO_VARIANTS = ("per_class", "averaged_pr")

MAJORITY = "majority_voting"
TENSENT = "10sent"
WEIGHTED = "exhaustive_weighted_voting"
BEST_INDIVIDUAL = "best_individual"
SUPERVISED = "fully_supervised"

# two-sided 5% critical values of Student's t, df = 1..30
T_CRITICAL_05 = (
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
)


class EmptyMatrix(TensentError, ValueError):
    pass


class RaggedTable(TensentError, ValueError):
    pass


class BenchmarkError(TensentError):
    def __init__(self, method: str, fold: int, cause: Exception):
        self.method = method
        self.fold = fold
        self.cause = cause
        super().__init__(f"{method} failed on fold {fold}: {cause}")


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class ConfusionMatrix:
    """3x3 counts indexed (gold, predicted) in Negative, Neutral, Positive order."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (3, 3):
            raise ValueError("confusion matrix must be 3x3")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tolist(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion_matrix(gold: Sequence[PolarityLabel], predicted: Sequence[PolarityLabel]) -> ConfusionMatrix:
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted lengths differ")
    counts = np.zeros((3, 3), dtype=np.int64)
    for g, p in zip(gold, predicted):
        counts[PolarityLabel(g).index, PolarityLabel(p).index] += 1
    return ConfusionMatrix(counts)


def _as_counts(cm) -> np.ndarray:
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else ConfusionMatrix(cm).counts
    if counts.sum() == 0:
        raise EmptyMatrix("confusion matrix is empty")
    return counts


def per_class_prf(cm) -> list[tuple[float, float, float]]:
    """(precision, recall, F1) per class; any 0/0 is taken as 0."""
    counts = _as_counts(cm)
    out = []
    for c in range(3):
        tp = counts[c, c]
        pred = counts[:, c].sum()
        actual = counts[c, :].sum()
        p = tp / pred if pred > 0 else 0.0
        r = tp / actual if actual > 0 else 0.0
        f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        out.append((float(p), float(r), float(f1)))
    return out


def macro_f1(cm, variant: str = "per_class") -> float:
    """Unweighted mean of per-class F1.

    variant="averaged_pr" instead takes the harmonic mean of macro-averaged
    precision and recall; the two differ on skewed data.
    """
    prf = per_class_prf(cm)
    if variant == "per_class":
        total = 0.0
        for _, _, f1 in prf:
            total += f1
        return total / 3.0
    if variant == "averaged_pr":
        p = sum(x[0] for x in prf) / 3.0
        r = sum(x[1] for x in prf) / 3.0
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    raise ValueError(f"unknown macro variant {variant!r}")


def micro_f1(cm) -> float:
    counts = _as_counts(cm)
    return float(np.trace(counts) / counts.sum())


def accuracy(gold: Sequence[PolarityLabel], predicted: Sequence[PolarityLabel]) -> float:
    if not gold:
        raise EmptyMatrix("nothing to score")
    return sum(g == p for g, p in zip(gold, predicted)) / len(gold)


# ---------------------------------------------------------------------------
# ranking and significance

def dataset_ranks(scores: Mapping[str, float]) -> dict[str, float]:
    """Rank 1 = highest score; tied methods share the mean of their positions."""
    ordered = sorted(scores, key=lambda m: -scores[m])
    ranks: dict[str, float] = {}
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and scores[ordered[j + 1]] == scores[ordered[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for m in ordered[i:j + 1]:
            ranks[m] = shared
        i = j + 1
    return ranks


def mean_rank(table: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Average per-dataset rank of each method; `table` maps method -> per-dataset Macro-F1."""
    lengths = {len(v) for v in table.values()}
    if len(lengths) != 1:
        raise RaggedTable(f"methods scored on differing numbers of datasets: {sorted(lengths)}")
    n = lengths.pop()
    if n == 0:
        raise RaggedTable("no datasets")
    totals = dict.fromkeys(table, 0.0)
    for d in range(n):
        for method, rank in dataset_ranks({m: v[d] for m, v in table.items()}).items():
            totals[method] += rank
    return {m: t / n for m, t in totals.items()}


class TTest(NamedTuple):
    t_statistic: float
    significant: bool


def t_critical(df: int) -> float:
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    return T_CRITICAL_05[min(df, len(T_CRITICAL_05)) - 1]


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTest:
    """Two-sided paired t-test at the 5% level.

    Zero variance of the differences (including a == b) yields t = 0 and no
    significance.
    """
    if len(a) != len(b):
        raise ValueError("paired samples differ in length")
    n = len(a)
    if n < 2:
        raise ValueError("need at least two pairs")
    d = [x - y for x, y in zip(a, b)]
    mean = math.fsum(d) / n
    var = math.fsum((x - mean) ** 2 for x in d) / (n - 1)
    sd = math.sqrt(var)
    if sd == 0.0 or sd < 1e-15 * max(1.0, abs(mean)):
        return TTest(0.0, False)
    t = mean / (sd / math.sqrt(n))
    return TTest(t, abs(t) > t_critical(n - 1))


# ---------------------------------------------------------------------------
# emoticons

class EmoticonQuality(NamedTuple):
    accuracy: float | None
    coverage: float


def emoticon_quality(dataset: Dataset, emoticon_map: EmoticonMap | None = None) -> EmoticonQuality:
    """Share of records carrying an emoticon label, and how often it matches gold."""
    if not dataset.fully_labeled:
        raise ValueError("emoticon quality needs gold labels on every record")
    if len(dataset) == 0:
        return EmoticonQuality(None, 0.0)
    if emoticon_map is not None:
        dataset = annotate_emoticons(dataset, emoticon_map)
    covered = [r for r in dataset.records if r.emoticon_label is not None]
    coverage = len(covered) / len(dataset)
    if not covered:
        return EmoticonQuality(None, coverage)
    correct = sum(r.emoticon_label == r.gold for r in covered)
    return EmoticonQuality(correct / len(covered), coverage)


# ---------------------------------------------------------------------------
# benchmark

@dataclass(frozen=True)
class BenchmarkConfig:
    bootstrap: BootstrapConfig = BootstrapConfig()
    folds: int = 5
    seed: int = 0
    param_grid: tuple[HyperParams, ...] = (HyperParams(),)
    inner_k: int = 3
    weight_grid: tuple[float, ...] | None = DEFAULT_WEIGHT_GRID
    macro_variant: str = "per_class"
    threads: int = 1


@dataclass
class MethodScore:
    method: str
    per_fold_macro_f1: list[float] = field(default_factory=list)
    per_fold_micro_f1: list[float] = field(default_factory=list)
    per_fold_confusion: list[ConfusionMatrix] = field(default_factory=list)

    @property
    def mean_macro_f1(self) -> float:
        return math.fsum(self.per_fold_macro_f1) / len(self.per_fold_macro_f1)

    @property
    def mean_micro_f1(self) -> float:
        return math.fsum(self.per_fold_micro_f1) / len(self.per_fold_micro_f1)


@dataclass(frozen=True)
class FoldDiagnostics:
    """Size and pseudo-label accuracy of 10SENT's training set, before and after bootstrapping."""

    fold: int
    seed_size: int
    seed_accuracy: float | None
    final_size: int
    final_accuracy: float | None
    best_individual: str
    weights: tuple[float, ...] | None


@dataclass
class EvaluationReport:
    dataset: str
    scores: list[MethodScore]
    ranks: dict[str, float]
    significance: dict[tuple[str, str], str]
    diagnostics: list[FoldDiagnostics]
    emoticons: EmoticonQuality
    config: BenchmarkConfig

    def score(self, method: str) -> MethodScore:
        for s in self.scores:
            if s.method == method:
                return s
        raise KeyError(method)

    @property
    def methods(self) -> list[str]:
        return [s.method for s in self.scores]


def _pseudo_accuracy(examples, gold: Mapping[str, PolarityLabel]) -> float | None:
    if not examples:
        return None
    return sum(ex.label == gold[ex.sentence_id] for ex in examples) / len(examples)


def run_benchmark(dataset: Dataset, bank: MethodBank, config: BenchmarkConfig = BenchmarkConfig(),
                  emoticon_map: EmoticonMap | None = None) -> EvaluationReport:
    """Cross-validate base methods, voting baselines, 10SENT and the upperbounds.

    Gold labels reach 10SENT's path only through scoring; the weighted-voting,
    best-individual and fully-supervised baselines read training-fold gold.
    """
    from .ensemble import bootstrap

    if not dataset.fully_labeled:
        raise ValueError(f"dataset {dataset.name!r} needs gold labels on every record")
    if config.macro_variant not in MACRO_VARIANTS:
        raise ValueError(f"unknown macro variant {config.macro_variant!r}")
    threads = config.threads
    boot_cfg = config.bootstrap
    if emoticon_map is not None:
        dataset = annotate_emoticons(dataset, emoticon_map)
    keys = list(emoticon_map.keys()) if emoticon_map is not None else None
    matrix = run_base_methods(bank, dataset, threads, keys)
    tokens = {r.id: tokenize(r.text, keys) for r in dataset.records}
    gold = {r.id: r.gold for r in dataset.records}
    folds = split_folds(dataset, config.folds, config.seed)

    method_names = list(bank.names)
    rows = method_names + [MAJORITY, TENSENT]
    if config.weight_grid is not None:
        rows.append(WEIGHTED)
    rows += [BEST_INDIVIDUAL, SUPERVISED]
    scores = {name: MethodScore(name) for name in rows}
    diagnostics = []

    def record(name, fold, truth, predicted):
        cm = confusion_matrix(truth, predicted)
        s = scores[name]
        s.per_fold_macro_f1.append(macro_f1(cm, config.macro_variant))
        s.per_fold_micro_f1.append(micro_f1(cm))
        s.per_fold_confusion.append(cm)

    for fold in range(config.folds):
        train, test = folds.split(dataset, fold)
        train_ids, test_ids = train.ids, test.ids
        train_gold = [gold[i] for i in train_ids]
        test_gold = [gold[i] for i in test_ids]
        train_codes = matrix.codes(train_ids)
        test_codes = matrix.codes(test_ids)

        for j, name in enumerate(method_names):
            record(name, fold, test_gold, [PolarityLabel(int(v)) for v in test_codes[:, j]])
        record(MAJORITY, fold, test_gold, majority_vote_codes(test_codes))

        try:
            result = bootstrap(train, test, bank, boot_cfg, config.param_grid, emoticon_map,
                               threads, matrix, tokens)
        except TensentError as exc:
            raise BenchmarkError(TENSENT, fold, exc) from exc
        record(TENSENT, fold, test_gold, [result.predictions[i][0] for i in test_ids])

        weights = None
        if config.weight_grid is not None:
            try:
                weights, _ = exhaustive_weight_search(train_codes, train_gold, config.weight_grid, threads)
            except (TensentError, ValueError) as exc:
                raise BenchmarkError(WEIGHTED, fold, exc) from exc
            record(WEIGHTED, fold, test_gold, weighted_vote_codes(test_codes, weights))

        train_f1 = [macro_f1(confusion_matrix(train_gold, [PolarityLabel(int(v)) for v in train_codes[:, j]]),
                             config.macro_variant) for j in range(len(method_names))]
        best = int(np.argmax(train_f1))
        record(BEST_INDIVIDUAL, fold, test_gold, [PolarityLabel(int(v)) for v in test_codes[:, best]])

        try:
            vocab = build_vocabulary([tokens[i] for i in train_ids], boot_cfg.min_df) \
                if boot_cfg.use_bow else None
            X_train = build_feature_matrix([tokens[i] for i in train_ids], train_codes, vocab,
                                           boot_cfg.method_encoding)
            X_test = build_feature_matrix([tokens[i] for i in test_ids], test_codes, vocab,
                                          boot_cfg.method_encoding)
            params = grid_search(X_train, train_gold, config.param_grid, config.inner_k,
                                 config.seed, threads)
            model = train_or_constant(X_train, train_gold, params, boot_cfg.seed, threads)
            supervised, _ = predict_batch(model, X_test)
        except TensentError as exc:
            raise BenchmarkError(SUPERVISED, fold, exc) from exc
        record(SUPERVISED, fold, test_gold, supervised)

        diagnostics.append(FoldDiagnostics(
            fold, result.seed_size, _pseudo_accuracy(result.seeds, gold),
            result.final_size, _pseudo_accuracy(result.training, gold),
            method_names[best], None if weights is None else weights.weights))

    ordered = [scores[name] for name in rows]
    ranks = dataset_ranks({s.method: s.mean_macro_f1 for s in ordered})
    tensent = scores[TENSENT].per_fold_macro_f1
    significance = {}
    for s in ordered:
        if s.method == TENSENT:
            continue
        test = paired_t_test(tensent, s.per_fold_macro_f1)
        if not test.significant:
            outcome = "tie"
        else:
            outcome = "a_wins" if test.t_statistic > 0 else "b_wins"
        significance[(TENSENT, s.method)] = outcome
    return EvaluationReport(dataset.name, ordered, ranks, significance, diagnostics,
                            emoticon_quality(dataset), config)


# ---------------------------------------------------------------------------
# report emission

FOLD_FIELDS = ("dataset", "method", "fold", "macro_f1", "micro_f1", "train_seed_size",
               "train_final_size", "train_seed_accuracy", "train_accuracy")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def fold_records(report: EvaluationReport) -> list[dict]:
    """One record per method x fold; training-set fields are filled for 10SENT only."""
    out = []
    for s in report.scores:
        for fold, (ma, mi) in enumerate(zip(s.per_fold_macro_f1, s.per_fold_micro_f1)):
            rec = dict.fromkeys(FOLD_FIELDS)
            rec.update(dataset=report.dataset, method=s.method, fold=fold, macro_f1=ma, micro_f1=mi)
            if s.method == TENSENT:
                d = report.diagnostics[fold]
                rec.update(train_seed_size=d.seed_size, train_final_size=d.final_size,
                           train_seed_accuracy=d.seed_accuracy, train_accuracy=d.final_accuracy)
            out.append(rec)
    return out


def summary_dict(report: EvaluationReport) -> dict:
    return {
        "dataset": report.dataset,
        "methods": [
            {
                "method": s.method,
                "mean_macro_f1": s.mean_macro_f1,
                "mean_micro_f1": s.mean_micro_f1,
                "rank": report.ranks[s.method],
                "versus_10sent": report.significance.get((TENSENT, s.method)),
                "per_fold_macro_f1": s.per_fold_macro_f1,
                "per_fold_confusion": [cm.tolist() for cm in s.per_fold_confusion],
            }
            for s in report.scores
        ],
        "training_sets": [
            {
                "fold": d.fold,
                "seed_size": d.seed_size,
                "seed_accuracy": d.seed_accuracy,
                "final_size": d.final_size,
                "final_accuracy": d.final_accuracy,
                "best_individual": d.best_individual,
                "weights": list(d.weights) if d.weights is not None else None,
            }
            for d in report.diagnostics
        ],
        "emoticons": {"accuracy": report.emoticons.accuracy, "coverage": report.emoticons.coverage},
    }


def write_report(report: EvaluationReport, out_dir: str | os.PathLike) -> tuple[str, str]:
    """Write ``<dataset>.folds.tsv`` and ``<dataset>.summary.json`` into `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    folds_path = os.path.join(out_dir, f"{report.dataset}.folds.tsv")
    with open(folds_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(FOLD_FIELDS) + "\n")
        for rec in fold_records(report):
            fh.write("\t".join(_fmt(rec[k]) for k in FOLD_FIELDS) + "\n")
    summary_path = os.path.join(out_dir, f"{report.dataset}.summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary_dict(report), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return folds_path, summary_path


_MARKS = {"tie": "*", "a_wins": "v", "b_wins": "^", None: ""}


def format_report(report: EvaluationReport) -> str:
    """Plain-text table; marks: * no significant difference from 10SENT,
    v 10SENT significantly better, ^ significantly better than 10SENT."""
    width = max(len(m) for m in report.methods)
    lines = [f"dataset: {report.dataset}",
             f"{'method':<{width}}  macro-F1  micro-F1  rank"]
    for s in report.scores:
        mark = _MARKS[report.significance.get((TENSENT, s.method))]
        lines.append(f"{s.method:<{width}}  {100 * s.mean_macro_f1:7.2f}{mark:1}  "
                     f"{100 * s.mean_micro_f1:7.2f}  {report.ranks[s.method]:5.1f}")
    lines.append("training set (seed -> bootstrapped): size / pseudo-label accuracy")
    for d in report.diagnostics:
        sa = "-" if d.seed_accuracy is None else f"{d.seed_accuracy:.3f}"
        fa = "-" if d.final_accuracy is None else f"{d.final_accuracy:.3f}"
        lines.append(f"  fold {d.fold}: {d.seed_size} / {sa} -> {d.final_size} / {fa}")
    acc = report.emoticons.accuracy
    lines.append(f"emoticons: accuracy {'-' if acc is None else f'{acc:.3f}'}, "
                 f"coverage {report.emoticons.coverage:.3f}")
    return "\n".join(lines)


def write_mean_ranks(reports: Sequence[EvaluationReport], out_dir: str | os.PathLike) -> dict[str, float]:
    table: dict[str, list[float]] = {}
    for rep in reports:
        for s in rep.scores:
            table.setdefault(s.method, []).append(s.mean_macro_f1)
    ranks = mean_rank(table)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "mean_ranks.tsv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("method\tmean_rank\t" + "\t".join(r.dataset for r in reports) + "\n")
        for method, values in table.items():
            fh.write(f"{method}\t{ranks[method]!r}\t" + "\t".join(repr(v) for v in values) + "\n")
    return ranks

