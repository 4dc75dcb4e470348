"""Combiners over base-method outputs: voting, agreement seeding and self-training."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numba
import numpy as np

from .core import Dataset, PolarityLabel, TensentError, tokenize
from .learner import (FeatureVector, HyperParams, build_feature_matrix, build_vocabulary,
                      grid_search, predict_batch, train_or_constant)
from .lexicons import EmoticonMap, MethodBank, PredictionMatrix, annotate_emoticons, run_base_methods

DEFAULT_WEIGHT_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
_TIE_TOLERANCE = 1e-9


class EmptyVotes(TensentError, ValueError):
    pass


class LengthMismatch(TensentError, ValueError):
    pass


class EmptySeedSet(TensentError):
    """No sentence reached the agreement threshold; A is too high for this data."""


class Provenance(enum.Enum):
    AGREEMENT_SEED = "agreement_seed"
    BOOTSTRAP_ADDED = "bootstrap_added"
    EMOTICON_TRANSFER = "emoticon_transfer"
    GOLD_SUPERVISED = "gold_supervised"


@dataclass(frozen=True)
class AgreementResult:
    count: int
    label: PolarityLabel
    unique: bool


@dataclass(frozen=True)
class TrainingExample:
    sentence_id: str
    features: FeatureVector | None
    label: PolarityLabel
    provenance: Provenance


@dataclass(frozen=True)
class BootstrapConfig:
    agreement_threshold: int = 7
    confidence_threshold: float = 0.7
    use_bow: bool = True
    use_emoticons: bool = True
    seed: int = 0
    min_df: int = 2
    method_encoding: str = "ordinal"

    def __post_init__(self):
        if self.agreement_threshold < 1:
            raise ValueError("agreement threshold must be >= 1")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence threshold must lie in [0, 1]")


@dataclass(frozen=True)
class WeightVector:
    weights: tuple[float, ...]
    grid: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
            off = [w for w in self.weights if w not in self.grid]
            if off:
                raise ValueError(f"weights {off} are not on the grid {self.grid}")

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)


# ---------------------------------------------------------------------------
# voting

def _counts(votes: Sequence[PolarityLabel]) -> list[int]:
    if len(votes) == 0:
        raise EmptyVotes("no votes")
    counts = [0, 0, 0]
    for v in votes:
        counts[PolarityLabel(v).index] += 1
    return counts


def agreement(votes: Sequence[PolarityLabel]) -> AgreementResult:
    """Size of the largest block of agreeing votes, its label, and whether it is unique."""
    counts = _counts(votes)
    top = max(counts)
    winners = [i for i, c in enumerate(counts) if c == top]
    label = PolarityLabel.from_index(winners[0]) if len(winners) == 1 else PolarityLabel.NEUTRAL
    return AgreementResult(top, label, len(winners) == 1)


def majority_vote(votes: Sequence[PolarityLabel]) -> PolarityLabel:
    """Plurality label; any tie for the top count gives Neutral."""
    result = agreement(votes)
    return result.label if result.unique else PolarityLabel.NEUTRAL


def weighted_vote(votes: Sequence[PolarityLabel], weights: WeightVector | Sequence[float]) -> PolarityLabel:
    """Per-class sum of the weights of methods voting for it; arg max, ties to Neutral."""
    weights = tuple(weights)
    if len(votes) != len(weights):
        raise LengthMismatch(f"{len(votes)} votes but {len(weights)} weights")
    if len(votes) == 0:
        raise EmptyVotes("no votes")
    sums = [[], [], []]
    for v, w in zip(votes, weights):
        sums[PolarityLabel(v).index].append(w)
    scores = [math.fsum(s) for s in sums]
    top = max(scores)
    tol = _TIE_TOLERANCE * max(1.0, abs(top))
    winners = [i for i, s in enumerate(scores) if top - s <= tol]
    if len(winners) == 1:
        return PolarityLabel.from_index(winners[0])
    return PolarityLabel.NEUTRAL


# ---------------------------------------------------------------------------
# seeding and transfer

def build_seed_training(matrix: PredictionMatrix, A: int) -> tuple[list[TrainingExample], set[str]]:
    """Split sentences into agreement seeds (unique top count >= A) and the rest.

    Seeds are stubs without features; they carry the agreed label.
    """
    if not 1 <= A <= len(matrix.method_names):
        raise ValueError(f"A must lie in [1, {len(matrix.method_names)}]")
    seeds, remaining = [], set()
    for rid, row in matrix.rows.items():
        result = agreement(row)
        if result.unique and result.count >= A:
            seeds.append(TrainingExample(rid, None, result.label, Provenance.AGREEMENT_SEED))
        else:
            remaining.add(rid)
    return seeds, remaining


def augment_with_emoticons(seeds: Sequence[TrainingExample], dataset: Dataset,
                           emoticon_map: EmoticonMap | None = None) -> list[TrainingExample]:
    """Add every sentence with an emoticon label; it overrides an agreement label.

    Records are taken as annotated unless `emoticon_map` is given, in which
    case labels are recomputed from the text.
    """
    if emoticon_map is not None:
        dataset = annotate_emoticons(dataset, emoticon_map)
    emo = {r.id: r.emoticon_label for r in dataset.records if r.emoticon_label is not None}
    if not emo:
        return list(seeds)
    out = []
    for ex in seeds:
        if ex.sentence_id in emo:
            out.append(TrainingExample(ex.sentence_id, ex.features, emo.pop(ex.sentence_id),
                                       Provenance.EMOTICON_TRANSFER))
        else:
            out.append(ex)
    for rec in dataset.records:
        if rec.id in emo:
            out.append(TrainingExample(rec.id, None, emo[rec.id], Provenance.EMOTICON_TRANSFER))
    return out


# ---------------------------------------------------------------------------
# self-training

@dataclass
class BootstrapResult:
    predictions: dict[str, tuple[PolarityLabel, float]]
    seeds: list[TrainingExample]
    training: list[TrainingExample]
    candidates: dict[str, tuple[PolarityLabel, float]] = field(default_factory=dict)

    @property
    def seed_size(self) -> int:
        return len(self.seeds)

    @property
    def final_size(self) -> int:
        return len(self.training)


@dataclass
class _FirstStage:
    """State after seeding, the first model, and its predictions on the remaining pool."""

    config: BootstrapConfig
    params: HyperParams
    threads: int
    X: np.ndarray
    row: dict[str, int]
    method_width: int
    seeds: list[TrainingExample]
    candidates: dict[str, tuple[PolarityLabel, float]]
    candidate_order: list[str]
    test_ids: list[str]


def _features(ctx: _FirstStage, rid: str) -> FeatureVector:
    x = ctx.X[ctx.row[rid]]
    return FeatureVector(x[:ctx.method_width], x[ctx.method_width:])


def _select_params(X, labels, grid, seed, threads, inner_k=3):
    # tuned on pseudo-labels only; too few seeds for inner folds falls back to the first point
    if len(grid) == 1 or len(set(labels)) < 2 or len(labels) < 2 * inner_k:
        return grid[0]
    return grid_search(X, labels, grid, inner_k, seed, threads)


def _first_stage(train: Dataset, test: Dataset, bank: MethodBank, config: BootstrapConfig,
                 params: HyperParams | Sequence[HyperParams], emoticon_map: EmoticonMap | None, threads: int,
                 matrix: PredictionMatrix | None, tokens: dict[str, list[str]] | None) -> _FirstStage:
    if len(train) == 0:
        raise ValueError("bootstrap needs a non-empty training part")
    train_ids = train.ids
    in_train = set(train_ids)
    all_ids = train_ids + [i for i in test.ids if i not in in_train]
    if matrix is None:
        pool = Dataset(train.name, train.records + tuple(r for r in test.records if r.id not in in_train))
        matrix = run_base_methods(bank, pool, threads)
    seeds, remaining = build_seed_training(matrix.restrict(train_ids), config.agreement_threshold)
    if config.use_emoticons:
        if emoticon_map is not None and all(r.emoticon_label is None for r in train.records):
            train = annotate_emoticons(train, emoticon_map)
        seeds = augment_with_emoticons(seeds, train)
        remaining -= {ex.sentence_id for ex in seeds}
    if not seeds:
        raise EmptySeedSet(f"no sentence reaches agreement {config.agreement_threshold}")

    keys = list(emoticon_map.keys()) if emoticon_map is not None else None
    if tokens is None:
        texts = {r.id: r.text for r in train.records}
        texts.update({r.id: r.text for r in test.records})
        tokens = {rid: tokenize(texts[rid], keys) for rid in all_ids}
    vocab = build_vocabulary([tokens[i] for i in train_ids], config.min_df) if config.use_bow else None
    codes = matrix.codes(all_ids)
    X = build_feature_matrix([tokens[i] for i in all_ids], codes, vocab, config.method_encoding)
    row = {rid: i for i, rid in enumerate(all_ids)}
    method_width = X.shape[1] - (len(vocab) if vocab is not None else 0)

    seed_rows = [row[ex.sentence_id] for ex in seeds]
    seed_labels = [ex.label for ex in seeds]
    if not isinstance(params, HyperParams):
        params = _select_params(X[seed_rows], seed_labels, tuple(params), config.seed, threads)
    model = train_or_constant(X[seed_rows], seed_labels, params, config.seed, threads)
    candidate_order = [i for i in train_ids if i in remaining]
    candidates = {}
    if candidate_order:
        labels, confidence = predict_batch(model, X[[row[i] for i in candidate_order]])
        candidates = {rid: (lab, float(c)) for rid, lab, c in zip(candidate_order, labels, confidence)}
    ctx = _FirstStage(config, params, threads, X, row, method_width, [], candidates,
                      candidate_order, test.ids)
    ctx.seeds = [TrainingExample(ex.sentence_id, _features(ctx, ex.sentence_id), ex.label,
                                 ex.provenance) for ex in seeds]
    return ctx


def _second_stage(ctx: _FirstStage, confidence_threshold: float) -> BootstrapResult:
    training = list(ctx.seeds)
    for rid in ctx.candidate_order:
        label, conf = ctx.candidates[rid]
        if conf >= confidence_threshold:
            training.append(TrainingExample(rid, _features(ctx, rid), label, Provenance.BOOTSTRAP_ADDED))
    rows = [ctx.row[ex.sentence_id] for ex in training]
    model = train_or_constant(ctx.X[rows], [ex.label for ex in training], ctx.params,
                              ctx.config.seed, ctx.threads)
    predictions = {}
    if ctx.test_ids:
        labels, confidence = predict_batch(model, ctx.X[[ctx.row[i] for i in ctx.test_ids]])
        predictions = {rid: (lab, float(c)) for rid, lab, c in zip(ctx.test_ids, labels, confidence)}
    return BootstrapResult(predictions, ctx.seeds, training, ctx.candidates)


def bootstrap(train: Dataset, test: Dataset, bank: MethodBank, config: BootstrapConfig = BootstrapConfig(),
              params: HyperParams | Sequence[HyperParams] = HyperParams(),
              emoticon_map: EmoticonMap | None = None, threads: int = 1, matrix: PredictionMatrix | None = None,
              tokens: dict[str, list[str]] | None = None) -> BootstrapResult:
    """Agreement-seeded self-training over `train`, then prediction of `test`.

    1. sentences of `train` whose unique top agreement reaches A become seeds
       (plus emoticon-labeled sentences when enabled);
    2. a forest is trained on the seeds;
    3. it labels the remaining train sentences;
    4. those predicted with confidence >= C join the training set;
    5. a forest is retrained on the enlarged set;
    6. it labels every test sentence.

    Gold labels are never read. Given a sequence of HyperParams, the forest
    settings are picked by inner cross-validation on the seed pseudo-labels.
    `matrix` and `tokens` may be passed to reuse
    base-method outputs and tokenization; they must cover train and test ids.
    """
    ctx = _first_stage(train, test, bank, config, params, emoticon_map, threads, matrix, tokens)
    return _second_stage(ctx, config.confidence_threshold)


def bootstrap_confidence_sweep(train: Dataset, test: Dataset, bank: MethodBank, config: BootstrapConfig,
                               thresholds: Sequence[float],
                               params: HyperParams | Sequence[HyperParams] = HyperParams(),
                               emoticon_map: EmoticonMap | None = None, threads: int = 1,
                               matrix: PredictionMatrix | None = None,
                               tokens: dict[str, list[str]] | None = None) -> dict[float, BootstrapResult]:
    """bootstrap() for several confidence thresholds, sharing steps 1-3."""
    ctx = _first_stage(train, test, bank, config, params, emoticon_map, threads, matrix, tokens)
    return {c: _second_stage(ctx, c) for c in thresholds}


# ---------------------------------------------------------------------------
# exhaustive weighted voting

def _integer_grid(grid: Sequence[float]) -> tuple[np.ndarray, int]:
    """Grid values scaled to exact integers by a common denominator."""
    fracs = [Fraction(g).limit_denominator(10**6) for g in grid]
    for g, fr in zip(grid, fracs):
        if abs(float(fr) - g) > 1e-12 * max(1.0, abs(g)):
            raise ValueError(f"grid value {g} has no small rational form")
    denom = 1
    for fr in fracs:
        denom = denom * fr.denominator // math.gcd(denom, fr.denominator)
    scaled = np.array([int(fr * denom) for fr in fracs], dtype=np.int64)
    return scaled, denom


@numba.njit(cache=True, nogil=True)
def _macro_f1_counts(cm):
    total = 0.0
    for c in range(3):
        tp = cm[c, c]
        pred = cm[0, c] + cm[1, c] + cm[2, c]
        actual = cm[c, 0] + cm[c, 1] + cm[c, 2]
        p = tp / pred if pred > 0 else 0.0
        r = tp / actual if actual > 0 else 0.0
        total += 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return total / 3.0


@numba.njit(cache=True, nogil=True)
def _search_range(votes, gold, mult, grid, zero_digit, first, last):
    """Best vector index in [first, last) over the odometer order of the grid."""
    n_rows, m = votes.shape
    g = grid.shape[0]
    digits = np.zeros(m, dtype=np.int64)
    rest = first
    for j in range(m - 1, -1, -1):
        digits[j] = rest % g
        rest //= g
    scores = np.zeros((n_rows, 3), dtype=np.int64)
    for r in range(n_rows):
        for j in range(m):
            scores[r, votes[r, j]] += grid[digits[j]]
    cm = np.zeros((3, 3), dtype=np.int64)
    best_f1 = -1.0
    best_index = -1
    for index in range(first, last):
        all_zero = zero_digit >= 0
        if all_zero:
            for j in range(m):
                if digits[j] != zero_digit:
                    all_zero = False
                    break
        if not all_zero:
            cm[:, :] = 0
            for r in range(n_rows):
                s0 = scores[r, 0]
                s1 = scores[r, 1]
                s2 = scores[r, 2]
                if s0 > s1 and s0 > s2:
                    pred = 0
                elif s2 > s0 and s2 > s1:
                    pred = 2
                else:
                    pred = 1  # Neutral wins outright or by any tie
                cm[gold[r], pred] += mult[r]
            f1 = _macro_f1_counts(cm)
            if f1 > best_f1:
                best_f1 = f1
                best_index = index
        # advance the odometer, updating scores for every changed digit
        j = m - 1
        while j >= 0:
            old = digits[j]
            new = old + 1
            carry = new == g
            if carry:
                new = 0
            delta = grid[new] - grid[old]
            for r in range(n_rows):
                scores[r, votes[r, j]] += delta
            digits[j] = new
            if not carry:
                break
            j -= 1
    return best_f1, best_index


def _chunk_bounds(total: int, n_chunks: int) -> list[tuple[int, int]]:
    step = -(-total // n_chunks)
    return [(a, min(a + step, total)) for a in range(0, total, step)]


def exhaustive_weight_search(codes: np.ndarray, gold: Sequence[PolarityLabel],
                             grid: Sequence[float] = DEFAULT_WEIGHT_GRID,
                             threads: int = 1) -> tuple[WeightVector, float]:
    """Weight vector on `grid` maximizing Macro-F1 of weighted voting against `gold`.

    Every grid vector but the all-zero one is evaluated; among maximizers the
    lexicographically smallest vector wins. `codes` holds one row of method
    labels (-1/0/+1) per sentence.
    """
    from .evaluation import confusion_matrix, macro_f1

    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[0] != len(gold):
        raise LengthMismatch("codes and gold labels disagree in length")
    if codes.shape[0] == 0:
        raise EmptyVotes("no rows to search over")
    grid = tuple(sorted(set(float(g) for g in grid)))
    if not grid or grid[0] < 0:
        raise ValueError("weight grid must be non-empty and non-negative")
    scaled, _ = _integer_grid(grid)
    m = codes.shape[1]
    g = len(grid)
    gold_idx = np.array([PolarityLabel(int(v)).index for v in gold], dtype=np.int64)
    # rows with the same (votes, gold) pattern only need to be scored once
    keyed = np.concatenate([codes + 1, gold_idx[:, None]], axis=1)
    uniq, mult = np.unique(keyed, axis=0, return_counts=True)
    votes = np.ascontiguousarray(uniq[:, :m], dtype=np.int64)
    gold_u = np.ascontiguousarray(uniq[:, m], dtype=np.int64)
    mult = mult.astype(np.int64)
    zero_digit = grid.index(0.0) if 0.0 in grid else -1
    total = g ** m
    n_chunks = max(1, min(total, 64))
    bounds = _chunk_bounds(total, n_chunks)

    def run(b):
        return _search_range(votes, gold_u, mult, scaled, zero_digit, b[0], b[1])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, bounds))
    else:
        results = [run(b) for b in bounds]
    best_f1, best_index = -1.0, -1
    for f1, index in results:  # chunks ascend in index, so strict > keeps the smallest
        if index >= 0 and f1 > best_f1:
            best_f1, best_index = f1, index
    if best_index < 0:
        raise ValueError("grid admits no non-zero weight vector")
    digits = []
    rest = best_index
    for _ in range(m):
        digits.append(rest % g)
        rest //= g
    weights = WeightVector(tuple(grid[d] for d in reversed(digits)), grid)
    labels = [PolarityLabel(int(v)) for v in gold]
    predicted = [weighted_vote([PolarityLabel(int(v)) for v in row], weights) for row in codes]
    return weights, macro_f1(confusion_matrix(labels, predicted))


def majority_vote_codes(codes: np.ndarray) -> list[PolarityLabel]:
    return [majority_vote([PolarityLabel(int(v)) for v in row]) for row in np.asarray(codes)]


def weighted_vote_codes(codes: np.ndarray, weights: WeightVector | Sequence[float]) -> list[PolarityLabel]:
    return [weighted_vote([PolarityLabel(int(v)) for v in row], weights) for row in np.asarray(codes)]

