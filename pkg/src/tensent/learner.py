"""Feature construction and a random forest with per-prediction confidence."""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np

from .core import PolarityLabel, TensentError, assign_folds

NEUTRAL_INDEX = PolarityLabel.NEUTRAL.index
FOREST_FORMAT = "tensent-forest"
FOREST_VERSION = 1
_MASK64 = (1 << 64) - 1
MAX_DISTINCT = 16


class DegenerateTraining(TensentError):
    """Training data holds a single class; `label` is that class."""

    def __init__(self, label: PolarityLabel | None, detail: str = ""):
        self.label = label
        super().__init__(detail or f"training data contains only class {label}")


class ShapeMismatch(TensentError):
    pass


# ---------------------------------------------------------------------------
# features

@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    doc_freq: Mapping[str, int]
    n_docs: int
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self) -> int:
        return len(self.terms)

    def idf(self) -> np.ndarray:
        return np.array([math.log(self.n_docs / self.doc_freq[t]) for t in self.terms])


def build_vocabulary(docs: Sequence[Sequence[str]], min_df: int = 2) -> Vocabulary:
    if not docs:
        raise ValueError("vocabulary needs at least one document")
    df = Counter(tok for doc in docs for tok in set(doc))
    terms = tuple(sorted(t for t, c in df.items() if c >= min_df))
    return Vocabulary(terms, {t: df[t] for t in terms}, len(docs))


METHOD_ENCODINGS = ("ordinal", "onehot")


def encode_methods(outputs: Sequence[int], encoding: str = "ordinal") -> np.ndarray:
    """Method labels (-1/0/+1 values) as features.

    "ordinal" keeps one feature per method; "onehot" uses three indicator
    features per method in Negative, Neutral, Positive order.
    """
    codes = np.asarray([int(o) for o in outputs], dtype=np.float64)
    if encoding == "ordinal":
        return codes
    if encoding == "onehot":
        out = np.zeros((len(codes), 3))
        out[np.arange(len(codes)), codes.astype(int) + 1] = 1.0
        return out.ravel()
    raise ValueError(f"unknown method encoding {encoding!r}")


@dataclass(frozen=True)
class FeatureVector:
    method_block: np.ndarray
    bow_block: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.method_block, self.bow_block])

    def __len__(self) -> int:
        return len(self.method_block) + len(self.bow_block)


def bow_weights(tokens: Sequence[str], vocab: Vocabulary, idf: np.ndarray | None = None) -> np.ndarray:
    """Raw term count times ln(n_docs / doc_freq); out-of-vocabulary tokens are dropped."""
    if idf is None:
        idf = vocab.idf()
    out = np.zeros(len(vocab))
    for tok, count in Counter(tokens).items():
        j = vocab.index.get(tok)
        if j is not None:
            out[j] = count * idf[j]
    return out


def build_features(tokens: Sequence[str], method_outputs: Sequence[PolarityLabel],
                   vocab: Vocabulary | None = None, encoding: str = "ordinal") -> FeatureVector:
    method_block = encode_methods(method_outputs, encoding)
    bow = bow_weights(tokens, vocab) if vocab is not None else np.zeros(0)
    return FeatureVector(method_block, bow)


def build_feature_matrix(token_lists: Sequence[Sequence[str]], method_codes: np.ndarray,
                         vocab: Vocabulary | None = None, encoding: str = "ordinal") -> np.ndarray:
    """Row-wise equivalent of build_features, as a dense column-major matrix."""
    method_codes = np.asarray(method_codes)
    n = len(token_lists)
    width = method_codes.shape[1] * (3 if encoding == "onehot" else 1)
    n_bow = len(vocab) if vocab is not None else 0
    X = np.zeros((n, width + n_bow), order="F")
    for i in range(n):
        X[i, :width] = encode_methods(method_codes[i], encoding)
    if vocab is not None:
        idf = vocab.idf()
        for i, tokens in enumerate(token_lists):
            for tok, count in Counter(tokens).items():
                j = vocab.index.get(tok)
                if j is not None:
                    X[i, width + j] = count * idf[j]
    return X


# ---------------------------------------------------------------------------
# trees

@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # None: ceil(sqrt(n_features))

    def mtry(self, n_features: int) -> int:
        if self.features_per_split is not None:
            return max(1, min(self.features_per_split, n_features))
        return max(1, math.ceil(math.sqrt(n_features)))


@numba.njit(cache=True, nogil=True)
def _gini_sum(c0, c1, c2, total):
    # total * gini, so children can be compared without dividing by the parent size
    if total == 0:
        return 0.0
    return total - (c0 * c0 + c1 * c1 + c2 * c2) / total


@numba.njit(cache=True, nogil=True)
def _build_tree(X, indptr, indices, data, y, sample, max_depth, min_leaf, mtry, rng_seed):
    """Grow one tree on the bootstrap `sample` (row indices into X).

    X is dense for partitioning; (indptr, indices, data) is the same matrix in
    CSR form. Each node buckets its nonzero entries by feature, so a feature
    that is all zero inside the node is recognized as constant in O(1) and a
    split scan only sorts the nonzero values, with the zeros entering the scan
    as one block.
    """
    np.random.seed(rng_seed)
    n = sample.shape[0]
    n_features = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    counts = np.zeros((cap, 3), dtype=np.int64)

    idx = sample.copy()
    nnz_total = 0
    for i in range(n):
        nnz_total += indptr[sample[i] + 1] - indptr[sample[i]]
    bucket_val = np.empty(max(nnz_total, 1), dtype=np.float64)
    bucket_cls = np.empty(max(nnz_total, 1), dtype=np.int64)
    f_count = np.zeros(n_features, dtype=np.int64)
    f_start = np.zeros(n_features, dtype=np.int64)
    f_fill = np.zeros(n_features, dtype=np.int64)
    touched = np.empty(n_features, dtype=np.int64)
    dv = np.empty(MAX_DISTINCT, dtype=np.float64)
    dc = np.empty((MAX_DISTINCT, 3), dtype=np.int64)
    gv = np.empty(n + 1, dtype=np.float64)
    gc = np.empty((n + 1, 3), dtype=np.int64)

    # stack entries: node id, segment start, segment end, depth
    stack = np.zeros((cap, 4), dtype=np.int64)
    stack[0, 2] = n
    top = 1
    n_nodes = 1
    order = np.arange(n_features)
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        size = end - start
        for i in range(start, end):
            counts[node, y[idx[i]]] += 1
        c0 = counts[node, 0]
        c1 = counts[node, 1]
        c2 = counts[node, 2]
        pure = (c0 == size) or (c1 == size) or (c2 == size)
        if pure or (max_depth >= 0 and depth >= max_depth) or size < 2 * min_leaf:
            continue

        n_touched = 0
        for i in range(start, end):
            r = idx[i]
            for p in range(indptr[r], indptr[r + 1]):
                f = indices[p]
                if f_count[f] == 0:
                    touched[n_touched] = f
                    n_touched += 1
                f_count[f] += 1
        cum = 0
        for t in range(n_touched):
            f = touched[t]
            f_start[f] = cum
            f_fill[f] = cum
            cum += f_count[f]
        for i in range(start, end):
            r = idx[i]
            for p in range(indptr[r], indptr[r + 1]):
                f = indices[p]
                bucket_val[f_fill[f]] = data[p]
                bucket_cls[f_fill[f]] = y[r]
                f_fill[f] += 1

        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        examined = 0
        # incremental Fisher-Yates: features are visited in a uniformly random order
        for pos in range(n_features):
            if examined >= mtry:
                break
            swap = pos + np.random.randint(0, n_features - pos)
            tmp = order[pos]
            order[pos] = order[swap]
            order[swap] = tmp
            f = order[pos]
            nz = f_count[f]
            if nz == 0:
                continue
            n_zero = size - nz
            base = f_start[f]
            vals = bucket_val[base:base + nz]
            cls_of = bucket_cls[base:base + nz]
            if n_zero == 0:
                constant = True
                for i in range(1, nz):
                    if vals[i] != vals[0]:
                        constant = False
                        break
                if constant:
                    continue
            examined += 1
            z0 = c0
            z1 = c1
            z2 = c2
            for i in range(nz):
                cls = cls_of[i]
                if cls == 0:
                    z0 -= 1
                elif cls == 1:
                    z1 -= 1
                else:
                    z2 -= 1
            # class counts per distinct nonzero value; columns here rarely hold
            # more than a handful of distinct values, else fall back to sorting
            n_distinct = 0
            for i in range(nz):
                v = vals[i]
                slot = -1
                for q in range(n_distinct):
                    if dv[q] == v:
                        slot = q
                        break
                if slot < 0:
                    if n_distinct == MAX_DISTINCT:
                        n_distinct = -1
                        break
                    slot = n_distinct
                    dv[slot] = v
                    dc[slot, 0] = 0
                    dc[slot, 1] = 0
                    dc[slot, 2] = 0
                    n_distinct += 1
                dc[slot, cls_of[i]] += 1
            if n_distinct < 0:
                perm = np.argsort(vals)
                n_distinct = 0
                k = 0
                while k < nz:
                    if n_distinct == gv.shape[0]:
                        break
                    v = vals[perm[k]]
                    gv[n_distinct] = v
                    gc[n_distinct, 0] = 0
                    gc[n_distinct, 1] = 0
                    gc[n_distinct, 2] = 0
                    while k < nz and vals[perm[k]] == v:
                        gc[n_distinct, cls_of[perm[k]]] += 1
                        k += 1
                    n_distinct += 1
            else:
                dorder = np.argsort(dv[:n_distinct])
                for q in range(n_distinct):
                    gv[q] = dv[dorder[q]]
                    gc[q, 0] = dc[dorder[q], 0]
                    gc[q, 1] = dc[dorder[q], 1]
                    gc[q, 2] = dc[dorder[q], 2]
            # insert the zero block at its sorted position
            n_groups = n_distinct
            if n_zero > 0:
                ins = 0
                while ins < n_distinct and gv[ins] < 0.0:
                    ins += 1
                for q in range(n_distinct, ins, -1):
                    gv[q] = gv[q - 1]
                    gc[q, 0] = gc[q - 1, 0]
                    gc[q, 1] = gc[q - 1, 1]
                    gc[q, 2] = gc[q - 1, 2]
                gv[ins] = 0.0
                gc[ins, 0] = z0
                gc[ins, 1] = z1
                gc[ins, 2] = z2
                n_groups += 1
            l0 = 0
            l1 = 0
            l2 = 0
            for q in range(n_groups - 1):
                l0 += gc[q, 0]
                l1 += gc[q, 1]
                l2 += gc[q, 2]
                n_left = l0 + l1 + l2
                n_right = size - n_left
                if n_left < min_leaf or n_right < min_leaf:
                    continue
                score = _gini_sum(l0, l1, l2, n_left) + \
                    _gini_sum(c0 - l0, c1 - l1, c2 - l2, n_right)
                if score < best_score:
                    best_score = score
                    best_feature = f
                    lo_v = gv[q]
                    hi_v = gv[q + 1]
                    mid = 0.5 * (lo_v + hi_v)
                    best_threshold = lo_v if mid >= hi_v else mid
        for t in range(n_touched):
            f_count[touched[t]] = 0
        if best_feature < 0:
            continue

        # partition the segment in place: x <= threshold goes left
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_feature] <= best_threshold:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = left_id
        right[node] = right_id
        stack[top, 0] = right_id
        stack[top, 1] = i
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = i
        stack[top, 3] = depth + 1
        top += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


def _csr(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(X)
    indptr = np.zeros(X.shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols.astype(np.int64), X[rows, cols].astype(np.float64)


@numba.njit(cache=True, nogil=True)
def _forest_votes(X, offsets, feature, threshold, left, right, leaf_class):
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    votes = np.zeros((n, 3), dtype=np.int64)
    for i in range(n):
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            votes[i, leaf_class[base + node]] += 1
    return votes


@dataclass(frozen=True)
class DecisionTree:
    """Flat array tree; node 0 is the root, feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # class histogram per node, Negative/Neutral/Positive

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_classes(self) -> np.ndarray:
        return decide(self.counts)[0].astype(np.int64)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    n_features: int
    seed: int
    params: HyperParams = HyperParams()

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([t.n_nodes for t in self.trees])
        packed = (
            offsets,
            np.concatenate([t.feature for t in self.trees]).astype(np.int32),
            np.concatenate([t.threshold for t in self.trees]).astype(np.float64),
            np.concatenate([t.left for t in self.trees]).astype(np.int32),
            np.concatenate([t.right for t in self.trees]).astype(np.int32),
            np.concatenate([t.leaf_classes() for t in self.trees]).astype(np.int64),
        )
        object.__setattr__(self, "_packed", packed)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def max_depth(self) -> int | None:
        return self.params.max_depth

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Per-row tree-vote counts, columns Negative/Neutral/Positive."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return _forest_votes(X, *self._packed)


@dataclass(frozen=True)
class ConstantModel:
    """Stand-in when training data holds one class: that class, confidence 1."""

    label: PolarityLabel
    n_features: int

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.zeros((X.shape[0], 3), dtype=np.int64)
        out[:, self.label.index] = 1
        return out


def tree_seed(seed: int, tree_index: int) -> int:
    return (seed & _MASK64) ^ tree_index


def _label_indices(labels: Iterable) -> np.ndarray:
    return np.array([PolarityLabel(int(lab)).index for lab in labels], dtype=np.int64)


def train_forest(X: np.ndarray, labels: Sequence[PolarityLabel], params: HyperParams = HyperParams(),
                 seed: int = 0, threads: int = 1) -> ForestModel:
    """Bagged Gini trees; tree i draws all its randomness from seed XOR i."""
    X = np.asfortranarray(X, dtype=np.float64)
    y = _label_indices(labels)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ShapeMismatch("feature matrix and labels disagree in length")
    if len(y) < 2:
        raise DegenerateTraining(PolarityLabel.from_index(y[0]) if len(y) else None,
                                 "need at least 2 training examples")
    present = np.unique(y)
    if len(present) < 2:
        raise DegenerateTraining(PolarityLabel.from_index(present[0]))
    n = len(y)
    mtry = params.mtry(X.shape[1])
    max_depth = -1 if params.max_depth is None else params.max_depth
    indptr, indices, data = _csr(X)

    def fit_one(t: int) -> DecisionTree:
        rng = np.random.default_rng(tree_seed(seed, t))
        sample = rng.integers(0, n, size=n)
        inner_seed = int(rng.integers(0, 2**32 - 1))
        return DecisionTree(*_build_tree(X, indptr, indices, data, y, sample, max_depth,
                                         params.min_leaf, mtry, inner_seed))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(fit_one, range(params.n_trees)))
    else:
        trees = [fit_one(t) for t in range(params.n_trees)]
    return ForestModel(tuple(trees), X.shape[1], seed, params)


def train_or_constant(X: np.ndarray, labels: Sequence[PolarityLabel], params: HyperParams = HyperParams(),
                      seed: int = 0, threads: int = 1) -> ForestModel | ConstantModel:
    try:
        return train_forest(X, labels, params, seed, threads)
    except DegenerateTraining as exc:
        if exc.label is None:
            raise
        return ConstantModel(exc.label, np.asarray(X).shape[1])


def decide(votes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Plurality label indices (tie -> Neutral) and confidence = top vote share."""
    votes = np.asarray(votes)
    top = votes.max(axis=1)
    winners = (votes == top[:, None]).sum(axis=1)
    labels = np.where(winners == 1, votes.argmax(axis=1), NEUTRAL_INDEX)
    totals = votes.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        confidence = np.where(totals > 0, top / np.maximum(totals, 1), 0.0)
    return labels, confidence


def predict_batch(model: ForestModel | ConstantModel, X: np.ndarray) -> tuple[list[PolarityLabel], np.ndarray]:
    labels, confidence = decide(model.votes(X))
    return [PolarityLabel.from_index(i) for i in labels], confidence


def predict_with_confidence(model: ForestModel | ConstantModel,
                            features: FeatureVector | np.ndarray) -> tuple[PolarityLabel, float]:
    x = features.values if isinstance(features, FeatureVector) else np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("expected a single feature vector")
    labels, confidence = predict_batch(model, x)
    return labels[0], float(confidence[0])


def fit_examples(examples: Sequence, params: HyperParams = HyperParams(), seed: int = 0,
                 threads: int = 1) -> ForestModel:
    """train_forest over objects carrying `.features` (FeatureVector) and `.label`."""
    X = np.array([ex.features.values for ex in examples])
    return train_forest(X, [ex.label for ex in examples], params, seed, threads)


# ---------------------------------------------------------------------------
# model selection

def grid_search(X: np.ndarray, labels: Sequence[PolarityLabel], grid: Sequence[HyperParams],
                inner_k: int = 3, seed: int = 0, threads: int = 1) -> HyperParams:
    """Grid point with the best mean inner-fold Macro-F1; ties keep grid order."""
    from .evaluation import confusion_matrix, macro_f1

    if not grid:
        raise ValueError("empty hyperparameter grid")
    if inner_k < 2:
        raise ValueError("inner_k must be >= 2")
    if len(grid) == 1:
        return grid[0]
    X = np.asarray(X, dtype=np.float64)
    labels = [PolarityLabel(int(v)) for v in labels]
    if inner_k > len(labels):
        raise ValueError(f"cannot split {len(labels)} examples into {inner_k} folds")
    folds = np.array(assign_folds([lab.value for lab in labels], inner_k, seed))
    best, best_score = grid[0], -1.0
    for params in grid:
        scores = []
        for f in range(inner_k):
            train = np.where(folds != f)[0]
            test = np.where(folds == f)[0]
            model = train_or_constant(X[train], [labels[i] for i in train], params, seed, threads)
            predicted, _ = predict_batch(model, X[test])
            scores.append(macro_f1(confusion_matrix([labels[i] for i in test], predicted)))
        score = float(np.mean(scores))
        if score > best_score:
            best, best_score = params, score
    return best


# ---------------------------------------------------------------------------
# serialization

def forest_to_dict(model: ForestModel) -> dict:
    return {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "n_features": model.n_features,
        "seed": model.seed,
        "params": asdict(model.params),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.tolist(),
            }
            for t in model.trees
        ],
    }


def forest_from_dict(data: dict) -> ForestModel:
    if data.get("format") != FOREST_FORMAT or data.get("version") != FOREST_VERSION:
        raise ValueError("not a version-1 tensent forest dump")
    trees = tuple(
        DecisionTree(
            np.array(t["feature"], dtype=np.int32),
            np.array(t["threshold"], dtype=np.float64),
            np.array(t["left"], dtype=np.int32),
            np.array(t["right"], dtype=np.int32),
            np.array(t["counts"], dtype=np.int64).reshape(-1, 3),
        )
        for t in data["trees"]
    )
    return ForestModel(trees, data["n_features"], data["seed"], HyperParams(**data["params"]))


def save_forest(model: ForestModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(forest_to_dict(model), fh)


def load_forest(path: str | os.PathLike) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        return forest_from_dict(json.load(fh))
