"""Independent simulation oracle for the synthetic stability and transfer experiments.

Re-implements lexicon scoring, agreement seeding, emoticon transfer,
self-training, majority voting and TF-IDF features on top of scikit-learn's
random forest and F1, and writes the expected Macro-F1 table that the
acceptance tests freeze. It shares only the dataset generator, the tokenizer
and the fold assignment with the package, so forest and bookkeeping
differences show up as numeric drift rather than being hidden.

Run from the repository root:

    python3 tests/oracles/synth_oracle.py tests/data/synth_expected.json
"""

import json
import math
import os
import sys
import time
from collections import Counter

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.metrics import f1_score

from tensent.core import split_folds, tokenize
from tensent.lexicons import default_lexicon_dir
from tensent.synth import generate_dataset

SEED = 42
SIZE = 2000
N_DATASETS = 8
FOLDS = 5
A, C = 7, 0.7
LABEL = {"negative": -1, "neutral": 0, "positive": 1}


def read_lexicon(path):
    entries, negations, window, in_neg = {}, set(), 2, False
    for line in open(path, encoding="utf-8"):
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        if line == "!negation":
            in_neg = True
            continue
        if line.startswith("!window"):
            window = int(line.split("\t")[1])
            continue
        if in_neg:
            negations.add(line.strip())
        else:
            tok, score = line.split("\t")
            entries[tok] = float(score)
    return entries, negations, window


def lexicon_label(lex, tokens):
    entries, negations, window = lex
    total = 0.0
    for i, t in enumerate(tokens):
        if t in entries:
            s = entries[t]
            if window and negations.intersection(tokens[max(0, i - window):i]):
                s = -s
            total += s
    return (total > 0) - (total < 0)


def read_emoticons():
    path = os.path.join(os.path.dirname(default_lexicon_dir()), "emoticons.tsv")
    out = {}
    for line in open(path, encoding="utf-8"):
        if line.startswith("#") or not line.strip():
            continue
        emo, lab = line.rstrip("\n").split("\t")
        out[emo] = LABEL[lab]
    return out


def vote(row):
    top = Counter(row).most_common()
    if len(top) > 1 and top[0][1] == top[1][1]:
        return 0, top[0][1], False
    return top[0][0], top[0][1], True


def forest_predict(X, y, Xq, seed):
    rf = RandomForestClassifier(100, max_features="sqrt", random_state=seed, n_jobs=1).fit(X, y)
    votes = np.stack([rf.classes_[t.predict(Xq).astype(int)] for t in rf.estimators_])
    labels, conf = [], []
    for col in votes.T:
        c = Counter(col).most_common()
        labels.append(0 if len(c) > 1 and c[0][1] == c[1][1] else c[0][0])
        conf.append(c[0][1] / len(col))
    return np.array(labels), np.array(conf)


def macro(gold, pred):
    return float(f1_score(gold, pred, average="macro", labels=[-1, 0, 1], zero_division=0))


def run(ds, lexicons, emoticons, use_emoticons=True):
    names = sorted(lexicons)
    toks = [tokenize(r.text) for r in ds.records]
    codes = np.array([[lexicon_label(lexicons[n], t) for n in names] for t in toks])
    gold = np.array([r.gold.value for r in ds.records])
    emo = []
    for t in toks:
        found = {emoticons[x] for x in t if x in emoticons}
        emo.append(found.pop() if len(found) == 1 else None)
    assignment = split_folds(ds, FOLDS, SEED).assignment
    fold = np.array([assignment[r.id] for r in ds.records])
    scores = {k: [] for k in names + ["majority_voting", "10sent", "fully_supervised"]}
    for f in range(FOLDS):
        tr, te = np.where(fold != f)[0], np.where(fold == f)[0]
        df = Counter(w for i in tr for w in set(toks[i]))
        terms = sorted(w for w, c in df.items() if c >= 2)
        col = {w: j for j, w in enumerate(terms)}
        idf = np.array([math.log(len(tr) / df[w]) for w in terms])
        X = np.zeros((len(toks), len(names) + len(terms)))
        X[:, :len(names)] = codes
        for i, t in enumerate(toks):
            for w, c in Counter(t).items():
                if w in col:
                    X[i, len(names) + col[w]] = c * idf[col[w]]
        for j, n in enumerate(names):
            scores[n].append(macro(gold[te], codes[te, j]))
        scores["majority_voting"].append(macro(gold[te], [vote(r)[0] for r in codes[te]]))

        pseudo = {}
        for i in tr:
            lab, count, unique = vote(codes[i])
            if unique and count >= A:
                pseudo[i] = lab
        if use_emoticons:
            for i in tr:
                if emo[i] is not None:
                    pseudo[i] = emo[i]
        seeds = np.array(sorted(pseudo))
        labels = np.array([pseudo[i] for i in seeds])
        rest = np.array([i for i in tr if i not in pseudo])
        pred, conf = forest_predict(X[seeds], labels, X[rest], SEED + f)
        keep = conf >= C
        train_rows = np.concatenate([seeds, rest[keep]])
        train_labels = np.concatenate([labels, pred[keep]])
        pred, _ = forest_predict(X[train_rows], train_labels, X[te], SEED + f)
        scores["10sent"].append(macro(gold[te], pred))
        pred, _ = forest_predict(X[tr], gold[tr], X[te], SEED + f)
        scores["fully_supervised"].append(macro(gold[te], pred))
    return {k: 100 * float(np.mean(v)) for k, v in scores.items()}


def emoticon_counts(ds, emoticons):
    """Sentences whose whitespace words include a mapped emoticon, and how many agree with gold.

    The generator may glue a final period onto the last word, so one trailing
    "." is dropped before lookup.
    """
    covered = correct = 0
    for r in ds.records:
        words = [w[:-1] if w not in emoticons and w.endswith(".") else w for w in r.text.split()]
        found = {emoticons[w] for w in words if w in emoticons}
        if len(found) == 1:
            covered += 1
            correct += found.pop() == r.gold.value
    return covered, correct


def main(out_path):
    lexdir = default_lexicon_dir()
    lexicons = {f[:-4]: read_lexicon(os.path.join(lexdir, f))
                for f in sorted(os.listdir(lexdir)) if f.endswith(".tsv")}
    emoticons = read_emoticons()
    result = {"seed": SEED, "size": SIZE, "folds": FOLDS, "agreement": A, "confidence": C,
              "datasets": {}}
    for d in range(N_DATASETS):
        t0 = time.time()
        ds = generate_dataset(d, SIZE, SEED)
        result["datasets"][ds.name] = run(ds, lexicons, emoticons)
        print(ds.name, f"{time.time() - t0:.1f}s",
              {k: round(v, 2) for k, v in result["datasets"][ds.name].items()}, flush=True)
    ds = generate_dataset(0, SIZE, SEED, emoticon_rate=0.10, emoticon_noise=0.0, name="synth_emoticons")
    covered, correct = emoticon_counts(ds, emoticons)
    result["emoticon_transfer"] = {
        "dataset": ds.name,
        "covered": covered,
        "correct": correct,
        "with_emoticons": run(ds, lexicons, emoticons, True)["10sent"],
        "without_emoticons": run(ds, lexicons, emoticons, False)["10sent"],
    }
    print(result["emoticon_transfer"])
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=1, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/synth_expected.json")
