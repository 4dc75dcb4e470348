"""Lexicon-based base methods and the emoticon polarity mapper."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Protocol, Sequence

from .core import Dataset, PolarityLabel, TensentError, tokenize

DEFAULT_NEGATION_WINDOW = 2
LEXICON_SUFFIX = ".tsv"
EMOTICON_FILE = "emoticons.tsv"


class LexiconFormatError(TensentError):
    pass


class Scorer(Protocol):
    """Anything usable as a base method: a name and a three-way decision."""

    name: str

    def __call__(self, tokens: Sequence[str]) -> PolarityLabel: ...


@dataclass(frozen=True)
class Lexicon:
    name: str
    entries: Mapping[str, float]
    negation_tokens: frozenset[str] = frozenset()
    negation_window: int = DEFAULT_NEGATION_WINDOW

    def __post_init__(self):
        if not self.entries:
            raise ValueError(f"lexicon {self.name!r} has no entries")
        for tok, score in self.entries.items():
            if not math.isfinite(score):
                raise ValueError(f"lexicon {self.name!r}: non-finite score for {tok!r}")
        if self.negation_window < 0:
            raise ValueError("negation_window must be >= 0")
        object.__setattr__(self, "negation_tokens", frozenset(self.negation_tokens))

    def __call__(self, tokens: Sequence[str]) -> PolarityLabel:
        return score_sentence(self, tokens)

    def raw_score(self, tokens: Sequence[str]) -> float:
        total = 0.0
        window = self.negation_window
        for i, tok in enumerate(tokens):
            score = self.entries.get(tok)
            if score is None:
                continue
            if window and any(t in self.negation_tokens for t in tokens[max(0, i - window):i]):
                score = -score
            total += score
        return total


def score_sentence(lexicon: Lexicon, tokens: Sequence[str]) -> PolarityLabel:
    raw = lexicon.raw_score(tokens)
    if raw > 0:
        return PolarityLabel.POSITIVE
    if raw < 0:
        return PolarityLabel.NEGATIVE
    return PolarityLabel.NEUTRAL


@dataclass(frozen=True)
class MethodBank:
    methods: tuple[Scorer, ...]

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if len(self.methods) < 3:
            raise ValueError("a method bank needs at least 3 methods")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate method names in bank: {names}")

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.methods]

    def __len__(self) -> int:
        return len(self.methods)

    def subset(self, n: int) -> "MethodBank":
        return MethodBank(self.methods[:n])


@dataclass(frozen=True)
class EmoticonMap:
    mapping: Mapping[str, PolarityLabel] = field(default_factory=dict)

    def keys(self):
        return self.mapping.keys()


@dataclass(frozen=True)
class PredictionMatrix:
    method_names: tuple[str, ...]
    rows: Mapping[str, tuple[PolarityLabel, ...]]

    def __post_init__(self):
        object.__setattr__(self, "method_names", tuple(self.method_names))
        width = len(self.method_names)
        for rid, row in self.rows.items():
            if len(row) != width:
                raise ValueError(f"row {rid!r} has {len(row)} entries, expected {width}")

    @property
    def ids(self) -> list[str]:
        return list(self.rows)

    def restrict(self, ids: Iterable[str]) -> "PredictionMatrix":
        return PredictionMatrix(self.method_names, {i: self.rows[i] for i in ids})

    def codes(self, ids: Iterable[str] | None = None):
        """Rows as an integer array of label values (-1/0/+1)."""
        import numpy as np

        ids = self.ids if ids is None else list(ids)
        out = np.zeros((len(ids), len(self.method_names)), dtype=np.int8)
        for r, rid in enumerate(ids):
            out[r] = [int(v) for v in self.rows[rid]]
        return out


# ---------------------------------------------------------------------------
# files

def _normalize(token: str) -> str:
    # word tokens are matched lowercased; emoticons and punctuation verbatim
    return token.lower() if all(c.isalnum() or c == "_" for c in token) else token


def load_lexicon(path: str | os.PathLike, name: str | None = None,
                 negation_window: int = DEFAULT_NEGATION_WINDOW) -> Lexicon:
    """Read ``token<TAB>score`` lines; a ``!negation`` line starts the negation list.

    A ``!window<TAB>N`` line overrides the negation window for this lexicon.
    """
    path = os.fspath(path)
    if name is None:
        name = os.path.basename(path)
        if name.endswith(LEXICON_SUFFIX):
            name = name[: -len(LEXICON_SUFFIX)]
    entries: dict[str, float] = {}
    negations: set[str] = set()
    in_negation = False
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            if line.strip() == "!negation":
                in_negation = True
                continue
            if line.startswith("!window"):
                try:
                    negation_window = int(line.split("\t")[1])
                except (IndexError, ValueError):
                    raise LexiconFormatError(f"{path}:{line_no}: bad !window line") from None
                continue
            if in_negation:
                negations.add(_normalize(line.strip()))
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise LexiconFormatError(f"{path}:{line_no}: expected token<TAB>score")
            try:
                score = float(cols[1])
            except ValueError:
                raise LexiconFormatError(f"{path}:{line_no}: bad score {cols[1]!r}") from None
            if not math.isfinite(score):
                raise LexiconFormatError(f"{path}:{line_no}: non-finite score")
            entries[_normalize(cols[0].strip())] = score
    if not entries:
        raise LexiconFormatError(f"{path}: lexicon has no entries")
    return Lexicon(name, entries, frozenset(negations), negation_window)


def save_lexicon(lexicon: Lexicon, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# lexicon {lexicon.name}\n")
        for tok in sorted(lexicon.entries):
            fh.write(f"{tok}\t{lexicon.entries[tok]!r}\n")
        if lexicon.negation_tokens:
            fh.write(f"!window\t{lexicon.negation_window}\n")
            fh.write("!negation\n")
            for tok in sorted(lexicon.negation_tokens):
                fh.write(tok + "\n")


def load_bank(directory: str | os.PathLike) -> MethodBank:
    """Every ``*.tsv`` lexicon in `directory` except the emoticon map, by file name."""
    directory = os.fspath(directory)
    files = sorted(f for f in os.listdir(directory)
                   if f.endswith(LEXICON_SUFFIX) and f != EMOTICON_FILE)
    return MethodBank(tuple(load_lexicon(os.path.join(directory, f)) for f in files))


def load_emoticon_map(path: str | os.PathLike) -> EmoticonMap:
    mapping: dict[str, PolarityLabel] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0] or any(c.isspace() for c in cols[0]):
                raise LexiconFormatError(f"{path}:{line_no}: expected emoticon<TAB>label")
            try:
                mapping[cols[0]] = PolarityLabel.parse(cols[1])
            except ValueError:
                raise LexiconFormatError(f"{path}:{line_no}: bad label {cols[1]!r}") from None
    return EmoticonMap(mapping)


def default_lexicon_dir() -> str:
    return str(resources.files("tensent") / "data" / "lexicons")


@lru_cache(maxsize=1)
def default_emoticon_map() -> EmoticonMap:
    return load_emoticon_map(resources.files("tensent") / "data" / EMOTICON_FILE)


def default_bank() -> MethodBank:
    return load_bank(default_lexicon_dir())


# ---------------------------------------------------------------------------
# operations

def emoticon_label(tokens: Sequence[str], emoticon_map: EmoticonMap) -> PolarityLabel | None:
    """The label shared by every emoticon in `tokens`; None if none or conflicting."""
    found = {emoticon_map.mapping[t] for t in tokens if t in emoticon_map.mapping}
    if len(found) == 1:
        return found.pop()
    return None


def annotate_emoticons(dataset: Dataset, emoticon_map: EmoticonMap) -> Dataset:
    """Copy of `dataset` with each record's emoticon_label filled in."""
    keys = list(emoticon_map.keys())
    records = tuple(
        replace(r, emoticon_label=emoticon_label(tokenize(r.text, keys), emoticon_map))
        for r in dataset.records)
    return Dataset(dataset.name, records)


def run_base_methods(bank: MethodBank, dataset: Dataset, threads: int = 1,
                     emoticons: Iterable[str] | None = None) -> PredictionMatrix:
    """Label every sentence with every method of the bank."""
    keys = list(emoticons) if emoticons is not None else None

    def row(rec):
        tokens = tokenize(rec.text, keys)
        return tuple(method(tokens) for method in bank.methods)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(row, dataset.records))
    else:
        results = [row(r) for r in dataset.records]
    return PredictionMatrix(tuple(bank.names), dict(zip(dataset.ids, results)))
