"""Domain types, tokenization, dataset ingestion and fold splitting."""

from __future__ import annotations

import enum
import os
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence


class TensentError(Exception):
    """Base class for data errors raised by the package."""


class MalformedRow(TensentError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed row at line {line_no}" + (f": {detail}" if detail else ""))


class UnknownLabel(TensentError):
    def __init__(self, line_no: int, label: str):
        self.line_no = line_no
        self.label = label
        super().__init__(f"unknown label {label!r} at line {line_no}")


class DuplicateId(TensentError):
    def __init__(self, record_id: str):
        self.record_id = record_id
        super().__init__(f"duplicate id {record_id!r}")


class TooFewRecords(TensentError):
    pass


class PolarityLabel(enum.IntEnum):
    """Three-valued sentence polarity.

    The integer value doubles as the ordinal feature encoding (-1/0/+1) and
    fixes the iteration order Negative < Neutral < Positive.
    """

    NEGATIVE = -1
    NEUTRAL = 0
    POSITIVE = 1

    @property
    def index(self) -> int:
        """Position in 0..2, used to index count arrays and confusion matrices."""
        return self.value + 1

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def from_index(cls, index: int) -> "PolarityLabel":
        return cls(int(index) - 1)

    @classmethod
    def parse(cls, text: str) -> "PolarityLabel":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"not a polarity label: {text!r}") from None

    def __str__(self) -> str:
        return self.text


LABELS = (PolarityLabel.NEGATIVE, PolarityLabel.NEUTRAL, PolarityLabel.POSITIVE)
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class SentenceRecord:
    id: str
    text: str
    gold: PolarityLabel | None = None
    emoticon_label: PolarityLabel | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"record {self.id!r} has empty text")


@dataclass(frozen=True)
class Dataset:
    name: str
    records: tuple[SentenceRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateId(rec.id)
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    @property
    def fully_labeled(self) -> bool:
        return all(r.gold is not None for r in self.records)

    def subset(self, ids: Iterable[str], name: str | None = None) -> "Dataset":
        """Records whose id is in `ids`, kept in dataset order."""
        wanted = set(ids)
        return Dataset(name or self.name, tuple(r for r in self.records if r.id in wanted))

    def without_gold(self) -> "Dataset":
        return Dataset(self.name, tuple(
            SentenceRecord(r.id, r.text, None, r.emoticon_label) for r in self.records))


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: Mapping[str, int] = field(default_factory=dict)

    def fold_ids(self, fold: int) -> list[str]:
        return [i for i, f in self.assignment.items() if f == fold]

    def split(self, dataset: Dataset, fold: int) -> tuple[Dataset, Dataset]:
        """(train part, test part) for one fold, both in dataset order."""
        train = [r for r in dataset.records if self.assignment[r.id] != fold]
        test = [r for r in dataset.records if self.assignment[r.id] == fold]
        return (Dataset(f"{dataset.name}.train{fold}", tuple(train)),
                Dataset(f"{dataset.name}.test{fold}", tuple(test)))


# ---------------------------------------------------------------------------
# tokenization

def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _emoticon_at(text: str, pos: int, index: Mapping[str, Sequence[str]]) -> str | None:
    """Longest emoticon starting at `pos` that respects word boundaries."""
    for emo in index.get(text[pos], ()):
        if not text.startswith(emo, pos):
            continue
        end = pos + len(emo)
        if _is_word_char(emo[0]) and pos > 0 and _is_word_char(text[pos - 1]):
            continue
        if _is_word_char(emo[-1]) and end < len(text) and _is_word_char(text[end]):
            continue
        return emo
    return None


@lru_cache(maxsize=32)
def _emoticon_index(emoticons: frozenset[str]) -> dict[str, tuple[str, ...]]:
    index: dict[str, list[str]] = {}
    for emo in sorted(emoticons, key=lambda e: (-len(e), e)):
        index.setdefault(emo[0], []).append(emo)
    return {ch: tuple(v) for ch, v in index.items()}


def tokenize(text: str, emoticons: Iterable[str] | None = None) -> list[str]:
    """Split text into lowercased word tokens and punctuation-run tokens.

    Emoticons from `emoticons` (defaults to the bundled emoticon map) are kept
    verbatim as single tokens, case included.
    """
    if emoticons is None:
        from .lexicons import default_emoticon_map
        emoticons = default_emoticon_map().mapping.keys()
    index = _emoticon_index(frozenset(emoticons))
    tokens: list[str] = []
    for chunk in text.split():
        pos, n = 0, len(chunk)
        while pos < n:
            emo = _emoticon_at(chunk, pos, index) if index else None
            if emo is not None:
                tokens.append(emo)
                pos += len(emo)
                continue
            start = pos
            if _is_word_char(chunk[pos]):
                while pos < n and _is_word_char(chunk[pos]):
                    pos += 1
            else:
                pos += 1
                while (pos < n and not _is_word_char(chunk[pos])
                       and (not index or _emoticon_at(chunk, pos, index) is None)):
                    pos += 1
            tokens.append(chunk[start:pos].lower())
    return tokens


# ---------------------------------------------------------------------------
# dataset files

HEADER = ("id", "label", "text")


def _parse_label(raw: str, line_no: int) -> PolarityLabel | None:
    label = raw.strip().lower()
    if label == UNLABELED:
        return None
    try:
        return PolarityLabel.parse(label)
    except ValueError:
        raise UnknownLabel(line_no, raw) from None


def load_dataset(path: str | os.PathLike, name: str | None = None) -> Dataset:
    """Read a tab-separated dataset file (header ``id<TAB>label<TAB>text``)."""
    path = os.fspath(path)
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    records = []
    seen = set()
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedRow(1, "missing header")
    header = tuple(c.strip().lower() for c in lines[0].rstrip("\r").split("\t"))
    if header != HEADER:
        raise MalformedRow(1, f"expected header {'<TAB>'.join(HEADER)}")
    for line_no, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise MalformedRow(line_no, f"expected 3 columns, got {len(cols)}")
        rid, raw_label, text = cols
        rid = rid.strip()
        if not rid or not text.strip():
            raise MalformedRow(line_no, "empty id or text")
        if rid in seen:
            raise DuplicateId(rid)
        seen.add(rid)
        records.append(SentenceRecord(rid, text, _parse_label(raw_label, line_no)))
    return Dataset(name, tuple(records))


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(HEADER) + "\n")
        for rec in dataset.records:
            if "\t" in rec.text or "\n" in rec.text:
                raise ValueError(f"record {rec.id!r}: text contains TAB or newline")
            label = rec.gold.text if rec.gold is not None else UNLABELED
            fh.write(f"{rec.id}\t{label}\t{rec.text}\n")


# ---------------------------------------------------------------------------
# folds

def assign_folds(strata: Sequence, k: int, seed: int) -> list[int]:
    """Fold index per position; positions sharing a stratum value are spread evenly.

    Strata are dealt round-robin over the folds in sorted order, each one
    continuing where the previous stopped, so fold sizes differ by at most one
    overall and within every stratum.
    """
    rng = random.Random(seed)
    groups: dict = {}
    for pos, s in enumerate(strata):
        groups.setdefault(s, []).append(pos)
    folds = [0] * len(strata)
    offset = 0
    for key in sorted(groups):
        members = groups[key]
        rng.shuffle(members)
        for j, pos in enumerate(members):
            folds[pos] = (offset + j) % k
        offset = (offset + len(members)) % k
    return folds


def split_folds(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Assign each record to one of `k` folds, stratified by gold label when all are labeled."""
    n = len(dataset)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise TooFewRecords(f"cannot split {n} records into {k} folds")
    if dataset.fully_labeled:
        strata = [r.gold.value for r in dataset.records]
    else:
        strata = [0] * n
    folds = assign_folds(strata, k, seed)
    return FoldAssignment(k, dict(zip(dataset.ids, folds)))
