"""Synthetic sentiment corpora and the matching default lexicon bank.

The generator works over a fixed pseudo-word universe: ten pools of
polarized words, filler words, and per-dataset topic words. Each shipped
lexicon covers seven of the ten pools (with a few wrong-signed and spurious
entries), and each generated dataset draws most of its polarized words from
two dominant pools. Which lexicons do well therefore changes from dataset to
dataset, while topic words give bag-of-words features a class signal the
lexicons cannot see.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass
from functools import lru_cache

from .core import LABELS, Dataset, PolarityLabel, SentenceRecord, save_dataset
from .lexicons import Lexicon, save_lexicon

UNIVERSE_SEED = 1729
N_POOLS = 10
POOL_SIZE = 15
N_FILLERS = 80
N_METHODS = 10
NEGATORS = ("not", "never", "no")

_ONSETS = "b c d f g h j k l m n p r s t v w z br cr dr fl gr kl pl pr st tr".split()
_VOWELS = "a e i o u ai ea ou".split()
_CODAS = ["", "", "n", "r", "l", "s", "m", "x", "nd", "rt"]

_EMOTICONS = {
    PolarityLabel.POSITIVE: (":)", ":-)", ":D", "=)", "<3", ";)"),
    PolarityLabel.NEGATIVE: (":(", ":-(", ":'(", "D:", "=(", ":/"),
    PolarityLabel.NEUTRAL: (":|", ":-|", "-_-", ":o"),
}


@dataclass(frozen=True)
class Universe:
    positive: tuple[tuple[str, ...], ...]
    negative: tuple[tuple[str, ...], ...]
    fillers: tuple[str, ...]


def _word(rng: random.Random, syllables: int) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables)) \
        + rng.choice(_CODAS)


def _fresh_words(rng: random.Random, n: int, taken: set[str], syllables=(2, 3)) -> list[str]:
    out = []
    while len(out) < n:
        w = _word(rng, rng.choice(syllables))
        if w in taken or w in NEGATORS:
            continue
        taken.add(w)
        out.append(w)
    return out


@lru_cache(maxsize=1)
def universe() -> Universe:
    rng = random.Random(UNIVERSE_SEED)
    taken: set[str] = set()
    pos = tuple(tuple(_fresh_words(rng, POOL_SIZE, taken)) for _ in range(N_POOLS))
    neg = tuple(tuple(_fresh_words(rng, POOL_SIZE, taken)) for _ in range(N_POOLS))
    fillers = tuple(_fresh_words(rng, N_FILLERS, taken, syllables=(1, 2)))
    return Universe(pos, neg, fillers)


def method_pools(m: int) -> list[int]:
    """Pools covered by method `m`: all but three consecutive ones."""
    skipped = {(m + j) % N_POOLS for j in range(3)}
    return [p for p in range(N_POOLS) if p not in skipped]


def make_bank_lexicons() -> list[Lexicon]:
    """The ten default lexicons, derived deterministically from the universe."""
    uni = universe()
    lexicons = []
    for m in range(N_METHODS):
        rng = random.Random(f"lexicon:{m}")
        entries: dict[str, float] = {}
        for p in method_pools(m):
            for sign, words in ((1.0, uni.positive[p]), (-1.0, uni.negative[p])):
                for w in words:
                    if rng.random() < 0.9:
                        magnitude = rng.choice((0.5, 1.0, 1.5, 2.0, 3.0))
                        flipped = rng.random() < 0.07
                        entries[w] = -sign * magnitude if flipped else sign * magnitude
        for w in rng.sample(uni.fillers, 6):
            entries[w] = rng.choice((-0.5, 0.5))
        if m % 2 == 0:
            negations, window = frozenset(NEGATORS), 1 + (m // 2) % 3
        else:
            negations, window = frozenset(), 0
        lexicons.append(Lexicon(f"lex{m + 1:02d}", entries, negations, window))
    return lexicons


def write_bank(directory: str | os.PathLike) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for lex in make_bank_lexicons():
        path = os.path.join(directory, f"{lex.name}.tsv")
        save_lexicon(lex, path)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True)
class DatasetProfile:
    name: str
    pool_weights: tuple[float, ...]
    class_prior: tuple[float, float, float]  # negative, neutral, positive
    topic_words: tuple[tuple[str, ...], ...]  # one tuple per class, in LABELS order
    shared_topics: tuple[str, ...]


_PRIORS = (
    (0.30, 0.40, 0.30),
    (0.25, 0.35, 0.40),
    (0.40, 0.35, 0.25),
    (0.20, 0.50, 0.30),
    (0.35, 0.30, 0.35),
    (0.30, 0.25, 0.45),
    (0.45, 0.30, 0.25),
    (0.25, 0.45, 0.30),
)


def make_profile(index: int, seed: int) -> DatasetProfile:
    rng = random.Random(f"profile:{seed}:{index}")
    dominant = ((3 * index + 1) % N_POOLS, (3 * index + 2) % N_POOLS)
    weights = [0.30 / (N_POOLS - 2)] * N_POOLS
    for p in dominant:
        weights[p] = 0.35
    taken = set(universe().fillers) | {w for pool in universe().positive for w in pool} \
        | {w for pool in universe().negative for w in pool}
    topics = tuple(tuple(_fresh_words(rng, 20, taken)) for _ in LABELS)
    shared = tuple(_fresh_words(rng, 40, taken))
    return DatasetProfile(f"synth{index:02d}", tuple(weights), _PRIORS[index % len(_PRIORS)],
                          topics, shared)


def _sentence(rng: random.Random, profile: DatasetProfile, label: PolarityLabel,
              topic_strength: float) -> list[list[str]]:
    uni = universe()
    pools = range(N_POOLS)
    chunks: list[list[str]] = []

    def polar_word(polarity: PolarityLabel) -> str:
        p = rng.choices(pools, weights=profile.pool_weights)[0]
        words = uni.positive[p] if polarity is PolarityLabel.POSITIVE else uni.negative[p]
        return rng.choice(words)

    if label is PolarityLabel.NEUTRAL:
        if rng.random() < 0.3:
            chunks.append([polar_word(rng.choice((PolarityLabel.POSITIVE,
                                                  PolarityLabel.NEGATIVE)))])
    else:
        opposite = PolarityLabel(-label.value)
        for _ in range(rng.choices((1, 2, 3), weights=(0.5, 0.35, 0.15))[0]):
            r = rng.random()
            if r < 0.12:
                chunks.append([rng.choice(NEGATORS), polar_word(opposite)])
            elif r < 0.27:
                chunks.append([polar_word(opposite)])
            else:
                chunks.append([polar_word(label)])
    for _ in range(2):
        if rng.random() < topic_strength:
            chunks.append([rng.choice(profile.topic_words[label.index])])
        else:
            chunks.append([rng.choice(profile.shared_topics)])
    for _ in range(rng.randint(3, 8)):
        chunks.append([rng.choice(uni.fillers)])
    rng.shuffle(chunks)
    return chunks


def generate_dataset(index: int, size: int = 2000, seed: int = 42,
                     emoticon_rate: float = 0.05, emoticon_noise: float = 0.2,
                     topic_strength: float = 0.45, name: str | None = None) -> Dataset:
    """One gold-labeled synthetic dataset.

    A fraction `emoticon_rate` of sentences gets an emoticon; with probability
    `emoticon_noise` that emoticon belongs to a different class than the gold.
    """
    profile = make_profile(index, seed)
    rng = random.Random(f"dataset:{seed}:{index}")
    name = name or profile.name
    records = []
    for i in range(size):
        label = rng.choices(LABELS, weights=profile.class_prior)[0]
        chunks = _sentence(rng, profile, label, topic_strength)
        if rng.random() < emoticon_rate:
            emo_class = label
            if rng.random() < emoticon_noise:
                emo_class = rng.choice([c for c in LABELS if c is not label])
            chunks.append([rng.choice(_EMOTICONS[emo_class])])
        words = [w for chunk in chunks for w in chunk]
        text = " ".join(words)
        if rng.random() < 0.4:
            text += rng.choice((" !", ".", " ..."))
        records.append(SentenceRecord(f"{name}-{i:05d}", text, label))
    return Dataset(name, tuple(records))


def generate_family(n_datasets: int = 8, size: int = 2000, seed: int = 42,
                    emoticon_rate: float = 0.05, emoticon_noise: float = 0.2) -> list[Dataset]:
    return [generate_dataset(i, size, seed, emoticon_rate, emoticon_noise)
            for i in range(n_datasets)]


def write_family(out_dir: str | os.PathLike, datasets: list[Dataset]) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for ds in datasets:
        path = os.path.join(out_dir, f"{ds.name}.tsv")
        save_dataset(ds, path)
        paths.append(path)
    return paths
