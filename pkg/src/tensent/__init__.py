"""Unsupervised ensemble sentiment classification by agreement-seeded self-training."""

from .core import (Dataset, FoldAssignment, PolarityLabel, SentenceRecord, load_dataset,
                   save_dataset, split_folds, tokenize)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FoldAssignment", "PolarityLabel", "SentenceRecord", "load_dataset",
    "save_dataset", "split_folds", "tokenize",
]
