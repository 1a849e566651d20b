"""Retrieval-augmented EHR prediction pipeline."""

from ._core import (
    DataError,
    NumericError,
    UsageError,
    aupr,
    auroc,
    bce,
    bernoulli_kl,
    generate_benchmark,
    ingest_corpus,
    retrieve,
    summarize,
    train_and_evaluate,
    verbalize_triplet,
)

__all__ = [
    "DataError",
    "NumericError",
    "UsageError",
    "aupr",
    "auroc",
    "bce",
    "bernoulli_kl",
    "generate_benchmark",
    "ingest_corpus",
    "retrieve",
    "summarize",
    "train_and_evaluate",
    "verbalize_triplet",
]
