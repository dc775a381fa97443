"""Confusion matrices, macro accuracy and stratified fold assignment."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true category and columns = predicted category."""

    counts: np.ndarray
    label_set: tuple

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        K = len(self.label_set)
        if counts.shape != (K, K):
            raise ValueError(f"counts must be {K}x{K}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("negative count")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "label_set", tuple(self.label_set))

    @classmethod
    def from_predictions(cls, true, predicted, label_set):
        K = len(label_set)
        counts = np.zeros((K, K), dtype=np.int64)
        np.add.at(counts, (np.asarray(true, dtype=np.intp), np.asarray(predicted, dtype=np.intp)), 1)
        return cls(counts, label_set)

    def __add__(self, other):
        if self.label_set != other.label_set:
            raise ValueError("label sets differ")
        return ConfusionMatrix(self.counts + other.counts, self.label_set)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def rates(self) -> np.ndarray:
        """Row-normalized percentages; empty rows are all zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(100.0 * self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def accuracy(self) -> float:
        """Plain sample accuracy in percent."""
        return 100.0 * np.trace(self.counts) / self.total

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["true\\predicted", *self.label_set])
        for label, row in zip(self.label_set, self.counts):
            writer.writerow([label, *(int(v) for v in row)])
        return buf.getvalue()

    def rates_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["true\\predicted", *self.label_set])
        for label, row in zip(self.label_set, self.rates):
            writer.writerow([label, *(f"{v:.2f}" for v in row)])
        return buf.getvalue()


def macro_accuracy_from_rates(rates) -> float:
    """Mean of the diagonal of a row-normalized (percent) confusion matrix."""
    rates = np.asarray(rates, dtype=np.float64)
    if rates.ndim == 1:
        return float(rates.mean())
    return float(np.mean(np.diag(rates)))


def macro_accuracy(cm) -> float:
    """Mean per-category recall in percent; every row must be non-empty."""
    if not isinstance(cm, ConfusionMatrix):
        return macro_accuracy_from_rates(cm)
    if (cm.counts.sum(axis=1) == 0).any():
        empty = [l for l, r in zip(cm.label_set, cm.counts.sum(axis=1)) if r == 0]
        raise DatasetError(f"no samples for categories {empty}")
    return macro_accuracy_from_rates(cm.rates)


def stratified_folds(labels, k, seed=0):
    """Fold index (0..k-1) for every sample.

    Within each category the samples are shuffled with ``seed`` and dealt
    round-robin, continuing the deal where the previous category stopped so
    fold sizes stay balanced.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("need at least 2 folds")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < k:
        raise DatasetError(
            f"{k} folds need at least {k} samples per category; smallest has {counts.min()}")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(labels), dtype=np.intp)
    offset = 0
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(len(members))]
        fold[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return fold
