"""Balanced accuracy and aggregation over repeated runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from icsplit.datasets import NEGATIVE, POSITIVE


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts with abnormal as the positive class."""

    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.tn, self.fp) < 0:
            raise ValueError(f"negative count in {self}")


def confusion(labels: np.ndarray, predicted: np.ndarray) -> ConfusionCounts:
    labels = np.asarray(labels)
    predicted = np.asarray(predicted)
    pos = labels == POSITIVE
    neg = labels == NEGATIVE
    return ConfusionCounts(
        tp=int(np.sum(pos & (predicted == POSITIVE))),
        fn=int(np.sum(pos & (predicted == NEGATIVE))),
        tn=int(np.sum(neg & (predicted == NEGATIVE))),
        fp=int(np.sum(neg & (predicted == POSITIVE))),
    )


def balanced_accuracy(c: ConfusionCounts) -> float:
    """Mean of the true-positive and true-negative rates."""
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise ValueError("balanced accuracy needs both classes present")
    return 0.5 * (c.tp / (c.tp + c.fn) + c.tn / (c.tn + c.fp))


def aggregate(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("nothing to aggregate")
    return float(values.mean()), float(values.std(ddof=0))
