"""Ranking and thresholded classification metrics.

The positive class is Synthetic (label 1) throughout.
"""
from __future__ import annotations

import numpy as np

from .errors import SingleClassError


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged, O(n log n)."""
    values = np.asarray(values)
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    smaller = np.cumsum(counts) - counts
    return (smaller + (counts + 1) / 2.0)[inverse]


def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic: P(score+ > score-) + 0.5 * P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    positives = labels == 1
    n_pos = int(positives.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("roc_auc needs both classes present")
    ranks = midranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy_f1(scores, labels, threshold: float = 0.5) -> tuple[float, float]:
    """Accuracy and F1 at a fixed threshold; prediction is score >= threshold.

    F1 is 0 by convention when precision + recall is 0 (no true or
    predicted positives).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    preds = scores >= threshold
    actual = labels == 1
    accuracy = float((preds == actual).mean())
    tp = float(np.sum(preds & actual))
    fp = float(np.sum(preds & ~actual))
    fn = float(np.sum(~preds & actual))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return accuracy, f1
