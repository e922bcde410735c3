"""Top-k accuracy and class-weighted mean average precision at k."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ParameterError


def topk_accuracy(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose true class ranks within the top ``k``.

    Ties are broken toward the lower class index, so a true class tied
    with a lower-indexed class ranks below it.
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    n, num_classes = scores.shape
    if not 1 <= k <= num_classes:
        raise ParameterError(f"k must be in [1, {num_classes}], got {k}")
    if labels.shape != (n,):
        raise DataError("labels must be one index per row")
    if n == 0:
        return 0.0
    true = scores[np.arange(n), labels][:, None]
    lower = np.arange(num_classes)[None, :] < labels[:, None]
    rank = (scores > true).sum(axis=1) + ((scores == true) & lower).sum(axis=1)
    return float(np.mean(rank < k))


def average_precision_at_k(scores: np.ndarray, relevant: np.ndarray, k: int) -> float:
    """AP@k for one class over images; normalised by min(positives, k).

    Images are ranked by descending score, ties by lower image index.
    Returns NaN when the class has no positives.
    """
    relevant = np.asarray(relevant) != 0
    positives = int(relevant.sum())
    if positives == 0:
        return float("nan")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")[:k]
    hits = relevant[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float((precision * hits).sum() / min(positives, k))


def weighted_map_at_k(scores: np.ndarray, multi_hot: np.ndarray, class_weights=None,
                      k: int = 100) -> float:
    """Weighted mean over classes with at least one positive of AP@k.

    Every such class needs a positive, finite weight; ``None`` means
    uniform weights.
    """
    scores = np.asarray(scores)
    multi_hot = np.asarray(multi_hot)
    if scores.shape != multi_hot.shape or scores.ndim != 2:
        raise DataError(f"scores {scores.shape} and targets {multi_hot.shape} must match (n, K)")
    if k < 1:
        raise ParameterError("k must be >= 1")
    num_classes = scores.shape[1]
    weights = (np.ones(num_classes) if class_weights is None
               else np.asarray(class_weights, dtype=np.float64))
    if weights.shape != (num_classes,):
        raise ConfigError(f"need {num_classes} class weights, got {weights.shape}")
    total = wsum = 0.0
    for c in range(num_classes):
        if not multi_hot[:, c].any():
            continue
        w = weights[c]
        if not (np.isfinite(w) and w > 0):
            raise ConfigError(f"class {c} has positives but weight {w}")
        total += w * average_precision_at_k(scores[:, c], multi_hot[:, c], k)
        wsum += w
    if wsum == 0:
        return float("nan")
    return total / wsum


@dataclass(frozen=True)
class MetricReport:
    top1: float = float("nan")
    top5: float = float("nan")
    wmap100: float = float("nan")
    loss: float = float("nan")


def evaluate_scores(scores: np.ndarray, targets: np.ndarray, class_weights=None) -> MetricReport:
    """Top-1/top-5 for single-label targets, weighted MAP@100 for multi-hot."""
    if targets.ndim == 1:
        k5 = min(5, scores.shape[1])
        return MetricReport(top1=topk_accuracy(scores, targets, 1),
                            top5=topk_accuracy(scores, targets, k5))
    return MetricReport(wmap100=weighted_map_at_k(scores, targets, class_weights, 100))
