"""Classification metrics: accuracy, precision, recall, F1 at a 0.5
threshold with class 1 positive, and AUC via the tied-rank form of the
Mann-Whitney statistic (ties count one half)."""

from __future__ import annotations

import numpy as np

from .errors import ContractError


def tied_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by their group's average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def auc_score(scores, labels) -> float | None:
    """Probability a positive outranks a negative; None if only one class
    is present (no pairs to rank, explicitly not 0.5)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = tied_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def compute_metrics(scores, labels, threshold: float = 0.5) -> dict:
    """Metric dict for one evaluation split.

    Zero-denominator precision/recall come out as 0.0 with their
    ``*_defined`` flag cleared; a single-class split reports auc None.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.size == 0 or scores.size != labels.size:
        raise ContractError(
            f"need matching nonempty scores/labels, got {scores.size}/{labels.size}"
        )
    predicted = (scores >= threshold).astype(np.int64)
    tp = int(((predicted == 1) & (labels == 1)).sum())
    fp = int(((predicted == 1) & (labels == 0)).sum())
    fn = int(((predicted == 0) & (labels == 1)).sum())
    tn = int(((predicted == 0) & (labels == 0)).sum())
    acc = (tp + tn) / labels.size
    precision_defined = (tp + fp) > 0
    recall_defined = (tp + fn) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if recall_defined else 0.0
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
    return {
        "acc": acc,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "auc": auc_score(scores, labels),
        "precision_defined": precision_defined,
        "recall_defined": recall_defined,
        "n": int(labels.size),
        "n_positive": int((labels == 1).sum()),
    }


METRIC_KEYS = ("acc", "precision", "recall", "f1", "auc")


def mean_metrics(per_fold: list[dict]) -> dict:
    """Unweighted mean of each metric over folds; auc averages only the
    folds where it is defined."""
    out = {}
    for key in METRIC_KEYS:
        values = [m[key] for m in per_fold if m[key] is not None]
        out[key] = float(np.mean(values)) if values else None
    return out
