"""Classification metrics and fold construction used across training and evaluation."""

from __future__ import annotations

import hashlib

import numpy as np


class MetricError(ValueError):
    pass


def f1_score(y_true, y_pred) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are undefined."""
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise MetricError("f1_score requires equal-length non-empty arrays")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def roc_auc(y_true, scores) -> float:
    """Probability a random positive outranks a random negative; ties earn 1/2.

    Computed from average ranks (Mann-Whitney form).
    """
    y_true = np.asarray(y_true).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if y_true.shape != scores.shape or y_true.size == 0:
        raise MetricError("roc_auc requires equal-length non-empty arrays")
    n_pos = int(np.sum(y_true == 1))
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc undefined: only one class present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    base = np.arange(1, scores.size + 1, dtype=np.float64)
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = base[i : j + 1].mean()
        i = j + 1
    rank_sum = ranks[y_true == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def kfold_split(y, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Stratified folds: disjoint, covering, sizes within 1, class counts within 1.

    ``y`` may be an integer n (unstratified split) or a label array.
    """
    if isinstance(y, (int, np.integer)):
        labels = np.zeros(int(y), dtype=np.int64)
    else:
        labels = np.asarray(y).ravel()
    n = labels.size
    if n < k:
        raise MetricError(f"cannot split {n} samples into {k} folds")
    if k < 2:
        raise MetricError("k must be >= 2")
    rng = np.random.default_rng(seed)
    # Deal samples round-robin, class blocks back to back: fold sizes and
    # per-class counts both stay within 1 of each other.
    order = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        order.append(idx)
    order = np.concatenate(order)
    folds: list[list[int]] = [[] for _ in range(k)]
    for pos, idx in enumerate(order):
        folds[pos % k].append(int(idx))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def fold_hash(folds: list[np.ndarray]) -> str:
    h = hashlib.sha256()
    for f in folds:
        h.update(np.asarray(f, dtype=np.int64).tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]
