"""Evaluation metrics: accuracy, macro one-vs-rest AUC, precision, recall.

AUC is the Mann-Whitney rank statistic with midrank tie handling, computed
per class against the rest and macro-averaged; the test suite checks it
against a brute-force all-pairs oracle.  Classes absent from the test
labels are excluded from the macro averages (and logged).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import ParamVector, forward_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    auc_macro_ovr: float
    precision_macro: float
    recall_macro: float

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "auc_macro_ovr": self.auc_macro_ovr,
            "precision_macro": self.precision_macro,
            "recall_macro": self.recall_macro,
        }


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.shape[0])
    xs = x[order]
    i = 0
    n = x.shape[0]
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_binary(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    """Rank-statistic AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    n_pos = pos_scores.shape[0]
    n_neg = neg_scores.shape[0]
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both score groups must be nonempty")
    ranks = midranks(np.concatenate([pos_scores, neg_scores]))
    rank_sum = ranks[:n_pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def evaluate(params: ParamVector, test_set: Dataset) -> MetricsReport:
    """Score a model on a held-out set with all four metrics.

    Precision and recall are macro one-vs-rest with 0/0 mapped to 0.
    """
    if len(test_set) == 0:
        raise ValueError("test set must be nonempty")
    scores = forward_batch(params, test_set.features)
    labels = test_set.labels
    preds = scores.argmax(axis=1)
    accuracy = float((preds == labels).mean())

    aucs = []
    precisions = []
    recalls = []
    for c in range(test_set.num_classes):
        is_pos = labels == c
        n_pos = int(is_pos.sum())
        if n_pos == 0:
            logger.info("class %d absent from test labels; excluded from macro metrics", c)
            continue
        pred_c = preds == c
        tp = int((pred_c & is_pos).sum())
        n_pred = int(pred_c.sum())
        precisions.append(tp / n_pred if n_pred else 0.0)
        recalls.append(tp / n_pos)
        if n_pos < labels.shape[0]:
            aucs.append(auc_binary(scores[is_pos, c], scores[~is_pos, c]))
        else:
            logger.info("class %d has no negatives; excluded from macro AUC", c)
    return MetricsReport(
        accuracy=accuracy,
        auc_macro_ovr=float(np.mean(aucs)) if aucs else 0.0,
        precision_macro=float(np.mean(precisions)) if precisions else 0.0,
        recall_macro=float(np.mean(recalls)) if recalls else 0.0,
    )
