"""Confusion counts, per-class precision/recall/F1, accuracy and rank AUC.

Positive class is fake (label 1). Per-class rows for the real class are
obtained by swapping the positive class. Zero denominators yield 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def swapped(self) -> "ConfusionCounts":
        return ConfusionCounts(tp=self.tn, tn=self.tp, fp=self.fn, fn=self.fp)

    def to_json(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    fake: ClassMetrics
    real: ClassMetrics
    auc: float | None = None

    # positive-class (fake) shorthands
    @property
    def precision(self) -> float:
        return self.fake.precision

    @property
    def recall(self) -> float:
        return self.fake.recall

    @property
    def f1(self) -> float:
        return self.fake.f1


def confusion(pred_labels, true_labels) -> ConfusionCounts:
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {true.shape} labels")
    for arr in (pred, true):
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("labels must be 0 (real) or 1 (fake)")
    pred, true = pred.astype(bool), true.astype(bool)
    return ConfusionCounts(tp=int(np.sum(pred & true)), tn=int(np.sum(~pred & ~true)),
                           fp=int(np.sum(pred & ~true)), fn=int(np.sum(~pred & true)))


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _class_metrics(c: ConfusionCounts) -> ClassMetrics:
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return ClassMetrics(precision, recall, f1)


def metrics(c: ConfusionCounts, auc_value: float | None = None) -> Metrics:
    if c.total == 0:
        raise ValueError("no evaluated samples")
    return Metrics((c.tp + c.tn) / c.total, _class_metrics(c), _class_metrics(c.swapped()), auc_value)


def auc(scores_fake, true_labels) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    scores = np.asarray(scores_fake, dtype=np.float64)
    labels = np.asarray(true_labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
