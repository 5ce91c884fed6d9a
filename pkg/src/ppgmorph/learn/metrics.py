"""Classification and regression metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError


def confusion_percent(y_true, y_pred, n_classes):
    """Row-normalised confusion matrix in percent.

    Row i holds the distribution of predictions for true class i. A class
    absent from ``y_true`` gets an all-zero row.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    C = np.zeros((n_classes, n_classes))
    np.add.at(C, (y_true, y_pred), 1.0)
    rows = C.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(rows > 0, 100.0 * C / rows, 0.0)
    return P


def accuracy(y_true, y_pred):
    y_true = np.asarray(y_true)
    return float(np.mean(y_true == np.asarray(y_pred)))


def roc_auc(y_true, score):
    """Area under the trapezoidal ROC curve for binary ``y_true`` (1 = positive).

    Tied scores form one ROC vertex, which makes this equal to the
    Mann-Whitney probability with ties counted as one half.
    """
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(score, dtype=float)
    P, N = int(y.sum()), int((~y).sum())
    if P == 0 or N == 0:
        raise ArgumentError("AUC needs both positive and negative samples")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each block of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    tpr = np.r_[0.0, tp / P]
    fpr = np.r_[0.0, fp / N]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) * 0.5))


def macro_ovr_auc(y_true, proba):
    """Mean one-vs-rest AUC over the classes present in ``y_true``."""
    y_true = np.asarray(y_true, dtype=int)
    proba = np.asarray(proba, dtype=float)
    aucs = []
    for c in range(proba.shape[1]):
        pos = y_true == c
        if pos.any() and (~pos).any():
            aucs.append(roc_auc(pos, proba[:, c]))
    if not aucs:
        raise ArgumentError("AUC needs at least two classes in y_true")
    return float(np.mean(aucs))


def mae(y_true, y_pred):
    return float(np.mean(np.abs(np.asarray(y_true, float) - np.asarray(y_pred, float))))


@dataclass
class Metrics:
    task: str
    n: int
    accuracy: float | None = None
    auc: float | None = None
    confusion: list | None = None
    mae: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"task": self.task, "n": self.n}
        for k in ("accuracy", "auc", "confusion", "mae"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        d.update(self.extra)
        return d


def classification_metrics(y_true, proba, task):
    y_true = np.asarray(y_true, dtype=int)
    proba = np.asarray(proba, dtype=float)
    pred = np.argmax(proba, axis=1)
    if proba.shape[1] == 2:
        try:
            auc = roc_auc(y_true == 1, proba[:, 1])
        except ArgumentError:
            auc = None
    else:
        try:
            auc = macro_ovr_auc(y_true, proba)
        except ArgumentError:
            auc = None
    return Metrics(
        task=task,
        n=int(y_true.size),
        accuracy=accuracy(y_true, pred),
        auc=auc,
        confusion=confusion_percent(y_true, pred, proba.shape[1]).tolist(),
    )


def regression_metrics(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    return Metrics(task="regression", n=int(y_true.size), mae=mae(y_true, y_pred))
