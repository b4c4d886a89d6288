"""Threshold metrics and AUROC.

auroc() uses the rank (Mann-Whitney) formulation with ties credited 0.5;
auroc_trapezoid() integrates the ROC curve directly. The two agree to
floating-point accuracy and are both exported so either can check the
other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from metsfuse.errors import DataError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _check_pair(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    return s, y


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionCounts:
    """Counts with the >= threshold rule (a score at the threshold is positive)."""
    s, y = _check_pair(scores, labels)
    if s.size and (s.min() < 0.0 or s.max() > 1.0):
        raise DataError("scores must lie in [0, 1]")
    pred = s >= threshold
    pos = y == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        tn=int(np.sum(~pred & ~pos)),
        fp=int(np.sum(pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


@dataclass(frozen=True)
class Metrics:
    acc: float
    pre: float
    rec: float
    f1: float
    degenerate_precision: bool = False
    degenerate_recall: bool = False


def metrics(c: ConfusionCounts) -> Metrics:
    """Accuracy, precision, recall, F1; undefined ratios become 0 with a flag."""
    acc = (c.tp + c.tn) / c.total if c.total else 0.0
    deg_p = c.tp + c.fp == 0
    deg_r = c.tp + c.fn == 0
    pre = 0.0 if deg_p else c.tp / (c.tp + c.fp)
    rec = 0.0 if deg_r else c.tp / (c.tp + c.fn)
    f1 = 0.0 if pre + rec == 0 else 2 * pre * rec / (pre + rec)
    return Metrics(acc=acc, pre=pre, rec=rec, f1=f1, degenerate_precision=deg_p, degenerate_recall=deg_r)


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties 0.5."""
    s, y = _check_pair(scores, labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs both classes present")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auroc_trapezoid(scores, labels) -> float:
    """Trapezoidal area under the ROC curve, tied scores merged per threshold."""
    s, y = _check_pair(scores, labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs both classes present")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    cum_tp = np.cumsum(y_sorted == 1)
    cum_fp = np.cumsum(y_sorted == 0)
    last_of_tie = np.append(s_sorted[1:] != s_sorted[:-1], True)
    tpr = np.concatenate([[0.0], cum_tp[last_of_tie] / n_pos])
    fpr = np.concatenate([[0.0], cum_fp[last_of_tie] / n_neg])
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
