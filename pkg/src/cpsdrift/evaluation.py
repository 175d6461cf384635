"""Pointwise confusion counts, precision / recall / F1 and ROC-AUC."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .timeseries import ANOMALOUS, NORMAL


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0


def confusion(labels, predictions) -> Confusion:
    """Counts over points with a known label (unknown ``-1`` points are skipped)."""
    labels = np.asarray(labels)
    preds = np.asarray(predictions)
    if labels.shape != preds.shape:
        raise ValueError(f"length mismatch: {labels.shape} vs {preds.shape}")
    pos = labels == ANOMALOUS
    neg = labels == NORMAL
    flagged = preds == 1
    return Confusion(
        tp=int(np.sum(pos & flagged)),
        fn=int(np.sum(pos & ~flagged)),
        tn=int(np.sum(neg & ~flagged)),
        fp=int(np.sum(neg & flagged)),
    )


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def prf1(c: Confusion) -> tuple[float, float, float]:
    """Precision, recall, F1; any 0/0 is reported as 0."""
    pre = _ratio(c.tp, c.tp + c.fp)
    rec = _ratio(c.tp, c.tp + c.fn)
    return pre, rec, f1_from(pre, rec)


def f1_from(pre: float, rec: float) -> float:
    return _ratio(2.0 * pre * rec, pre + rec)


def roc(scores, labels) -> tuple[np.ndarray, float]:
    """ROC points ``(fpr, tpr, threshold)`` at every distinct score, and trapezoidal AUC.

    A point is flagged when its score is >= the threshold.  The first row is
    the all-negative corner ``(0, 0, inf)``.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    known = (labels == ANOMALOUS) | (labels == NORMAL)
    scores, labels = scores[known], labels[known]
    n_pos = int(np.sum(labels == ANOMALOUS))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both normal and anomalous labels")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    pos = (labels[order] == ANOMALOUS).astype(float)
    tps = np.cumsum(pos)
    fps = np.cumsum(1.0 - pos)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tpr = np.r_[0.0, tps[last] / n_pos]
    fpr = np.r_[0.0, fps[last] / n_neg]
    thr = np.r_[np.inf, s[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return np.column_stack([fpr, tpr, thr]), auc


@dataclass(frozen=True)
class Report:
    pre: float
    rec: float
    f1: float
    tp: int
    fn: int
    tn: int
    fp: int
    auc: float | None
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


def make_report(scores, labels, threshold: float) -> Report:
    c = confusion(labels, (np.asarray(scores, dtype=float) > threshold).astype(np.int64))
    pre, rec, f1 = prf1(c)
    try:
        _, auc = roc(scores, labels)
    except ValueError:
        auc = None
    return Report(pre, rec, f1, c.tp, c.fn, c.tn, c.fp, auc, float(threshold))
