"""Precision-recall curves and recall at a precision floor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PrCurve:
    points: tuple  # (threshold, precision, recall), threshold descending

    def __len__(self):
        return len(self.points)

    @property
    def thresholds(self):
        return np.array([p[0] for p in self.points])

    @property
    def precision(self):
        return np.array([p[1] for p in self.points])

    @property
    def recall(self):
        return np.array([p[2] for p in self.points])


def pr_curve(scores, labels) -> PrCurve:
    """One point per distinct score; a grasp counts as predicted positive when score >= threshold."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if len(s) != len(y):
        raise MetricError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("no positive labels")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    pts = tuple((float(s[i]), float(tp[i] / (tp[i] + fp[i])), float(tp[i] / n_pos)) for i in ends)
    return PrCurve(pts)


def recall_at_precision(curve: PrCurve, min_precision=0.99) -> float:
    """Largest recall over curve points whose precision is at least ``min_precision`` (0 if none)."""
    best = 0.0
    for _, p, r in curve.points:
        if p >= min_precision and r > best:
            best = r
    return best


def operating_threshold(curve: PrCurve, min_precision=0.99, default=0.5) -> float:
    """Most permissive threshold meeting ``min_precision``; ``default`` when none does."""
    best = None
    for t, p, r in curve.points:
        if p >= min_precision and (best is None or r > best[1]):
            best = (t, r)
    return default if best is None else best[0]


def accuracy(scores, labels, threshold=0.5):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if len(s) == 0:
        raise MetricError("no records")
    return float(np.mean((s > threshold).astype(np.int64) == y))
