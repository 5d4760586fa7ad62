"""Test-side evaluation of a classifier and its JSON / CSV report."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset, SplitSpec
from ..learn.model import CnnModel
from ..learn.train import nhwc, predict_scores
from .metrics import MetricError, PrCurve, accuracy, pr_curve, recall_at_precision

EVAL_CHUNK = 256


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    curve: PrCurve
    rahp: float
    min_precision: float
    n_test: int
    n_positive: int

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "rahp": self.rahp,
            "min_precision": self.min_precision,
            "n_test": self.n_test,
            "n_positive": self.n_positive,
            "curve": [list(p) for p in self.curve.points],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "precision", "recall"])
            for t, p, r in self.curve.points:
                w.writerow([repr(t), repr(p), repr(r)])


def score_dataset(model, dataset: Dataset, indices):
    """Positive-class scores for ``dataset`` records ``indices``.

    ``model`` is a CnnModel or a callable mapping an (N, C, H, W) array
    to N scores.
    """
    idx = np.asarray(indices, dtype=np.int64)
    out = []
    for i in range(0, len(idx), EVAL_CHUNK):
        imgs = dataset.images[idx[i:i + EVAL_CHUNK]]
        if isinstance(model, CnnModel):
            out.extend(predict_scores(model, nhwc(imgs)))
        else:
            out.extend(float(s) for s in np.asarray(model(imgs)).reshape(-1))
    return np.asarray(out, dtype=np.float64)


def evaluate_model(model, dataset: Dataset, split: SplitSpec, min_precision=0.99) -> EvalReport:
    test = np.asarray(split.test, dtype=np.int64)
    if len(test) == 0:
        raise MetricError("empty test side")
    scores = score_dataset(model, dataset, test)
    labels = dataset.labels[test]
    curve = pr_curve(scores, labels)
    return EvalReport(accuracy(scores, labels), curve, recall_at_precision(curve, min_precision),
                      min_precision, len(test), int(labels.sum()))
