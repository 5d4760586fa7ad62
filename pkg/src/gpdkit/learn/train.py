"""Momentum SGD with weight decay, the training loop and batched inference."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..dataset import Dataset, SplitSpec
from .model import Architecture, CnnModel, ModelError, forward, load_model

PREDICT_CHUNK = 128


class DivergenceError(RuntimeError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    learning_rate: float = 0.00025
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 64
    max_iterations: int = 5000
    lr_schedule: str = "inv"  # "inv" or "fixed"
    gamma: float = 1e-4
    power: float = 0.75
    seed: int = 0

    def __post_init__(self):
        # zero is allowed: it turns backward_step into a null update
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.lr_schedule not in ("inv", "fixed"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def rate(self, iteration):
        if self.lr_schedule == "fixed":
            return self.learning_rate
        return self.learning_rate * (1.0 + self.gamma * iteration) ** (-self.power)


def backward_step(model: CnnModel, batch, labels, solver: SolverConfig):
    """One update v = mu v + lr (g + wd w); w -= v. Updates ``model`` in place."""
    loss, grads = model.gradients(batch, labels)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss at iteration {model.iteration}")
    lr = model.dtype.type(solver.rate(model.iteration))
    mu = model.dtype.type(solver.momentum)
    wd = model.dtype.type(solver.weight_decay)
    for k, w in model.params.items():
        g = grads[k]
        if wd:
            g = g + wd * w
        v = model.velocity[k]
        v *= mu
        v += lr * g
        w -= v
    model.iteration += 1
    return model, loss


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)  # (iteration, loss, test_accuracy)

    def losses(self):
        return [r[1] for r in self.rows if not math.isnan(r[1])]

    def accuracies(self):
        return [(r[0], r[2]) for r in self.rows if not math.isnan(r[2])]

    def first_reaching(self, accuracy):
        """First logged iteration whose test accuracy is >= ``accuracy`` (None if never)."""
        for it, acc in self.accuracies():
            if acc >= accuracy:
                return it
        return None

    def accuracy_at(self, iteration):
        for it, acc in self.accuracies():
            if it == iteration:
                return acc
        raise KeyError(iteration)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "loss", "test_accuracy"])
            for it, loss, acc in self.rows:
                w.writerow([it, _fmt(loss), _fmt(acc)])

    @classmethod
    def read_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append((int(r["iteration"]), _parse(r["loss"]), _parse(r["test_accuracy"])))
        return cls(rows)


def _fmt(x):
    return "" if math.isnan(x) else repr(float(x))


def _parse(s):
    return float(s) if s else math.nan


def nhwc(images):
    return np.ascontiguousarray(np.asarray(images).transpose(0, 2, 3, 1))


def accuracy(model, images_nhwc, labels):
    p = predict_array(model, images_nhwc)
    return float(np.mean((p[:, 1] > p[:, 0]).astype(np.int64) == labels))


def predict_array(model, images_nhwc):
    out = [forward(model, images_nhwc[i:i + PREDICT_CHUNK])
           for i in range(0, len(images_nhwc), PREDICT_CHUNK)]
    return np.concatenate(out) if out else np.zeros((0, 2))


def predict_scores(model: CnnModel, images) -> list:
    """Positive-class probability per image, in input order.

    ``images`` is a list of GraspImage or an (N, H, W, C) array.
    """
    if isinstance(images, np.ndarray):
        arr = images
    else:
        images = list(images)
        if not images:
            return []
        arr = np.stack([g.channels for g in images])
    if arr.ndim != 4 or arr.shape[-1] != model.channels:
        raise ModelError(f"images have {arr.shape[-1] if arr.ndim == 4 else '?'} channels, "
                         f"model expects {model.channels}")
    return [float(s) for s in predict_array(model, arr)[:, 1]]


def _initial_model(init, channels, size, seed):
    if init is None or init == "random":
        return CnnModel.random(Architecture(channels, input_size=size), seed=seed)
    model = init.copy() if isinstance(init, CnnModel) else load_model(os.fspath(init))
    if model.channels != channels:
        raise ModelError(f"warm-start model expects {model.channels} channels, data has {channels}")
    if model.arch.input_size != size:
        raise ModelError(f"warm-start model expects {model.arch.input_size}px images, data has {size}")
    return model.reset_solver()


def train(dataset: Dataset, split: SplitSpec, solver: SolverConfig = SolverConfig(), init=None,
          test_interval=100, progress=None, stop=None):
    """Train on ``split.train`` for ``solver.max_iterations`` updates.

    ``init`` is None/"random", a model file path or a CnnModel to warm start
    from (its solver state is reset). Test accuracy is logged at iteration 0,
    every ``test_interval`` updates and at the end. ``stop(iteration, loss,
    accuracy)`` is consulted at each test point; returning True ends training.
    """
    tr = np.asarray(split.train, dtype=np.int64)
    te = np.asarray(split.test, dtype=np.int64)
    if len(tr) == 0 or len(te) == 0:
        raise SplitError("empty split side")
    if len(np.unique(dataset.labels[tr])) < 2:
        raise SplitError("train side lacks one of the classes")
    model = _initial_model(init, dataset.channels, dataset.images.shape[2], solver.seed)
    rng = np.random.default_rng(solver.seed)
    x_test = nhwc(dataset.images[te])
    y_test = dataset.labels[te]
    y_train = dataset.labels
    log = TrainingLog()
    log.rows.append((0, math.nan, accuracy(model, x_test, y_test)))
    order, pos = rng.permutation(tr), 0
    for it in range(1, solver.max_iterations + 1):
        idx = []
        while len(idx) < solver.batch_size:
            take = order[pos:pos + solver.batch_size - len(idx)]
            idx.extend(take)
            pos += len(take)
            if pos >= len(order):
                order, pos = rng.permutation(tr), 0
        idx = np.asarray(idx)
        _, loss = backward_step(model, nhwc(dataset.images[idx]), y_train[idx], solver)
        acc = math.nan
        if it % test_interval == 0 or it == solver.max_iterations:
            acc = accuracy(model, x_test, y_test)
            if progress:
                progress(it, loss, acc)
        log.rows.append((it, loss, acc))
        if stop is not None and not math.isnan(acc) and stop(it, loss, acc):
            break
    return model, log
