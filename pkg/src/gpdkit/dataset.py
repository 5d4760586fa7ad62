"""Labeled grasp-image datasets and their on-disk format.

A dataset directory holds ``manifest.json`` and a flat little-endian
float32 blob (``data.bin``), record-major and channel-major within a
record, i.e. each record is stored as C x H x W.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .encode import SUBSET_OF_FIFTEEN, Variant

MANIFEST = "manifest.json"
BLOB = "data.bin"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    """Record indices of the train and test sides."""

    train: tuple
    test: tuple

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(int(i) for i in self.train))
        object.__setattr__(self, "test", tuple(int(i) for i in self.test))
        if set(self.train) & set(self.test):
            raise DatasetError("a record is on both sides of the split")

    def to_dict(self):
        return {"train": list(self.train), "test": list(self.test)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["train"], d["test"])


@dataclass(eq=False)
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) int64 in {0, 1}
    objects: list
    view_ids: list  # per record, tuple of viewpoint ids of its view pair
    variant: Variant

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.variant = Variant(self.variant)
        self.view_ids = [tuple(int(i) for i in v) for v in self.view_ids]
        self.objects = [str(o) for o in self.objects]
        n = len(self.labels)
        if self.images.shape[0] != n or len(self.objects) != n or len(self.view_ids) != n:
            raise DatasetError("record count mismatch")
        if n and self.images.shape[1] != self.variant.channels:
            raise DatasetError("channel count does not match variant")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise DatasetError("labels must be 0 or 1")

    def __len__(self):
        return len(self.labels)

    @property
    def channels(self):
        return self.variant.channels

    @property
    def groups(self):
        """(object, view ids) key of each record."""
        return [(o, v) for o, v in zip(self.objects, self.view_ids)]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices],
                       [self.objects[i] for i in indices], [self.view_ids[i] for i in indices],
                       self.variant)

    def as_variant(self, variant):
        """Channel subset of a 15-channel dataset (TWELVE or THREE_CURVATURE)."""
        variant = Variant(variant)
        if variant is self.variant:
            return self
        if self.variant is not Variant.FIFTEEN or variant not in SUBSET_OF_FIFTEEN:
            raise DatasetError(f"cannot derive {variant.value} from {self.variant.value}")
        imgs = np.ascontiguousarray(self.images[:, SUBSET_OF_FIFTEEN[variant]])
        return Dataset(imgs, self.labels, self.objects, self.view_ids, variant)

    @staticmethod
    def concatenate(parts, variant=None):
        parts = [p for p in parts if len(p)]
        if not parts:
            return Dataset.empty(variant or Variant.FIFTEEN)
        return Dataset(np.concatenate([p.images for p in parts]),
                       np.concatenate([p.labels for p in parts]),
                       sum((p.objects for p in parts), []),
                       sum((p.view_ids for p in parts), []),
                       parts[0].variant)

    @staticmethod
    def empty(variant, size=60):
        variant = Variant(variant)
        return Dataset(np.zeros((0, variant.channels, size, size), np.float32), np.zeros(0, np.int64),
                       [], [], variant)

    # --- serialization --------------------------------------------------

    def manifest(self):
        n, c, h, w = self.images.shape if len(self) else (0, self.channels, 60, 60)
        return {
            "count": int(n),
            "channels": int(c),
            "width": int(w),
            "height": int(h),
            "variant": self.variant.value,
            "dtype": "<f4",
            "layout": "record,channel,row,col",
            "blob": BLOB,
            "records": [
                {"object": o, "view_ids": list(v), "label": int(l)}
                for o, v, l in zip(self.objects, self.view_ids, self.labels)
            ],
        }

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        self.images.astype("<f4").tofile(os.path.join(directory, BLOB))
        with open(os.path.join(directory, MANIFEST), "w") as fh:
            json.dump(self.manifest(), fh, indent=1)
        return directory

    @classmethod
    def load(cls, directory, mmap=False):
        path = os.path.join(directory, MANIFEST)
        if not os.path.exists(path):
            raise DatasetError(f"no dataset manifest at {path}")
        with open(path) as fh:
            meta = json.load(fh)
        shape = (meta["count"], meta["channels"], meta["height"], meta["width"])
        blob = os.path.join(directory, meta.get("blob", BLOB))
        expected = int(np.prod(shape)) * 4
        if os.path.getsize(blob) != expected:
            raise DatasetError(f"blob size {os.path.getsize(blob)} != expected {expected}")
        if mmap and shape[0]:
            images = np.memmap(blob, dtype="<f4", mode="r", shape=shape)
        else:
            images = np.fromfile(blob, dtype="<f4").reshape(shape)
        recs = meta["records"]
        if len(recs) != shape[0]:
            raise DatasetError("manifest record list does not match count")
        return cls(images, [r["label"] for r in recs], [r["object"] for r in recs],
                   [r["view_ids"] for r in recs], meta["variant"])
