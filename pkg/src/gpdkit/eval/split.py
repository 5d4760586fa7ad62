"""Train/test partitions that never split the records of one view pair."""

from __future__ import annotations

import numpy as np

from ..dataset import Dataset, SplitSpec


class SplitError(ValueError):
    pass


def _group_index(dataset: Dataset):
    groups = {}
    for i, g in enumerate(dataset.groups):
        groups.setdefault(g, []).append(i)
    return groups


def split_by_view(dataset: Dataset, test_fraction=0.25, seed=0) -> SplitSpec:
    """Move ``round(test_fraction * g)`` of each object's g view pairs to the test side.

    Objects with at least two view pairs keep at least one on each side.
    Objects with a single view pair stay in training.
    """
    if not 0 < test_fraction < 1:
        raise SplitError("test_fraction must lie in (0, 1)")
    groups = _group_index(dataset)
    if len(groups) < 2:
        raise SplitError("need at least two (object, view pair) groups")
    rng = np.random.default_rng(seed)
    by_object = {}
    for g in sorted(groups):
        by_object.setdefault(g[0], []).append(g)
    test_groups = []
    for obj in sorted(by_object):
        gs = by_object[obj]
        if len(gs) < 2:
            continue
        k = min(max(int(round(test_fraction * len(gs))), 1), len(gs) - 1)
        test_groups += [gs[i] for i in sorted(rng.choice(len(gs), size=k, replace=False))]
    if not test_groups:
        # every object has a single view pair: split whole groups instead
        gs = sorted(groups)
        k = min(max(int(round(test_fraction * len(gs))), 1), len(gs) - 1)
        test_groups = [gs[i] for i in sorted(rng.choice(len(gs), size=k, replace=False))]
    test_set = set(test_groups)
    test = sorted(i for g in test_set for i in groups[g])
    train = sorted(i for g, idx in groups.items() if g not in test_set for i in idx)
    return SplitSpec(train, test)


def leave_one_object_out(dataset: Dataset, test_object=None, seed=0) -> SplitSpec:
    """All records of one object (chosen at random when not given) form the test side."""
    objects = sorted(set(dataset.objects))
    if len(objects) < 2:
        raise SplitError("need at least two objects")
    if test_object is None:
        test_object = objects[int(np.random.default_rng(seed).integers(len(objects)))]
    if test_object not in objects:
        raise SplitError(f"unknown object {test_object!r}")
    test = [i for i, o in enumerate(dataset.objects) if o == test_object]
    train = [i for i, o in enumerate(dataset.objects) if o != test_object]
    return SplitSpec(train, test)
