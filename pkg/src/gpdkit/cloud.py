"""Point clouds tagged with the viewpoints they were observed from.

Coordinates are meters in a right-handed world frame with +z up.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from plyfile import PlyData, PlyElement


class CloudError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Viewpoint:
    id: int
    position: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise CloudError(f"viewpoint {self.id} has non-finite position")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "id", int(self.id))

    def __repr__(self):
        return f"Viewpoint(id={self.id}, position={self.position.tolist()})"


@dataclass(frozen=True, eq=False)
class CloudWithViewpoints:
    """Points plus the viewpoints each point was seen from.

    ``view_mask[i, k]`` is True when point ``i`` was observed from
    ``viewpoints[k]``. Every row has at least one True entry.
    """

    points: np.ndarray
    view_mask: np.ndarray
    viewpoints: tuple = field(default_factory=tuple)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        vps = tuple(self.viewpoints)
        mask = np.asarray(self.view_mask, dtype=bool)
        if mask.size != len(pts) * len(vps):
            raise CloudError("view mask shape does not match points x viewpoints")
        mask = mask.reshape(len(pts), len(vps))
        if len({v.id for v in vps}) != len(vps):
            raise CloudError("duplicate viewpoint ids")
        if not np.all(np.isfinite(pts)):
            raise CloudError("cloud contains non-finite coordinates")
        if len(pts) and not mask.any(axis=1).all():
            raise CloudError("every point needs at least one viewpoint")
        pts.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "view_mask", mask)
        object.__setattr__(self, "viewpoints", vps)

    def __len__(self):
        return len(self.points)

    @property
    def viewpoint_ids(self):
        return [v.id for v in self.viewpoints]

    @property
    def viewpoint_positions(self):
        if not self.viewpoints:
            return np.zeros((0, 3))
        return np.stack([v.position for v in self.viewpoints])

    def view_of(self, index):
        """Set of viewpoint ids that observed point ``index``."""
        ids = self.viewpoint_ids
        return frozenset(ids[k] for k in np.flatnonzero(self.view_mask[index]))

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return CloudWithViewpoints(self.points[indices], self.view_mask[indices], self.viewpoints)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 0), dtype=bool), ())

    @classmethod
    def single_view(cls, points, viewpoint):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(points, np.ones((len(points), 1), dtype=bool), (viewpoint,))


@dataclass(frozen=True, eq=False)
class RegionOfInterest:
    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64).reshape(-1))
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def validate(self, cloud):
        if len(self.indices) and (self.indices[0] < 0 or self.indices[-1] >= len(cloud)):
            raise CloudError("region of interest index out of range")

    @classmethod
    def all(cls, cloud):
        return cls(np.arange(len(cloud)))


def merge_clouds(a: CloudWithViewpoints, b: CloudWithViewpoints) -> CloudWithViewpoints:
    """Disjoint union of two clouds expressed in the same world frame.

    Viewpoints of ``b`` are re-numbered after the largest id of ``a`` so the
    merged id set never collides. Duplicate points are kept.
    """
    if len(b) == 0 and not b.viewpoints:
        return a
    if len(a) == 0 and not a.viewpoints:
        return b
    next_id = max(a.viewpoint_ids, default=-1) + 1
    renamed = tuple(Viewpoint(next_id + k, v.position) for k, v in enumerate(b.viewpoints))
    ka, kb = a.view_mask.shape[1], b.view_mask.shape[1]
    mask = np.zeros((len(a) + len(b), ka + kb), dtype=bool)
    mask[: len(a), :ka] = a.view_mask
    mask[len(a):, ka:] = b.view_mask
    return CloudWithViewpoints(np.vstack([a.points, b.points]), mask, a.viewpoints + renamed)


def voxel_cells(points, leaf):
    return np.floor(np.asarray(points) / leaf).astype(np.int64)


def voxel_downsample(cloud: CloudWithViewpoints, leaf: float) -> CloudWithViewpoints:
    """Replace the points of every occupied ``leaf`` cell by their centroid.

    The output point observes the union of its members' viewpoints.
    """
    if not leaf > 0:
        raise CloudError("leaf size must be positive")
    if len(cloud) == 0:
        return cloud
    cells = voxel_cells(cloud.points, leaf)
    _, first, inverse, counts = np.unique(
        cells, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    # keep output in order of first appearance so results do not depend on cell hashing
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    slot = rank[inverse]
    n = len(order)
    sums = np.zeros((n, 3))
    np.add.at(sums, slot, cloud.points)
    centroids = sums / counts[order][:, None]
    mask = np.zeros((n, cloud.view_mask.shape[1]), dtype=bool)
    np.logical_or.at(mask, slot, cloud.view_mask)
    return CloudWithViewpoints(centroids, mask, cloud.viewpoints)


# --- file I/O -------------------------------------------------------------

def sidecar_path(path):
    root, _ = os.path.splitext(str(path))
    return root + ".views.json"


def _read_ply_xyz(path):
    try:
        ply = PlyData.read(str(path))
    except Exception as exc:  # plyfile raises a variety of types
        raise CloudError(f"cannot read PLY file {path}: {exc}") from exc
    if "vertex" not in ply:
        raise CloudError(f"PLY file {path} has no vertex element")
    v = ply["vertex"]
    if len(v.data) == 0:
        return np.zeros((0, 3))
    return np.column_stack([np.asarray(v[c], dtype=np.float64) for c in ("x", "y", "z")])


def _read_pcd_xyz(path):
    with open(path, "r", errors="replace") as fh:
        lines = fh.read().splitlines()
    fields, data_at = None, None
    for i, line in enumerate(lines):
        tok = line.strip().split()
        if not tok or tok[0].startswith("#"):
            continue
        key = tok[0].upper()
        if key == "FIELDS":
            fields = [t.lower() for t in tok[1:]]
        elif key == "DATA":
            if len(tok) < 2 or tok[1].lower() != "ascii":
                raise CloudError(f"only ASCII PCD is supported: {path}")
            data_at = i + 1
            break
    if fields is None or data_at is None or not {"x", "y", "z"} <= set(fields):
        raise CloudError(f"malformed PCD header in {path}")
    cols = [fields.index(c) for c in ("x", "y", "z")]
    rows = []
    for line in lines[data_at:]:
        tok = line.split()
        if not tok:
            continue
        try:
            rows.append([float(tok[c]) for c in cols])
        except (IndexError, ValueError):
            rows.append([np.nan] * 3)
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def read_points(path):
    """Raw xyz records from a PLY or ASCII PCD file (non-finite rows kept)."""
    path = str(path)
    if not os.path.exists(path):
        raise CloudError(f"no such file: {path}")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ply":
        return _read_ply_xyz(path)
    if ext == ".pcd":
        return _read_pcd_xyz(path)
    raise CloudError(f"unsupported cloud format: {ext or path}")


def load_cloud(path, viewpoint: Viewpoint | None = None) -> CloudWithViewpoints:
    """Load a cloud, dropping non-finite records.

    With ``viewpoint`` every point is tagged with it; otherwise the JSON
    sidecar written by :func:`save_cloud` supplies the viewpoint data.
    """
    raw = read_points(path)
    keep = np.all(np.isfinite(raw), axis=1)
    if viewpoint is not None:
        mask = np.ones((len(raw), 1), dtype=bool)
        viewpoints = (viewpoint,)
    else:
        side = sidecar_path(path)
        if not os.path.exists(side):
            raise CloudError(f"no viewpoint given and no sidecar found for {path}")
        with open(side) as fh:
            meta = json.load(fh)
        viewpoints = tuple(Viewpoint(v["id"], v["position"]) for v in meta["viewpoints"])
        col = {v.id: k for k, v in enumerate(viewpoints)}
        view_of = meta["view_of"]
        if len(view_of) != len(raw):
            raise CloudError(f"sidecar {side} lists {len(view_of)} points, file has {len(raw)}")
        mask = np.zeros((len(raw), len(viewpoints)), dtype=bool)
        for i, ids in enumerate(view_of):
            for vid in ids:
                if vid not in col:
                    raise CloudError(f"sidecar references unknown viewpoint {vid}")
                mask[i, col[vid]] = True
    if not keep.any():
        raise CloudError(f"zero valid points in {path}")
    return CloudWithViewpoints(raw[keep], mask[keep], viewpoints)


def save_cloud(path, cloud: CloudWithViewpoints, binary=True):
    """Write ``cloud`` as PLY (float32 xyz) plus the viewpoint sidecar."""
    path = str(path)
    verts = np.empty(len(cloud), dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4")])
    verts["x"], verts["y"], verts["z"] = cloud.points.T
    el = PlyElement.describe(verts, "vertex")
    PlyData([el], text=not binary, byte_order="<").write(path)
    ids = cloud.viewpoint_ids
    meta = {
        "viewpoints": [{"id": v.id, "position": v.position.tolist()} for v in cloud.viewpoints],
        "view_of": [[ids[k] for k in np.flatnonzero(row)] for row in cloud.view_mask],
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh)
    return path
