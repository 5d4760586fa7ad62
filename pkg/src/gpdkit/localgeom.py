"""Surface normals and curvature axes from point neighborhoods."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spatial import SpatialHash

DEFAULT_RADIUS = 0.01
MIN_NEIGHBORS = 20
# below this normal curvature (1/m) a patch counts as planar
FLAT_CURVATURE = 0.5


class FrameError(ValueError):
    pass


class TooFewNeighbors(FrameError):
    pass


class DegenerateNeighborhood(FrameError):
    pass


@dataclass(frozen=True, eq=False)
class LocalFrame:
    origin: np.ndarray
    normal: np.ndarray
    curvature_axis: np.ndarray
    binormal: np.ndarray
    neighborhood_count: int

    @property
    def rotation(self):
        """Columns (normal, curvature_axis, binormal)."""
        return np.column_stack([self.normal, self.curvature_axis, self.binormal])

    def to_dict(self):
        return {
            "origin": self.origin.tolist(),
            "normal": self.normal.tolist(),
            "curvature_axis": self.curvature_axis.tolist(),
            "binormal": self.binormal.tolist(),
            "neighborhood_count": int(self.neighborhood_count),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["origin"], float),
            np.asarray(d["normal"], float),
            np.asarray(d["curvature_axis"], float),
            np.asarray(d["binormal"], float),
            int(d["neighborhood_count"]),
        )


def canonical_sign(v, tol=1e-9):
    """Flip ``v`` so its first non-negligible component is positive."""
    for c in v:
        if abs(c) > tol:
            return v if c > 0 else -v
    return v


def orient_toward(normal, point, viewpoints):
    """Point ``normal`` to the side of the viewpoint it is most aligned with."""
    if len(viewpoints) == 0:
        return normal
    dots = (np.asarray(viewpoints) - point) @ normal
    best = dots[np.argmax(np.abs(dots))]
    return -normal if best < 0 else normal


class CloudGeometry:
    """Cached spatial index and per-point normals for one cloud."""

    def __init__(self, cloud, radius=DEFAULT_RADIUS):
        self.cloud = cloud
        self.radius = radius
        self.index = SpatialHash(cloud.points, radius)
        self._normals = None

    @property
    def normals(self):
        if self._normals is None:
            self._normals = estimate_normals(self.cloud, self.radius, index=self.index)
        return self._normals

    def frame(self, point_index, min_neighbors=MIN_NEIGHBORS):
        return estimate_frame(self.cloud, point_index, self.radius, min_neighbors, index=self.index)


def _point_viewpoints(cloud, i):
    return cloud.viewpoint_positions[cloud.view_mask[i]]


def estimate_frame(cloud, point_index, radius=DEFAULT_RADIUS, min_neighbors=MIN_NEIGHBORS, index=None):
    """Darboux frame at one cloud point.

    The normal is the least-variance direction of the neighborhood scatter,
    turned toward the point's viewpoint. The curvature axis is the tangent
    direction of least absolute normal curvature, taken from a quadric fit
    of the height field over the tangent plane.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if index is None:
        index = SpatialHash(cloud.points, radius)
    p = cloud.points[point_index]
    nbrs = index.query(p, radius)
    if len(nbrs) < max(min_neighbors, 3):
        raise TooFewNeighbors(f"too few neighbors: {len(nbrs)} < {min_neighbors}")
    q = cloud.points[nbrs]
    centered = q - q.mean(axis=0)
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    scale = max(evals[2], 1e-300)
    if evals[1] <= 1e-10 * scale:
        raise DegenerateNeighborhood("degenerate scatter: neighbors are collinear")
    normal = orient_toward(evecs[:, 0], p, _point_viewpoints(cloud, point_index))
    t1, t2 = evecs[:, 2], np.cross(normal, evecs[:, 2])

    d = q - p
    u, w, h = d @ t1, d @ t2, d @ normal
    design = np.column_stack([u * u, u * w, w * w, u, w, np.ones_like(u)])
    coef, *_ = np.linalg.lstsq(design, h, rcond=None)
    a, b, c = coef[:3]
    shape = np.array([[2 * a, b], [b, 2 * c]])
    kvals, kvecs = np.linalg.eigh(shape)
    if np.max(np.abs(kvals)) < FLAT_CURVATURE:
        axis = t1
    else:
        k = np.argmin(np.abs(kvals))
        axis = kvecs[0, k] * t1 + kvecs[1, k] * t2
    axis = axis - (axis @ normal) * normal
    axis = canonical_sign(axis / np.linalg.norm(axis))
    binormal = np.cross(normal, axis)
    return LocalFrame(p.copy(), normal, axis, binormal / np.linalg.norm(binormal), len(nbrs))


def estimate_normals(cloud, radius=DEFAULT_RADIUS, index=None):
    """Unit normal for every point, oriented toward the point's viewpoints.

    Points whose neighborhood cannot support a plane fit fall back to the
    unit direction toward their first viewpoint.
    """
    n = len(cloud)
    out = np.zeros((n, 3))
    if n == 0:
        return out
    if index is None:
        index = SpatialHash(cloud.points, radius)
    vps = cloud.viewpoint_positions
    for i, nbrs in enumerate(index.query_all(radius)):
        p = cloud.points[i]
        normal = None
        if len(nbrs) >= 3:
            q = cloud.points[nbrs]
            c = q - q.mean(axis=0)
            evals, evecs = np.linalg.eigh(c.T @ c)
            if evals[1] > 1e-10 * max(evals[2], 1e-300):
                normal = evecs[:, 0]
        own = vps[cloud.view_mask[i]]
        if normal is None:
            to_view = own[0] - p
            normal = to_view / np.linalg.norm(to_view)
        out[i] = orient_toward(normal, p, own)
    return out
