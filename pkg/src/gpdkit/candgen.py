"""Grasp candidate sampling: rotate about the curvature axis, push to contact.

Hand frame convention: x is the approach direction, y the curvature axis
and z the closing direction of the fingers. The origin sits at the center
of the palm face, so the closing region spans ``x in [0, finger_depth]``,
``|y| <= hand_height / 2`` and ``|z| <= aperture / 2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .cloud import RegionOfInterest
from .localgeom import CloudGeometry, FrameError, LocalFrame

PUSH_STEP = 0.002
CONTACT_INFLATION = 0.001
INTERIOR_MARGIN = 1e-9  # enclosed points must clear the closing-region faces by this much


@dataclass(frozen=True)
class HandGeometry:
    finger_width: float = 0.01
    finger_depth: float = 0.06
    hand_height: float = 0.02
    aperture_min: float = 0.005
    aperture_max: float = 0.07

    def __post_init__(self):
        vals = (self.finger_width, self.finger_depth, self.hand_height, self.aperture_min, self.aperture_max)
        if not all(v > 0 for v in vals):
            raise ValueError("hand dimensions must be positive")
        if not self.aperture_min < self.aperture_max:
            raise ValueError("aperture_min must be below aperture_max")

    def bodies(self, aperture=None, inflate=0.0):
        """Axis-aligned boxes (lo, hi) of the fingers and palm in the hand frame."""
        a = self.aperture_max if aperture is None else aperture
        fw, fd, hh = self.finger_width, self.finger_depth, self.hand_height / 2
        e = inflate
        left = (np.array([-e, -hh - e, a / 2 - e]), np.array([fd + e, hh + e, a / 2 + fw + e]))
        right = (np.array([-e, -hh - e, -a / 2 - fw - e]), np.array([fd + e, hh + e, -a / 2 + e]))
        palm = (np.array([-fw - e, -hh - e, -a / 2 - fw - e]), np.array([e, hh + e, a / 2 + fw + e]))
        return {"finger_left": left, "finger_right": right, "palm": palm}

    def closing_box(self, aperture=None):
        a = self.aperture_max if aperture is None else aperture
        return (np.array([0.0, -self.hand_height / 2, -a / 2]),
                np.array([self.finger_depth, self.hand_height / 2, a / 2]))


@dataclass(frozen=True, eq=False)
class ClosingRegion:
    center: np.ndarray
    axes: np.ndarray  # columns are the box axes
    half_extents: np.ndarray

    def contains(self, points, strict=True):
        local = (np.asarray(points) - self.center) @ self.axes
        if strict:
            return np.all(np.abs(local) < self.half_extents, axis=1)
        return np.all(np.abs(local) <= self.half_extents, axis=1)


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    rotation: np.ndarray  # hand -> world, columns (approach, curvature axis, closing axis)
    translation: np.ndarray
    frame: LocalFrame
    aperture: float
    finger_depth: float
    hand_height: float
    sample_index: int = -1
    orientation_index: int = -1
    width: float = 0.0  # extent of enclosed cloud points along the closing axis

    @property
    def approach(self):
        return self.rotation[:, 0]

    @property
    def closing_axis(self):
        return self.rotation[:, 2]

    @property
    def pose(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @property
    def closing_region(self):
        center = self.translation + self.rotation[:, 0] * (self.finger_depth / 2)
        half = np.array([self.finger_depth / 2, self.hand_height / 2, self.aperture / 2])
        return ClosingRegion(center, self.rotation.copy(), half)

    def to_hand(self, points):
        return (np.asarray(points) - self.translation) @ self.rotation

    def with_translation(self, t):
        return GraspCandidate(self.rotation, np.asarray(t, float), self.frame, self.aperture,
                              self.finger_depth, self.hand_height, self.sample_index,
                              self.orientation_index, self.width)

    def transformed(self, R, t):
        """The same grasp after applying the rigid motion ``x -> R x + t``."""
        f = self.frame
        frame = LocalFrame(R @ f.origin + t, R @ f.normal, R @ f.curvature_axis, R @ f.binormal,
                           f.neighborhood_count)
        return GraspCandidate(R @ self.rotation, R @ self.translation + t, frame, self.aperture,
                              self.finger_depth, self.hand_height, self.sample_index,
                              self.orientation_index, self.width)

    def to_dict(self):
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "aperture": self.aperture,
            "finger_depth": self.finger_depth,
            "hand_height": self.hand_height,
            "sample_index": int(self.sample_index),
            "orientation_index": int(self.orientation_index),
            "width": self.width,
            "frame": self.frame.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["rotation"], float), np.asarray(d["translation"], float),
                   LocalFrame.from_dict(d["frame"]), float(d["aperture"]), float(d["finger_depth"]),
                   float(d["hand_height"]), int(d.get("sample_index", -1)),
                   int(d.get("orientation_index", -1)), float(d.get("width", 0.0)))


def hand_rotation(frame: LocalFrame, angle):
    """Hand orientation after turning the anti-normal by ``angle`` about the curvature axis."""
    approach = -frame.normal * math.cos(angle) + frame.binormal * math.sin(angle)
    approach /= np.linalg.norm(approach)
    y = frame.curvature_axis
    z = np.cross(approach, y)
    return np.column_stack([approach, y, z / np.linalg.norm(z)])


def orientation_angles(n_orientations):
    return [-math.pi / 2 + k * math.pi / n_orientations for k in range(n_orientations)]


def points_in_box(local, lo, hi):
    return np.all((local >= lo) & (local <= hi), axis=1)


def push_to_contact(points, start, rotation, hand, step=PUSH_STEP, inflate=CONTACT_INFLATION):
    """Slide the open hand along its approach axis until a body touches the cloud.

    Returns the last contact-free palm position, or None if the hand sweep
    never meets a point. The sweep starts with every body behind the
    nearest point along the approach axis.
    """
    rel = (points - start) @ rotation
    bodies = hand.bodies(inflate=inflate)
    hi_all = max(b[1][0] for b in bodies.values())
    # half-step offset keeps the nearest point off the step lattice's contact boundary
    t0 = rel[:, 0].min() - hi_all - 1.5 * step if len(rel) else 0.0
    first = None
    for lo, hi in bodies.values():
        inside = np.all((rel[:, 1:] >= lo[1:]) & (rel[:, 1:] <= hi[1:]), axis=1)
        if not inside.any():
            continue
        x = rel[inside, 0]
        # point x sits inside the body at offset t when x - hi <= t <= x - lo
        k = np.ceil((x - hi[0] - t0) / step)
        k = np.maximum(k, 0)
        hits = t0 + k * step <= x - lo[0]
        if hits.any():
            kmin = int(k[hits].min())
            first = kmin if first is None else min(first, kmin)
    if first is None or first == 0:
        return None
    return start + rotation[:, 0] * (t0 + (first - 1) * step)


def hand_collides(points, rotation, translation, hand, inflate=0.0):
    local = (points - translation) @ rotation
    return any(points_in_box(local, lo, hi).any() for lo, hi in hand.bodies(inflate=inflate).values())


def _sample_order(cloud, roi):
    # sort by coordinates so sampling ignores the storage order of the cloud
    idx = np.asarray(roi.indices)
    pts = cloud.points[idx]
    return idx[np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))]


def sample_candidates(cloud, roi, hand: HandGeometry, n_samples=100, n_orientations=8, seed=0,
                      geometry: CloudGeometry | None = None, step=PUSH_STEP,
                      inflate=CONTACT_INFLATION, min_neighbors=None):
    """Generate grasp candidates from points sampled in ``roi``.

    Each accepted candidate has contact-free fingers and palm, lies one
    push step short of first contact and encloses at least one cloud point
    strictly inside its closing region (by ``INTERIOR_MARGIN``).
    """
    if n_samples < 1 or n_orientations < 1:
        raise ValueError("sample and orientation counts must be positive")
    if roi is None:
        roi = RegionOfInterest.all(cloud)
    roi.validate(cloud)
    if len(roi) == 0 or len(cloud) == 0:
        return []
    geometry = geometry or CloudGeometry(cloud)
    order = _sample_order(cloud, roi)
    rng = np.random.default_rng(seed)
    if n_samples <= len(order):
        picks = order[np.sort(rng.choice(len(order), size=n_samples, replace=False))]
    else:
        picks = order[rng.integers(0, len(order), size=n_samples)]

    frame_kw = {} if min_neighbors is None else {"min_neighbors": min_neighbors}
    points = cloud.points
    lo_c, hi_c = hand.closing_box()
    out = []
    for s, idx in enumerate(picks):
        try:
            frame = geometry.frame(int(idx), **frame_kw)
        except FrameError:
            continue
        for k, angle in enumerate(orientation_angles(n_orientations)):
            R = hand_rotation(frame, angle)
            pos = push_to_contact(points, frame.origin, R, hand, step, inflate)
            if pos is None or hand_collides(points, R, pos, hand, inflate):
                continue
            local = (points - pos) @ R
            # the margin keeps a lone boundary point from flipping under rounding
            inside = np.all((local > lo_c + INTERIOR_MARGIN) & (local < hi_c - INTERIOR_MARGIN), axis=1)
            if not inside.any():
                continue
            zs = local[inside, 2]
            out.append(GraspCandidate(R, pos, frame, hand.aperture_max, hand.finger_depth,
                                      hand.hand_height, s, k, float(zs.max() - zs.min())))
    return out


def write_candidates(path, candidates):
    with open(path, "w") as fh:
        for c in candidates:
            fh.write(json.dumps(c.to_dict()) + "\n")


def read_candidates(path):
    with open(path) as fh:
        return [GraspCandidate.from_dict(json.loads(line)) for line in fh if line.strip()]
