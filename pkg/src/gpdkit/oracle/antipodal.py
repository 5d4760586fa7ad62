"""Softened frictionless-antipodal labeling of grasp candidates against a mesh.

Closing is simulated in the hand frame on dense mesh surface samples. Each
finger stops at the first sample inside its footprint; the samples within
``vertex_perturbation`` behind that contact plane form the finger's contact
region. The grasp is positive when one sample from each region has a normal
anti-parallel to its finger's closing motion and the two samples lie on a
line parallel to the closing axis, all within the angular tolerances.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import SurfaceSamples, sample_surface


class Label(enum.IntEnum):
    NEGATIVE = 0
    POSITIVE = 1


@dataclass(frozen=True)
class AntipodalParams:
    vertex_perturbation: float = 0.001
    normal_cone_tolerance: float = 10.0  # degrees
    contact_line_tolerance: float = 10.0  # degrees
    sample_density: float = 1.5e6  # surface samples per square meter

    def __post_init__(self):
        if min(self.vertex_perturbation, self.normal_cone_tolerance, self.contact_line_tolerance) < 0:
            raise ValueError("antipodal parameters must be non-negative")


@dataclass(frozen=True)
class LabelResult:
    label: Label
    reason: str
    gap: float = math.nan
    region_sizes: tuple = (0, 0)

    @property
    def positive(self):
        return self.label is Label.POSITIVE


def hand_frame_samples(samples: SurfaceSamples, candidate):
    R = candidate.rotation
    return (samples.points - candidate.translation) @ R, samples.normals @ R


def analyze_candidate(mesh, candidate, hand, params=AntipodalParams(), samples=None) -> LabelResult:
    if samples is None:
        samples = sample_surface(mesh, params.sample_density)
    q, n = hand_frame_samples(samples, candidate)
    a = candidate.aperture
    fd, hh, fw = hand.finger_depth, hand.hand_height / 2, hand.finger_width
    foot = (q[:, 0] >= 0) & (q[:, 0] <= fd) & (np.abs(q[:, 1]) <= hh)
    az = np.abs(q[:, 2])
    if np.any(foot & (az > a / 2) & (az < a / 2 + fw)):
        return LabelResult(Label.NEGATIVE, "finger_collision")
    between = foot & (az <= a / 2)
    if not between.any():
        return LabelResult(Label.NEGATIVE, "no_contact")
    z = q[between, 2]
    z1, z2 = z.max(), z.min()
    gap = z1 - z2
    if gap < hand.aperture_min or gap > hand.aperture_max:
        return LabelResult(Label.NEGATIVE, "aperture", gap)
    d = params.vertex_perturbation
    idx = np.flatnonzero(between)
    r1 = idx[z >= z1 - d]
    r2 = idx[z <= z2 + d]
    cone = math.cos(math.radians(params.normal_cone_tolerance))
    a1 = r1[n[r1, 2] >= cone]
    a2 = r2[-n[r2, 2] >= cone]
    sizes = (len(r1), len(r2))
    if len(a1) == 0 or len(a2) == 0:
        return LabelResult(Label.NEGATIVE, "normals", gap, sizes)
    if _aligned_pair_exists(q[a1], q[a2], params.contact_line_tolerance):
        return LabelResult(Label.POSITIVE, "antipodal", gap, sizes)
    return LabelResult(Label.NEGATIVE, "contact_line", gap, sizes)


def _aligned_pair_exists(p1, p2, tol_deg):
    """Is there a pair whose difference p1 - p2 is within ``tol_deg`` of +z?"""
    if tol_deg >= 90.0:
        dz = p1[:, 2][:, None] - p2[:, 2][None, :]
        lateral = np.linalg.norm(p1[:, None, :2] - p2[None, :, :2], axis=2)
        ang = np.degrees(np.arctan2(lateral, dz))
        return bool(np.any((ang <= tol_deg) & ((dz != 0) | (lateral != 0))))
    slope = math.tan(math.radians(tol_deg))
    reach = slope * max(p1[:, 2].max() - p2[:, 2].min(), 0.0)
    tree = cKDTree(p2[:, :2])
    for i, near in enumerate(tree.query_ball_point(p1[:, :2], reach * (1 + 1e-9) + 1e-15)):
        if not near:
            continue
        near = np.asarray(near)
        dz = p1[i, 2] - p2[near, 2]
        lateral = np.linalg.norm(p2[near, :2] - p1[i, :2], axis=1)
        if np.any((dz > 0) & (lateral <= slope * dz)):
            return True
    return False


def label_candidate(mesh, candidate, hand, params=AntipodalParams(), samples=None) -> Label:
    """POSITIVE when closing the fingers from ``candidate`` forms a softened antipodal grasp."""
    return analyze_candidate(mesh, candidate, hand, params, samples).label
