"""Detection (sample, encode, classify, threshold) and utility-based grasp selection."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..candgen import GraspCandidate, HandGeometry, sample_candidates
from ..cloud import RegionOfInterest
from ..encode import GRID_SIZE, OCCLUSION_RADIUS, Variant, build_grid, encode_channels
from ..learn.model import ModelError
from ..learn.train import predict_scores
from ..localgeom import CloudGeometry

UP = np.array([0.0, 0.0, 1.0])


class SelectionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScoredGrasp:
    candidate: GraspCandidate
    score: float
    index: int = 0  # position in the sampler's output

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")

    def to_dict(self):
        return {"index": self.index, "score": self.score, "candidate": self.candidate.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(GraspCandidate.from_dict(d["candidate"]), float(d["score"]), int(d["index"]))


def encode_candidates(cloud, candidates, variant, geometry=None, size=GRID_SIZE,
                      occlusion_radius=OCCLUSION_RADIUS, threads=1):
    """(N, G, G, C) images of ``candidates`` in input order."""
    variant = Variant(variant)
    geometry = geometry or CloudGeometry(cloud)
    normals = geometry.normals

    def one(c):
        return encode_channels(build_grid(cloud, c, normals, size, occlusion_radius), variant)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            imgs = list(pool.map(one, candidates))
    else:
        imgs = [one(c) for c in candidates]
    if not imgs:
        return np.zeros((0, size, size, variant.channels), np.float32)
    return np.stack(imgs)


def detect(cloud, roi, hand: HandGeometry, model, variant, threshold=0.5, n_samples=100,
           n_orientations=8, seed=0, geometry=None, occlusion_radius=OCCLUSION_RADIUS, threads=1):
    """Grasps scoring at least ``threshold``, by descending score then ascending index."""
    variant = Variant(variant)
    if variant.channels != model.channels:
        raise ModelError(f"variant {variant.value} has {variant.channels} channels, "
                         f"model expects {model.channels}")
    roi = roi if roi is not None else RegionOfInterest.all(cloud)
    geometry = geometry or CloudGeometry(cloud)
    cands = sample_candidates(cloud, roi, hand, n_samples, n_orientations, seed, geometry)
    if not cands:
        return []
    images = encode_candidates(cloud, cands, variant, geometry, model.arch.input_size,
                               occlusion_radius, threads)
    scores = predict_scores(model, images)
    out = [ScoredGrasp(c, s, i) for i, (c, s) in enumerate(zip(cands, scores)) if s >= threshold]
    out.sort(key=lambda g: (-g.score, g.index))
    return out


@dataclass(frozen=True)
class SelectionConfig:
    width_min: float = 0.03
    width_max: float = 0.07
    cluster_position_radius: float = 0.02
    cluster_angle_tolerance: float = 15.0  # degrees
    w_height: float = 10.0
    w_width: float = 0.1
    w_vertical_angle: float = 0.5
    w_distance: float = 0.0
    nominal_point: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        w = (self.w_height, self.w_width, self.w_vertical_angle, self.w_distance)
        if not all(math.isfinite(x) for x in w):
            raise ValueError("utility weights must be finite")
        if self.cluster_position_radius <= 0 or self.cluster_angle_tolerance <= 0:
            raise ValueError("cluster radii must be positive")
        if not self.width_max > self.width_min:
            raise ValueError("width_max must exceed width_min")


def cluster_positions(positions, approaches, radius, angle_deg):
    """Each position replaced by the mean of all positions within ``radius``
    whose approach axis is within ``angle_deg`` (one pass, self included)."""
    p = np.asarray(positions, float)
    a = np.asarray(approaches, float)
    d = np.linalg.norm(p[:, None] - p[None], axis=2)
    cosang = np.clip(a @ a.T, -1.0, 1.0)
    near = (d <= radius) & (cosang >= math.cos(math.radians(angle_deg)))
    return (near @ p) / near.sum(axis=1, keepdims=True)


def utilities(positions, approaches, widths, config: SelectionConfig):
    c = config
    norm_w = (np.asarray(widths) - c.width_min) / (c.width_max - c.width_min)
    vertical = np.asarray(approaches) @ -UP
    dist = np.linalg.norm(np.asarray(positions) - np.asarray(c.nominal_point, float), axis=1)
    return (c.w_height * positions[:, 2] + c.w_width * (1.0 - norm_w)
            + c.w_vertical_angle * vertical - c.w_distance * dist)


def select_grasp(grasps, config: SelectionConfig = SelectionConfig()) -> ScoredGrasp:
    """Prune by width, average clustered positions, return the highest-utility grasp.

    The returned grasp carries its averaged position. Ties go to the
    higher classifier score, then the lower index.
    """
    kept = [g for g in grasps if config.width_min <= g.candidate.width <= config.width_max]
    if not kept:
        raise SelectionError("no grasp within the width limits")
    pos = np.array([g.candidate.translation for g in kept])
    app = np.array([g.candidate.approach for g in kept])
    widths = np.array([g.candidate.width for g in kept])
    pos = cluster_positions(pos, app, config.cluster_position_radius, config.cluster_angle_tolerance)
    u = utilities(pos, app, widths, config)
    best = min(range(len(kept)), key=lambda i: (-u[i], -kept[i].score, kept[i].index))
    g = kept[best]
    return ScoredGrasp(g.candidate.with_translation(pos[best]), g.score, g.index)
