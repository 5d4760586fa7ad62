"""Dataset construction from meshes: render, sample, label, balance, encode."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..candgen import HandGeometry, sample_candidates
from ..cloud import RegionOfInterest
from ..dataset import Dataset
from ..encode import GRID_SIZE, OCCLUSION_RADIUS, Variant, build_grid, encode_channels
from ..localgeom import CloudGeometry
from .antipodal import AntipodalParams, analyze_candidate
from .mesh import sample_surface
from .render import EmptyRender, Intrinsics, stereo_render

log = logging.getLogger(__name__)


@dataclass
class RenderSettings:
    baseline_angle: float = 53.0
    distance: float = 0.6
    elevation: float = 30.0
    view_pairs: int = 4
    azimuth_offset: float = 0.0
    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    depth_noise: float = 0.0


@dataclass
class BuildStats:
    skipped_meshes: int = 0
    diagnostics: list = field(default_factory=list)
    keep_candidates: bool = False
    candidates: list = field(default_factory=list)  # (object, candidate, label) when kept

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for row in self.diagnostics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def view_pair_azimuths(settings: RenderSettings):
    step = 360.0 / settings.view_pairs
    return [settings.azimuth_offset + k * step for k in range(settings.view_pairs)]


def _mesh_records(mesh_index, mesh, hand, params, per_mesh, variant, balance, seed, render,
                  n_orientations, size, occlusion_radius):
    """Labeled (and balanced) records of one mesh, encoded in a fixed order."""
    samples = sample_surface(mesh, params.sample_density, seed=seed + 7919 * mesh_index)
    per_view = max(1, math.ceil(per_mesh / render.view_pairs))
    # oversample points: many orientations get discarded
    n_samples = max(4, math.ceil(2.0 * per_view / n_orientations))
    items = []
    counts = {"object": mesh.name, "candidates": 0, "positives": 0, "negatives": 0}
    for p, az in enumerate(view_pair_azimuths(render)):
        vids = (2 * p, 2 * p + 1)
        try:
            cloud = stereo_render(mesh, render.baseline_angle, render.distance, render.intrinsics,
                                  render.elevation, az, vids, render.depth_noise,
                                  seed=seed + 31 * p)
        except EmptyRender:
            continue
        geom = CloudGeometry(cloud)
        cands = sample_candidates(cloud, RegionOfInterest.all(cloud), hand, n_samples, n_orientations,
                                  seed=seed + 1000 * mesh_index + p, geometry=geom)[:per_view]
        for c in cands:
            res = analyze_candidate(mesh, c, hand, params, samples)
            items.append((cloud, geom, c, int(res.positive), vids))
    counts["candidates"] = len(items)
    labels = np.array([it[3] for it in items], dtype=np.int64)
    counts["positives"] = int(labels.sum())
    counts["negatives"] = int(len(labels) - labels.sum())
    keep = np.arange(len(items))
    if balance and len(items):
        rng = np.random.default_rng([seed, mesh_index])
        pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
        m = min(len(pos), len(neg))
        keep = np.sort(np.concatenate([rng.choice(pos, m, replace=False),
                                       rng.choice(neg, m, replace=False)]))
    counts["kept"] = int(len(keep))
    c = Variant(variant).channels
    images = np.zeros((len(keep), c, size, size), dtype=np.float32)
    for row, k in enumerate(keep):
        cloud, geom, cand, _, _ = items[k]
        grid = build_grid(cloud, cand, geom.normals, size, occlusion_radius)
        images[row] = encode_channels(grid, variant).transpose(2, 0, 1)
    ds = Dataset(images, labels[keep], [mesh.name] * len(keep), [items[k][4] for k in keep], variant)
    labeled = [(mesh.name, it[2], it[3]) for it in items]
    return ds, counts, labeled


def build_dataset(meshes, hand=HandGeometry(), params=AntipodalParams(), per_mesh_candidates=400,
                  variant=Variant.FIFTEEN, balance=True, seed=0, render=None, n_orientations=8,
                  size=GRID_SIZE, occlusion_radius=OCCLUSION_RADIUS, threads=1, stats=None):
    """Render, sample, label and encode ``per_mesh_candidates`` grasps per mesh.

    With ``balance`` the majority class of each object is subsampled to
    parity. Record order is (mesh index, view pair, candidate index) no
    matter how many worker threads run.
    """
    render = render or RenderSettings()
    stats = stats if stats is not None else BuildStats()

    def work(args):
        i, mesh = args
        return _mesh_records(i, mesh, hand, params, per_mesh_candidates, variant, balance, seed,
                             render, n_orientations, size, occlusion_radius)

    jobs = list(enumerate(meshes))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    parts = []
    for ds, counts, labeled in results:
        stats.diagnostics.append(counts)
        if stats.keep_candidates:
            stats.candidates += labeled
        if counts["candidates"] == 0:
            stats.skipped_meshes += 1
            log.warning("mesh %s yielded no candidates; skipped", counts["object"])
            continue
        parts.append(ds)
    out = Dataset.concatenate(parts, variant)
    if not len(out):
        out = Dataset.empty(variant, size)
    return out
