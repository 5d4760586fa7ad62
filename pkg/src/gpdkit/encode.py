"""Voxel grids of the closing region and their projection images.

The closing region is scaled to the unit cube and voxelized at
``GRID_SIZE`` cells per side. Grid axes follow the hand frame: index 0 is
the approach axis, 1 the curvature axis, 2 the closing axis. Each of the
three projections yields an averaged occupied-height map, an averaged
unobserved-height map and the averaged normal (three channels).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .localgeom import estimate_normals

GRID_SIZE = 60
OCCLUSION_RADIUS = 0.002

AXES = ("approach_x", "curvature_y", "binormal_z")


class Variant(str, enum.Enum):
    FIFTEEN = "FIFTEEN"
    TWELVE = "TWELVE"
    THREE_CURVATURE = "THREE_CURVATURE"
    THREE_APPROACH_KAPPLER = "THREE_APPROACH_KAPPLER"

    @property
    def channels(self):
        return {"FIFTEEN": 15, "TWELVE": 12, "THREE_CURVATURE": 3, "THREE_APPROACH_KAPPLER": 3}[self.value]


# channel indices of the derived variants inside the 15-channel stack
# (per axis: I_o, I_u, I_n x3; axes ordered approach, curvature, binormal)
SUBSET_OF_FIFTEEN = {
    Variant.FIFTEEN: list(range(15)),
    Variant.TWELVE: [c for c in range(15) if c % 5 != 1],
    Variant.THREE_CURVATURE: [7, 8, 9],
}


@dataclass(frozen=True, eq=False)
class CandidateGrid:
    occupancy: np.ndarray  # (G, G, G) bool
    unobserved: np.ndarray  # (G, G, G) bool
    normals: np.ndarray  # (G, G, G, 3) float32, hand frame
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))  # world position of the cube corner
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))  # hand -> world
    extent: np.ndarray = field(default_factory=lambda: np.ones(3))  # box edge lengths, meters

    @property
    def size(self):
        return self.occupancy.shape[0]

    def world_to_unit(self, points):
        return ((np.asarray(points) - self.origin) @ self.rotation) / self.extent

    def cell_centers(self):
        g = self.size
        c = (np.arange(g) + 0.5) / g
        unit = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
        return self.origin + (unit * self.extent) @ self.rotation.T

    @classmethod
    def empty(cls, size=GRID_SIZE):
        return cls(np.zeros((size,) * 3, bool), np.zeros((size,) * 3, bool),
                   np.zeros((size,) * 3 + (3,), np.float32))


@dataclass(frozen=True, eq=False)
class GraspImage:
    channels: np.ndarray  # (G, G, C) float32
    variant: Variant
    candidate_ref: object = None

    def __post_init__(self):
        if self.channels.shape[2] != Variant(self.variant).channels:
            raise ValueError("channel count does not match variant")


def candidate_box(candidate):
    """Corner, rotation and edge lengths of a candidate's closing region."""
    R = candidate.rotation
    lo = np.array([0.0, -candidate.hand_height / 2, -candidate.aperture / 2])
    extent = np.array([candidate.finger_depth, candidate.hand_height, candidate.aperture])
    if np.any(extent <= 0):
        raise ValueError("degenerate closing region")
    return candidate.translation + R @ lo, R, extent


def _camera_basis(forward):
    f = forward / np.linalg.norm(forward)
    helper = np.array([0.0, 0.0, 1.0]) if abs(f[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(f, helper)
    right /= np.linalg.norm(right)
    up = np.cross(right, f)
    return np.stack([right, up, f])


def occluded_from(viewpoint, points, cells, active, radius=OCCLUSION_RADIUS):
    """Whether each active cell center is hidden from ``viewpoint``.

    A cell is hidden when some cloud point lies within ``radius`` of the
    segment from the viewpoint to the cell center and projects onto that
    segment strictly nearer the viewpoint than the cell.
    """
    v = np.asarray(viewpoint, dtype=np.float64)
    pts = np.ascontiguousarray(points, dtype=np.float64)
    cells = np.ascontiguousarray(cells, dtype=np.float64)
    active = np.ascontiguousarray(active, dtype=np.bool_)
    if not active.any() or len(pts) == 0:
        return np.zeros(len(cells), dtype=bool)
    basis = _camera_basis(cells[active].mean(axis=0) - v)
    d = pts - v
    depth = d @ basis[2]
    front = depth > 0
    if front.any():
        z_cut = max(0.5 * np.median(depth[front]), 1e-6)
    else:
        z_cut = np.inf
    bucketed = depth >= z_cut
    reach_coef = radius / z_cut if np.isfinite(z_cut) else 0.0

    uv = np.zeros((len(pts), 2))
    uv[bucketed] = (d[bucketed] @ basis[:2].T) / depth[bucketed, None]
    cell_depth = (cells[active] - v) @ basis[2]
    ok = cell_depth > 0
    cell_uv = ((cells[active][ok] - v) @ basis[:2].T) / cell_depth[ok, None]
    max_r = np.max(np.linalg.norm(cell_uv, axis=1)) if len(cell_uv) else 0.0
    size = max(reach_coef * (1.0 + max_r), 1e-9)
    if bucketed.any():
        u0, w0 = uv[bucketed].min(axis=0)
        spread = np.max(uv[bucketed].max(axis=0) - (u0, w0))
        size = max(size, spread / 2048)
        nu, nw = (np.floor((uv[bucketed].max(axis=0) - (u0, w0)) / size).astype(np.int64) + 1)
    else:
        u0 = w0 = 0.0
        nu = nw = 1
    bu = np.floor((uv[:, 0] - u0) / size).astype(np.int64)
    bw = np.floor((uv[:, 1] - w0) / size).astype(np.int64)
    key = np.where(bucketed, bu * nw + bw, nu * nw)
    order = np.argsort(key, kind="stable")
    start = np.searchsorted(key[order], np.arange(nu * nw + 1)).astype(np.int64)
    return _kernels.occluded_cells(cells, active, v, pts, start, order.astype(np.int64),
                                   int(nu), int(nw), float(u0), float(w0), float(size),
                                   basis, float(radius), float(reach_coef))


def build_grid(cloud, candidate, normals=None, size=GRID_SIZE, occlusion_radius=OCCLUSION_RADIUS):
    """Occupancy, unobserved and normal grids for one candidate.

    Args:
        cloud: the full cloud; points outside the closing region still act
            as occluders.
        candidate: grasp candidate whose closing region is voxelized.
        normals: per-point unit normals for ``cloud``; estimated when omitted.
        size: cells per side.
        occlusion_radius: how close a point must pass to a view ray to block it.
    """
    origin, R, extent = candidate_box(candidate)
    unit = ((cloud.points - origin) @ R) / extent
    inside = np.all((unit >= 0.0) & (unit <= 1.0), axis=1)
    idx = np.minimum((unit[inside] * size).astype(np.int64), size - 1)

    occupancy = np.zeros((size,) * 3, dtype=bool)
    normal_grid = np.zeros((size,) * 3 + (3,), dtype=np.float32)
    if inside.any():
        if normals is None:
            normals = estimate_normals(cloud)
        flat = np.ravel_multi_index(idx.T, (size,) * 3)
        n_hand = normals[inside] @ R
        sums = np.zeros((size ** 3, 3))
        np.add.at(sums, flat, n_hand)
        cells, first = np.unique(flat, return_index=True)
        s = sums[cells]
        norm = np.linalg.norm(s, axis=1)
        # members cancelling out exactly: keep the first member's normal
        s = np.where(norm[:, None] > 1e-9, s / np.maximum(norm, 1e-300)[:, None], n_hand[first])
        occupancy.reshape(-1)[cells] = True
        normal_grid.reshape(-1, 3)[cells] = s

    grid = CandidateGrid(occupancy, np.zeros_like(occupancy), normal_grid, origin, R, extent)
    centers = grid.cell_centers()
    hidden = ~occupancy.reshape(-1)
    for vp in cloud.viewpoints:
        if not hidden.any():
            break
        hidden &= occluded_from(vp.position, cloud.points, centers, hidden, occlusion_radius)
    if not cloud.viewpoints:
        hidden[:] = False
    return CandidateGrid(occupancy, hidden.reshape((size,) * 3), normal_grid, origin, R, extent)


def _heights(mask, axis):
    g = mask.shape[axis]
    shape = [1, 1, 1]
    shape[axis] = g
    h = np.arange(1, g + 1, dtype=np.float64).reshape(shape)
    count = mask.sum(axis=axis)
    total = (mask * h).sum(axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1) / g, 0.0), count


def _axis_index(axis):
    if isinstance(axis, str):
        return AXES.index(axis)
    return int(axis)


def project(grid: CandidateGrid, axis) -> np.ndarray:
    """Five projection channels (G, G, 5) along one grid axis.

    Channels: averaged occupied height, averaged unobserved height and the
    componentwise absolute value of the summed normal divided by the
    occupied count. Heights are cell indices 1..G scaled to (0, 1]; empty
    columns are 0. Image rows/columns are the remaining two grid axes in
    ascending order.
    """
    ax = _axis_index(axis)
    io, count = _heights(grid.occupancy, ax)
    iu, _ = _heights(grid.unobserved, ax)
    nsum = (grid.normals.astype(np.float64) * grid.occupancy[..., None]).sum(axis=ax)
    i_n = np.where(count[..., None] > 0, np.abs(nsum) / np.maximum(count, 1)[..., None], 0.0)
    return np.concatenate([io[..., None], iu[..., None], i_n], axis=-1).astype(np.float32)


def free_heights(grid: CandidateGrid, axis=0):
    free = ~grid.occupancy & ~grid.unobserved
    return _heights(free, _axis_index(axis))[0].astype(np.float32)


def encode_channels(grid: CandidateGrid, variant) -> np.ndarray:
    variant = Variant(variant)
    if variant is Variant.THREE_APPROACH_KAPPLER:
        p = project(grid, 0)
        return np.concatenate([p[..., :2], free_heights(grid, 0)[..., None]], axis=-1)
    if variant is Variant.THREE_CURVATURE:
        return project(grid, 1)[..., 2:5]
    full = np.concatenate([project(grid, a) for a in range(3)], axis=-1)
    return np.ascontiguousarray(full[..., SUBSET_OF_FIFTEEN[variant]])


def encode(grid: CandidateGrid, variant, candidate_ref=None) -> GraspImage:
    return GraspImage(encode_channels(grid, variant), Variant(variant), candidate_ref)
