"""Simulated depth scans of meshes through a pinhole camera."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..cloud import CloudWithViewpoints, Viewpoint, merge_clouds


class EmptyRender(RuntimeError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    width: int = 320
    height: int = 240
    hfov_deg: float = 57.0

    @property
    def focal(self):
        return (self.width / 2) / math.tan(math.radians(self.hfov_deg) / 2)


def look_at(position, target, up=(0.0, 0.0, 1.0)):
    """Camera axes (right, down, forward) as rows."""
    f = np.asarray(target, float) - np.asarray(position, float)
    f /= np.linalg.norm(f)
    up = np.asarray(up, float)
    if abs(f @ up) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(f, up)
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    return np.stack([right, down, f])


def pixel_rays(intrinsics: Intrinsics, axes):
    """Unit world directions of every pixel center, row-major."""
    fpx = intrinsics.focal
    jj, ii = np.meshgrid(np.arange(intrinsics.width), np.arange(intrinsics.height))
    x = (jj.ravel() + 0.5 - intrinsics.width / 2) / fpx
    y = (ii.ravel() + 0.5 - intrinsics.height / 2) / fpx
    d = np.column_stack([x, y, np.ones_like(x)]) @ axes
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def render_view(mesh, viewpoint: Viewpoint, intrinsics=Intrinsics(), target=None,
                depth_noise=0.0, seed=0) -> CloudWithViewpoints:
    """Ray-cast one depth image; each first hit becomes a point seen from ``viewpoint``.

    The optical axis points at ``target`` (the mesh centroid by default).
    ``depth_noise`` adds zero-mean Gaussian noise (meters) along each ray.
    """
    target = mesh.centroid if target is None else np.asarray(target, float)
    origin = viewpoint.position
    dirs = pixel_rays(intrinsics, look_at(origin, target))
    c = mesh.corners
    v0 = np.ascontiguousarray(c[:, 0])
    e1 = np.ascontiguousarray(c[:, 1] - c[:, 0])
    e2 = np.ascontiguousarray(c[:, 2] - c[:, 0])
    center = 0.5 * (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0))
    radius = np.max(np.linalg.norm(mesh.vertices - center, axis=1)) * (1 + 1e-9) + 1e-12
    t, _ = _kernels.raycast_first_hits(np.ascontiguousarray(origin), np.ascontiguousarray(dirs),
                                       v0, e1, e2, center, radius)
    hit = t > 0
    if not hit.any():
        raise EmptyRender(f"empty render: no rays from viewpoint {viewpoint.id} hit {mesh.name}")
    depth = t[hit]
    if depth_noise > 0:
        depth = depth + np.random.default_rng(seed).normal(0.0, depth_noise, size=len(depth))
    points = origin + dirs[hit] * depth[:, None]
    return CloudWithViewpoints.single_view(points, viewpoint)


def stereo_positions(center, baseline_angle=53.0, distance=0.6, elevation=30.0, azimuth=0.0):
    """Two camera positions ``baseline_angle`` apart about the vertical axis."""
    out = []
    el = math.radians(elevation)
    for sign in (-0.5, 0.5):
        az = math.radians(azimuth + sign * baseline_angle)
        d = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        out.append(np.asarray(center, float) + distance * d)
    return out


def stereo_render(mesh, baseline_angle=53.0, distance=0.6, intrinsics=Intrinsics(), elevation=30.0,
                  azimuth=0.0, view_ids=(0, 1), depth_noise=0.0, seed=0) -> CloudWithViewpoints:
    """Merged scans from two sensors whose optical axes meet at the mesh centroid."""
    target = mesh.centroid
    pos = stereo_positions(target, baseline_angle, distance, elevation, azimuth)
    a = render_view(mesh, Viewpoint(view_ids[0], pos[0]), intrinsics, target, depth_noise, seed)
    b = render_view(mesh, Viewpoint(view_ids[1], pos[1]), intrinsics, target, depth_noise, seed + 1)
    merged = merge_clouds(a, b)
    # keep caller-chosen ids instead of the merge re-numbering
    vps = (Viewpoint(view_ids[0], pos[0]), Viewpoint(view_ids[1], pos[1]))
    return CloudWithViewpoints(merged.points, merged.view_mask, vps)
