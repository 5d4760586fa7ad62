"""Triangle meshes: loading, parametric primitives and dense surface samples."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from plyfile import PlyData


class MeshError(ValueError):
    pass


def area_weighted_normals(vertices, triangles):
    v = vertices[triangles]
    face = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])  # length = 2 * area
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, triangles[:, k], face)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_normals: np.ndarray | None = None
    name: str = "mesh"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0 or len(v) == 0:
            raise MeshError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise MeshError("mesh has non-finite vertices")
        n = self.vertex_normals
        n = area_weighted_normals(v, t) if n is None else np.asarray(n, dtype=np.float64).reshape(-1, 3)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        n = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
        for a in (v, t, n):
            a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "vertex_normals", n)

    @property
    def corners(self):
        return self.vertices[self.triangles]

    @property
    def face_normals(self):
        c = self.corners
        f = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return f / np.linalg.norm(f, axis=1, keepdims=True)

    @property
    def areas(self):
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    def transformed(self, R=np.eye(3), t=np.zeros(3), name=None):
        R = np.asarray(R, float)
        return TriangleMesh(self.vertices @ R.T + t, self.triangles, self.vertex_normals @ R.T,
                            name or self.name)


# --- file formats ----------------------------------------------------------

def _load_obj(path):
    verts, norms, tris = [], [], []
    vn_of_v = {}
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "vn":
                norms.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = []
                for item in tok[1:]:
                    parts = item.split("/")
                    vi = int(parts[0])
                    vi = vi - 1 if vi > 0 else len(verts) + vi
                    if len(parts) >= 3 and parts[2]:
                        ni = int(parts[2])
                        vn_of_v[vi] = ni - 1 if ni > 0 else len(norms) + ni
                    idx.append(vi)
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
    normals = None
    if norms and len(vn_of_v) == len(verts):
        normals = np.asarray([norms[vn_of_v[i]] for i in range(len(verts))])
    return np.asarray(verts), np.asarray(tris), normals


def _load_ply(path):
    ply = PlyData.read(path)
    v = ply["vertex"]
    verts = np.column_stack([np.asarray(v[c], float) for c in ("x", "y", "z")])
    normals = None
    names = v.data.dtype.names
    if {"nx", "ny", "nz"} <= set(names):
        normals = np.column_stack([np.asarray(v[c], float) for c in ("nx", "ny", "nz")])
    tris = []
    if "face" in ply:
        face = ply["face"]
        key = "vertex_indices" if "vertex_indices" in face.data.dtype.names else face.data.dtype.names[0]
        for poly in face[key]:
            for k in range(1, len(poly) - 1):
                tris.append([poly[0], poly[k], poly[k + 1]])
    return verts, np.asarray(tris, dtype=np.int64), normals


def load_mesh(path) -> TriangleMesh:
    path = str(path)
    if not os.path.exists(path):
        raise MeshError(f"no such mesh file: {path}")
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".obj":
            v, t, n = _load_obj(path)
        elif ext == ".ply":
            v, t, n = _load_ply(path)
        else:
            raise MeshError(f"unsupported mesh format: {ext}")
    except MeshError:
        raise
    except Exception as exc:
        raise MeshError(f"cannot read mesh {path}: {exc}") from exc
    return TriangleMesh(v, t, n, name=os.path.splitext(os.path.basename(path))[0])


def save_obj(path, mesh: TriangleMesh):
    with open(path, "w") as fh:
        for p in mesh.vertices:
            fh.write("v %.9g %.9g %.9g\n" % tuple(p))
        for n in mesh.vertex_normals:
            fh.write("vn %.9g %.9g %.9g\n" % tuple(n))
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")
    return path


# --- primitives ------------------------------------------------------------

def box(size=(0.12, 0.08, 0.04), center=(0, 0, 0), name="box"):
    """Axis-aligned box with separate vertices per face (sharp normals)."""
    half = np.asarray(size, float) / 2
    verts, norms, tris = [], [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            n = np.zeros(3)
            n[axis] = sign
            u, w = [a for a in range(3) if a != axis]
            base = len(verts)
            for du, dw in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                p = np.zeros(3)
                p[axis] = sign * half[axis]
                p[u] = du * half[u]
                p[w] = dw * half[w]
                verts.append(p)
                norms.append(n)
            quad = [[base, base + 1, base + 2], [base, base + 2, base + 3]]
            for tri in quad:
                a, b, c = (verts[i] for i in tri)
                if np.cross(b - a, c - a) @ n < 0:
                    tri = [tri[0], tri[2], tri[1]]
                tris.append(tri)
    return TriangleMesh(np.asarray(verts) + center, tris, norms, name)


def cylinder(radius=0.03, height=0.12, segments=48, center=(0, 0, 0), name="cylinder"):
    """Closed cylinder along world z with smooth sides and flat caps."""
    ang = 2 * math.pi * np.arange(segments) / segments
    ring = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(segments)])
    h = height / 2
    side = np.vstack([ring * radius + [0, 0, -h], ring * radius + [0, 0, h]])
    side_n = np.vstack([ring, ring])
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [[i, j, segments + j], [i, segments + j, segments + i]]
    verts, norms = [side], [side_n]
    base = 2 * segments
    for z, sgn in ((-h, -1.0), (h, 1.0)):
        cap = np.vstack([[0, 0, z], ring * radius + [0, 0, z]])
        verts.append(cap)
        norms.append(np.tile([0, 0, sgn], (segments + 1, 1)))
        for i in range(segments):
            a, b = base + 1 + i, base + 1 + (i + 1) % segments
            tris.append([base, a, b] if sgn > 0 else [base, b, a])
        base += segments + 1
    return TriangleMesh(np.vstack(verts) + center, tris, np.vstack(norms), name)


def sphere(radius=0.03, rings=24, segments=48, center=(0, 0, 0), name="sphere"):
    verts = [[0, 0, 1.0]]
    for i in range(1, rings):
        th = math.pi * i / rings
        for j in range(segments):
            ph = 2 * math.pi * j / segments
            verts.append([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    verts.append([0, 0, -1.0])
    verts = np.asarray(verts)
    south = len(verts) - 1

    def vid(i, j):
        return 1 + (i - 1) * segments + (j % segments)

    tris = []
    for j in range(segments):
        tris.append([0, vid(1, j), vid(1, j + 1)])
        tris.append([south, vid(rings - 1, j + 1), vid(rings - 1, j)])
    for i in range(1, rings - 1):
        for j in range(segments):
            a, b, c, d = vid(i, j), vid(i, j + 1), vid(i + 1, j), vid(i + 1, j + 1)
            tris += [[a, c, d], [a, d, b]]
    return TriangleMesh(verts * radius + center, tris, verts, name)


PRIMITIVES = {
    "box": box,
    "cylinder": cylinder,
    "sphere": sphere,
}


def bundled_meshes(family="standard"):
    """Parametric test objects.

    ``standard`` mixes boxes, cylinders and a sphere sized for a 7 cm
    gripper. ``pretrain`` holds a disjoint family of differently sized
    shapes (a square prism, a thin slab, a smaller sphere and a thin rod)
    used as the pretraining corpus. ``primitives`` is one of each basic
    shape at its default size.
    """
    if family == "standard":
        return [
            box((0.12, 0.08, 0.04), name="box_a"),
            box((0.10, 0.05, 0.05), name="box_b"),
            cylinder(0.02, 0.14, name="cyl_a"),
            cylinder(0.03, 0.10, name="cyl_b"),
            sphere(0.025, name="sphere_a"),
        ]
    if family == "pretrain":
        return [
            box((0.06, 0.06, 0.14), name="prism_a"),
            box((0.14, 0.10, 0.025), name="slab_a"),
            sphere(0.02, name="sphere_b"),
            cylinder(0.015, 0.16, name="rod_a"),
        ]
    if family == "primitives":
        return [box(name="box"), cylinder(name="cylinder"), sphere(name="sphere")]
    raise MeshError(f"unknown mesh family {family!r}")


# --- dense surface samples -------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    points: np.ndarray
    normals: np.ndarray
    triangle: np.ndarray


def sample_surface(mesh: TriangleMesh, density=1.5e6, seed=0) -> SurfaceSamples:
    """Random surface samples, ``density`` per square meter (default 1.5/mm^2).

    Normals interpolate the vertex normals barycentrically, so smooth
    primitives get smooth contact normals and faceted ones stay sharp.
    """
    rng = np.random.default_rng(seed)
    areas = mesh.areas
    counts = np.maximum(np.ceil(areas * density).astype(np.int64), 1)
    tri = np.repeat(np.arange(len(areas)), counts)
    r1 = np.sqrt(rng.random(len(tri)))
    r2 = rng.random(len(tri))
    bary = np.column_stack([1 - r1, r1 * (1 - r2), r1 * r2])
    c = mesh.corners[tri]
    pts = np.einsum("nk,nkd->nd", bary, c)
    nrm = np.einsum("nk,nkd->nd", bary, mesh.vertex_normals[mesh.triangles[tri]])
    length = np.linalg.norm(nrm, axis=1, keepdims=True)
    face = mesh.face_normals[tri]
    nrm = np.where(length > 1e-9, nrm / np.maximum(length, 1e-300), face)
    return SurfaceSamples(pts, nrm, tri)
