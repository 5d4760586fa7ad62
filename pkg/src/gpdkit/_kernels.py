"""Compiled inner loops for occlusion queries and mesh ray casting."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _blocked(q, v, pts, cand, radius):
    dx, dy, dz = q[0] - v[0], q[1] - v[1], q[2] - v[2]
    length = np.sqrt(dx * dx + dy * dy + dz * dz)
    if length == 0.0:
        return False
    dx /= length
    dy /= length
    dz /= length
    r2 = radius * radius
    for j in cand:
        px, py, pz = pts[j, 0] - v[0], pts[j, 1] - v[1], pts[j, 2] - v[2]
        s = px * dx + py * dy + pz * dz
        if s <= 0.0 or s >= length:
            continue
        ex, ey, ez = px - s * dx, py - s * dy, pz - s * dz
        if ex * ex + ey * ey + ez * ez <= r2:
            return True
    return False


@njit(cache=True, nogil=True)
def occluded_cells(cells, active, v, pts, bucket_start, bucket_items, nu, nw, u0, w0,
                   size, basis, radius, reach_coef):
    """For each active cell center, whether a cloud point blocks its view ray.

    Points are pre-bucketed on the image plane of a virtual camera at ``v``
    (``basis`` rows: right, up, forward). A query inspects the buckets within
    ``reach_coef * (1 + |projection|)`` of the cell's own projection, which
    bounds how far the projection of any blocking point can lie, and then
    applies the exact test.
    """
    n = cells.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    buf = np.empty(bucket_items.shape[0], dtype=np.int64)
    for i in range(n):
        if not active[i]:
            continue
        q = cells[i]
        dx, dy, dz = q[0] - v[0], q[1] - v[1], q[2] - v[2]
        zf = basis[2, 0] * dx + basis[2, 1] * dy + basis[2, 2] * dz
        if zf <= 0.0:
            # behind the image plane: fall back to all points
            m = 0
            for j in range(pts.shape[0]):
                buf[m] = j
                m += 1
            out[i] = _blocked(q, v, pts, buf[:m], radius)
            continue
        u = (basis[0, 0] * dx + basis[0, 1] * dy + basis[0, 2] * dz) / zf
        w = (basis[1, 0] * dx + basis[1, 1] * dy + basis[1, 2] * dz) / zf
        reach = reach_coef * (1.0 + np.sqrt(u * u + w * w))
        iu0 = int(np.floor((u - reach - u0) / size))
        iu1 = int(np.floor((u + reach - u0) / size))
        iw0 = int(np.floor((w - reach - w0) / size))
        iw1 = int(np.floor((w + reach - w0) / size))
        if iu0 < 0:
            iu0 = 0
        if iw0 < 0:
            iw0 = 0
        if iu1 > nu - 1:
            iu1 = nu - 1
        if iw1 > nw - 1:
            iw1 = nw - 1
        m = 0
        for a in range(iu0, iu1 + 1):
            for b in range(iw0, iw1 + 1):
                bk = a * nw + b
                for t in range(bucket_start[bk], bucket_start[bk + 1]):
                    buf[m] = bucket_items[t]
                    m += 1
        # points behind the camera plane never project into buckets
        for t in range(bucket_start[nu * nw], bucket_items.shape[0]):
            buf[m] = bucket_items[t]
            m += 1
        out[i] = _blocked(q, v, pts, buf[:m], radius)
    return out


@njit(cache=True, nogil=True)
def raycast_first_hits(origin, dirs, v0, e1, e2, sphere_c, sphere_r):
    """Nearest triangle hit per ray (Moller-Trumbore); t < 0 means miss."""
    nr = dirs.shape[0]
    nt = v0.shape[0]
    t_out = np.full(nr, -1.0)
    tri_out = np.full(nr, -1, dtype=np.int64)
    eps = 1e-12
    ox, oy, oz = origin[0], origin[1], origin[2]
    cx, cy, cz = sphere_c[0] - ox, sphere_c[1] - oy, sphere_c[2] - oz
    c2 = cx * cx + cy * cy + cz * cz
    for r in range(nr):
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        # reject rays that miss the bounding sphere
        b = cx * dx + cy * dy + cz * dz
        disc = b * b - (c2 - sphere_r * sphere_r)
        if disc < 0.0 or (b < 0.0 and c2 > sphere_r * sphere_r):
            continue
        best = np.inf
        best_tri = -1
        for k in range(nt):
            px = dy * e2[k, 2] - dz * e2[k, 1]
            py = dz * e2[k, 0] - dx * e2[k, 2]
            pz = dx * e2[k, 1] - dy * e2[k, 0]
            det = e1[k, 0] * px + e1[k, 1] * py + e1[k, 2] * pz
            if det > -eps and det < eps:
                continue
            inv = 1.0 / det
            tx, ty, tz = ox - v0[k, 0], oy - v0[k, 1], oz - v0[k, 2]
            u = (tx * px + ty * py + tz * pz) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = ty * e1[k, 2] - tz * e1[k, 1]
            qy = tz * e1[k, 0] - tx * e1[k, 2]
            qz = tx * e1[k, 1] - ty * e1[k, 0]
            w = (dx * qx + dy * qy + dz * qz) * inv
            if w < 0.0 or u + w > 1.0:
                continue
            t = (e2[k, 0] * qx + e2[k, 1] * qy + e2[k, 2] * qz) * inv
            if t > eps and t < best:
                best = t
                best_tri = k
        if best_tri >= 0:
            t_out[r] = best
            tri_out[r] = best_tri
    return t_out, tri_out
