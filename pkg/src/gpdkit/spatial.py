"""Uniform hash grid for fixed-radius neighbor queries."""

import numpy as np


class SpatialHash:
    """Buckets points into cubic cells of edge ``cell``.

    A radius query visits the cells overlapping the query ball, so the
    expected cost is independent of cloud size when ``radius <= cell``.
    The structure is immutable after construction.
    """

    def __init__(self, points, cell):
        if not cell > 0:
            raise ValueError("cell size must be positive")
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell = float(cell)
        keys = np.floor(self.points / self.cell).astype(np.int64)
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        self.order = order
        sk = keys[order]
        if len(sk):
            brk = np.flatnonzero(np.any(sk[1:] != sk[:-1], axis=1)) + 1
            starts = np.concatenate([[0], brk])
            ends = np.concatenate([brk, [len(sk)]])
            self.buckets = {tuple(sk[s]): (s, e) for s, e in zip(starts, ends)}
        else:
            self.buckets = {}

    def _cell_members(self, key):
        se = self.buckets.get(key)
        if se is None:
            return None
        return self.order[se[0]:se[1]]

    def candidates(self, center, radius):
        lo = np.floor((np.asarray(center) - radius) / self.cell).astype(np.int64)
        hi = np.floor((np.asarray(center) + radius) / self.cell).astype(np.int64)
        found = []
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    m = self._cell_members((i, j, k))
                    if m is not None:
                        found.append(m)
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(found)

    def query(self, center, radius):
        """Indices of points within ``radius`` of ``center``, ascending."""
        center = np.asarray(center, dtype=np.float64)
        cand = self.candidates(center, radius)
        d2 = np.sum((self.points[cand] - center) ** 2, axis=1)
        return np.sort(cand[d2 <= radius * radius])

    def query_all(self, radius):
        """Neighbor lists for every indexed point, computed cell by cell."""
        out = [None] * len(self.points)
        for key, (s, e) in self.buckets.items():
            members = self.order[s:e]
            center = (np.asarray(key) + 0.5) * self.cell
            reach = radius + 0.5 * self.cell * np.sqrt(3.0)
            cand = self.candidates(center, reach)
            d2 = np.sum((self.points[members][:, None, :] - self.points[cand][None, :, :]) ** 2, axis=2)
            hit = d2 <= radius * radius
            for row, m in enumerate(members):
                out[m] = np.sort(cand[hit[row]])
        return out
