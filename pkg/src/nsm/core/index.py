"""Exact nearest-neighbour queries over 3-D points or descriptor vectors.

Backed by a balanced k-d tree (scipy's cKDTree). Results are made fully
deterministic: equal-distance neighbours are ordered by ascending insertion
index, so query output never depends on tree layout.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class SpatialIndex:
    """Immutable k-d tree over an (N, D) array of row vectors."""

    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"expected (N, D) data, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("index data contains non-finite values")
        self._data = data
        self._tree = cKDTree(data) if len(data) else None

    def __len__(self) -> int:
        return self._data.shape[0]

    @property
    def dim(self) -> int:
        return self._data.shape[1]

    def knn(self, query, k: int) -> list[tuple[int, float]]:
        """The k nearest rows to `query`, ascending by L2 distance.

        Returns min(k, len(index)) pairs of (row index, distance). Ties are
        broken by ascending row index.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if self._tree is None:
            raise ValueError("index is empty")
        query = np.asarray(query, dtype=np.float64).reshape(self.dim)
        k_eff = min(k, len(self))
        dists, _ = self._tree.query(query, k=k_eff)
        dmax = float(np.atleast_1d(dists)[-1])
        # Re-rank everything within the k-th distance so equal-distance
        # neighbours come out in insertion order.
        cand = self._tree.query_ball_point(query, r=dmax)
        cand.sort()
        cand_d = np.sqrt(np.sum((self._data[cand] - query) ** 2, axis=1))
        order = np.lexsort((cand, cand_d))[:k_eff]
        return [(int(cand[i]), float(cand_d[i])) for i in order]

    def radius(self, query, r: float) -> list[int]:
        """Indices of all rows within distance <= r, ascending by index."""
        if r <= 0:
            raise ValueError("radius must be positive")
        if self._tree is None:
            return []
        query = np.asarray(query, dtype=np.float64).reshape(self.dim)
        return sorted(self._tree.query_ball_point(query, r=r))

    def pairs_within(self, r: float) -> np.ndarray:
        """All index pairs (i, j), i < j, at distance <= r, as an (M, 2) array."""
        if self._tree is None:
            return np.empty((0, 2), dtype=np.intp)
        return self._tree.query_pairs(r, output_type="ndarray")


def knn(index: SpatialIndex, query, k: int) -> list[tuple[int, float]]:
    return index.knn(query, k)


def radius_neighbors(index: SpatialIndex, query, r: float) -> list[int]:
    return index.radius(query, r)
