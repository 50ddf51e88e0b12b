"""Euclidean clustering of non-ground points into object-sized segments.

Clusters are the connected components of the graph linking every pair of
points at distance <= max_distance; components outside the configured size
band are discarded as clutter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core.geometry import PointCloud
from .core.index import SpatialIndex


@dataclass(frozen=True)
class SegmentationParams:
    max_distance: float = 0.2
    min_points: int = 200
    max_points: int = 1500

    def __post_init__(self):
        if self.max_distance <= 0:
            raise ValueError("max_distance must be positive")
        if not 0 < self.min_points <= self.max_points:
            raise ValueError("need 0 < min_points <= max_points")


@dataclass(frozen=True)
class Segment:
    """A cluster of points assumed to belong to one rigid object."""

    segment_id: int
    points: np.ndarray
    source_frame_id: str = ""

    def __len__(self) -> int:
        return self.points.shape[0]


def euclidean_cluster(cloud: PointCloud, params: SegmentationParams) -> list[Segment]:
    """Cluster `cloud` and keep components within the size band.

    Output is ordered by descending size; ties are broken by the smallest
    member index in the input order. Segment ids are assigned 0..K-1 along
    that ordering.
    """
    n = len(cloud)
    if n == 0:
        return []
    pts = cloud.points
    pairs = SpatialIndex(pts).pairs_within(params.max_distance)
    if len(pairs):
        ones = np.ones(len(pairs), dtype=np.int8)
        graph = coo_matrix((ones, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    else:
        graph = coo_matrix((n, n), dtype=np.int8)
    _, labels = connected_components(graph, directed=False)

    order = np.argsort(labels, kind="stable")
    boundaries = np.searchsorted(labels[order], np.arange(labels.max() + 1))
    groups = np.split(order, boundaries[1:])

    kept = [g for g in groups if params.min_points <= len(g) <= params.max_points]
    kept.sort(key=lambda g: (-len(g), int(g.min())))
    return [
        Segment(segment_id=i, points=pts[np.sort(g)], source_frame_id=cloud.frame_id)
        for i, g in enumerate(kept)
    ]
