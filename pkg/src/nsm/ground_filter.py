"""Progressive Morphological Filter: label and strip ground-surface points.

The cloud is rasterized to a min-elevation grid, which is opened
(erosion + dilation) with progressively larger windows; elevation jumps
that exceed a window-dependent threshold mark object cells, and the final
opened surface under those cells serves as the bare-earth estimate. Points
are then labeled by their height above the (bilinearly interpolated)
bare-earth surface, which reclaims near-surface points that coarse cell
labels would misclassify.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core.geometry import PointCloud
from .errors import DegenerateGeometryWarning


@dataclass(frozen=True)
class PmfParams:
    cell_size: float = 0.33
    initial_window: int = 3
    max_window: int = 33
    slope: float = 0.15
    initial_height_thresh: float = 0.15
    max_height_thresh: float = 3.0
    window_growth: str = "exponential"  # "linear" | "exponential"

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.initial_window < 1:
            raise ValueError("initial_window must be >= 1")
        if self.max_window < self.initial_window:
            raise ValueError("max_window must be >= initial_window")
        if self.initial_height_thresh <= 0 or self.max_height_thresh < self.initial_height_thresh:
            raise ValueError("need 0 < initial_height_thresh <= max_height_thresh")
        if self.window_growth not in ("linear", "exponential"):
            raise ValueError("window_growth must be 'linear' or 'exponential'")

    def window_sizes(self) -> list[int]:
        """Odd window sizes from initial_window up to max_window."""
        w = self.initial_window | 1  # round up to odd
        sizes = []
        while w <= self.max_window:
            sizes.append(w)
            w = 2 * (w - 1) + 1 if self.window_growth == "exponential" else w + 2
        return sizes or [self.initial_window | 1]


@dataclass(frozen=True)
class GroundLabeling:
    is_ground: np.ndarray  # (N,) bool
    ground: PointCloud
    non_ground: PointCloud


def filter_ground(cloud: PointCloud, params: PmfParams | None = None) -> GroundLabeling:
    """Split `cloud` into ground / non-ground via the progressive filter."""
    params = params or PmfParams()
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot ground-filter an empty cloud")
    pts = cloud.points
    mins = pts[:, :2].min(axis=0)
    cell = params.cell_size
    ij = np.floor((pts[:, :2] - mins) / cell).astype(np.intp)
    shape = ij.max(axis=0) + 1
    ij = np.minimum(ij, shape - 1)

    if shape[0] == 1 and shape[1] == 1:
        warnings.warn(
            "degenerate horizontal extent (single grid cell); labeling everything ground",
            DegenerateGeometryWarning,
            stacklevel=2,
        )
        return _labeling(cloud, np.ones(n, dtype=bool))

    min_z = np.full(shape, np.inf)
    np.minimum.at(min_z, (ij[:, 0], ij[:, 1]), pts[:, 2])
    empty = ~np.isfinite(min_z)
    if empty.any():
        # Fill holes with the nearest observed cell so opening is well-defined.
        _, (fi, fj) = ndimage.distance_transform_edt(empty, return_indices=True)
        min_z = min_z[fi, fj]

    # Odd reflection keeps planar trends linear across the border, so the
    # opening does not erode slopes at the grid edges. Reflection cannot
    # exceed the grid size, hence the per-axis clamp.
    want = params.max_window // 2 + 1
    pad_i = min(want, int(shape[0]) - 1)
    pad_j = min(want, int(shape[1]) - 1)
    crop = (slice(pad_i, pad_i + int(shape[0])), slice(pad_j, pad_j + int(shape[1])))
    padded = np.pad(min_z, ((pad_i, pad_i), (pad_j, pad_j)), mode="reflect", reflect_type="odd")

    marked = np.zeros_like(min_z, dtype=bool)
    surface = padded
    prev_w = params.window_sizes()[0]
    for w in params.window_sizes():
        dh = min(
            params.initial_height_thresh + params.slope * (w - prev_w) * cell,
            params.max_height_thresh,
        )
        opened = ndimage.grey_opening(surface, size=(w, w), mode="nearest")
        diff = surface[crop] - opened[crop]
        marked |= diff > dh
        surface = opened
        prev_w = w

    bare_earth = np.where(marked, surface[crop], min_z)
    coords = (pts[:, :2] - mins) / cell - 0.5  # cell-center coordinates
    ground_at = ndimage.map_coordinates(bare_earth, coords.T, order=1, mode="nearest")
    return _labeling(cloud, pts[:, 2] - ground_at <= params.initial_height_thresh)


def _labeling(cloud: PointCloud, is_ground: np.ndarray) -> GroundLabeling:
    return GroundLabeling(
        is_ground=is_ground,
        ground=PointCloud(cloud.points[is_ground], frame_id=cloud.frame_id),
        non_ground=PointCloud(cloud.points[~is_ground], frame_id=cloud.frame_id),
    )
