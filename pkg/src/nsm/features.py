"""Oriented key poses and the 66-D hybrid shape descriptor.

Each segment gets a 6-DoF anchor: position is the component-wise median of
its points (robust to partial observations), orientation keeps z on global
up and aligns x with the dominant horizontal spread direction. The
descriptor is a polar grid of per-bin height statistics around that anchor
(32 bins x mean/variance = 64 values) plus two covariance-shape features,
in the fixed order [bin0.mean, bin0.var, ..., bin31.mean, bin31.var, P, C].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core.geometry import RigidTransform
from .errors import DegenerateGeometryWarning
from .segmentation import Segment

DESCRIPTOR_DIM = 66

# Horizontal-spread eigenvalue ratio below which a segment has no usable
# dominant direction and the x-axis falls back to global x.
ISOTROPY_RATIO = 1.05

_SKEW_EPS = 1e-9


@dataclass(frozen=True)
class KeyPose:
    """Segment anchor: position plus a yaw-only orientation (z = global up)."""

    position: np.ndarray
    orientation: np.ndarray
    isotropic: bool = False

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        rot = np.asarray(self.orientation, dtype=np.float64).reshape(3, 3)
        if not np.array_equal(rot[:, 2], [0.0, 0.0, 1.0]):
            raise ValueError("key-pose z-axis must be exactly global up")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9):
            raise ValueError("key-pose orientation is not orthonormal")
        if np.linalg.det(rot) < 0:
            raise ValueError("key-pose orientation is left-handed")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", rot)

    @classmethod
    def from_heading(cls, position, heading: float, isotropic: bool = False) -> KeyPose:
        """Key pose whose x-axis points at `heading` radians from global x."""
        c, s = np.cos(float(heading)), np.sin(float(heading))
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(position, rot, isotropic=isotropic)

    @property
    def heading(self) -> float:
        return float(np.arctan2(self.orientation[1, 0], self.orientation[0, 0]))

    def transformed(self, tf: RigidTransform) -> KeyPose:
        """Apply a z-up-preserving rigid transform (yaw + translation)."""
        rot = tf.rotation @ self.orientation
        if abs(rot[2, 2] - 1.0) > 1e-9:
            raise ValueError("transform does not preserve the global up axis")
        heading = np.arctan2(rot[1, 0], rot[0, 0])
        return KeyPose.from_heading(tf.apply(self.position), heading, isotropic=self.isotropic)


@dataclass(frozen=True)
class GestaltParams:
    radius: float = 2.0
    radial_divisions: int = 4
    azimuthal_divisions: int = 8

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.radial_divisions < 1 or self.azimuthal_divisions < 1:
            raise ValueError("divisions must be >= 1")

    @property
    def n_bins(self) -> int:
        return self.radial_divisions * self.azimuthal_divisions


def _segment_points(segment) -> np.ndarray:
    pts = segment.points if isinstance(segment, Segment) else np.asarray(segment, dtype=np.float64)
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def extract_keypose(segment) -> KeyPose:
    """Median position plus horizontal-PCA orientation for a segment.

    The x-axis is the principal eigenvector of the horizontal (x, y)
    covariance, with its sign fixed so the third central moment of the
    projections onto x is non-negative; segments with near-isotropic
    horizontal spread get x = global x and the `isotropic` flag.
    """
    pts = _segment_points(segment)
    if len(pts) < 3:
        raise ValueError(f"key pose needs at least 3 points, got {len(pts)}")
    position = np.median(pts, axis=0)

    xy = pts[:, :2] - pts[:, :2].mean(axis=0)
    cov = (xy.T @ xy) / len(xy)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    lam_min, lam_max = float(evals[0]), float(evals[1])
    if lam_max <= 0.0 or lam_max < ISOTROPY_RATIO * lam_min:
        return KeyPose.from_heading(position, 0.0, isotropic=True)

    axis = evecs[:, 1]
    proj = xy @ axis
    skew = float(np.mean(proj**3))
    if abs(skew) >= _SKEW_EPS:
        if skew < 0:
            axis = -axis
    elif axis[0] != 0.0:
        if axis[0] < 0:
            axis = -axis
    elif axis[1] < 0:
        axis = -axis
    return KeyPose.from_heading(position, float(np.arctan2(axis[1], axis[0])))


def eigen_features(segment) -> tuple[float, float]:
    """Planarity and cylindricality of the segment's point covariance.

    Eigenvalues are normalized to sum 1 and taken in ascending order
    l1 <= l2 <= l3, so planarity = l2 - l1 and cylindricality = l3 - l2 are
    both in [0, 1] and sum to at most 1.
    """
    pts = _segment_points(segment)
    if len(pts) == 0:
        raise ValueError("eigen features need at least one point")
    centered = pts - pts.mean(axis=0)
    cov = (centered.T @ centered) / len(pts)
    evals = np.linalg.eigvalsh(cov)
    total = float(evals.sum())
    if total <= 1e-30:
        warnings.warn(
            "degenerate covariance (all points identical); eigen features are (0, 0)",
            DegenerateGeometryWarning,
            stacklevel=2,
        )
        return 0.0, 0.0
    lam = np.maximum(evals, 0.0) / total
    return float(lam[1] - lam[0]), float(lam[2] - lam[1])


def gestalt_descriptor(segment, keypose: KeyPose, params: GestaltParams | None = None) -> np.ndarray:
    """The hybrid descriptor of `segment` around `keypose`.

    Points are expressed in the key-pose frame. Rings split the horizontal
    range [0, radius) into equal widths; sectors split the clockwise azimuth
    from the key-pose x-axis. Each bin records mean and population variance
    of the key-pose-frame heights; out-of-range points are discarded.
    """
    params = params or GestaltParams()
    pts = _segment_points(segment)
    local = (pts - keypose.position) @ keypose.orientation
    r = np.hypot(local[:, 0], local[:, 1])
    keep = r < params.radius
    if len(pts) and not keep.any():
        warnings.warn(
            "all points fall outside the descriptor radius; gestalt block is zero",
            DegenerateGeometryWarning,
            stacklevel=2,
        )
    local, r = local[keep], r[keep]

    n_bins = params.n_bins
    ring_width = params.radius / params.radial_divisions
    sector_width = 2.0 * np.pi / params.azimuthal_divisions
    ring = np.floor(r / ring_width).astype(np.intp)
    np.minimum(ring, params.radial_divisions - 1, out=ring)
    azimuth = np.mod(-np.arctan2(local[:, 1], local[:, 0]), 2.0 * np.pi)  # clockwise from x
    sector = np.floor(azimuth / sector_width).astype(np.intp)
    np.minimum(sector, params.azimuthal_divisions - 1, out=sector)
    bin_idx = ring * params.azimuthal_divisions + sector

    counts = np.bincount(bin_idx, minlength=n_bins).astype(np.float64)
    sums = np.bincount(bin_idx, weights=local[:, 2], minlength=n_bins)
    sqsums = np.bincount(bin_idx, weights=local[:, 2] ** 2, minlength=n_bins)
    occupied = counts > 0
    means = np.zeros(n_bins)
    variances = np.zeros(n_bins)
    means[occupied] = sums[occupied] / counts[occupied]
    variances[occupied] = np.maximum(sqsums[occupied] / counts[occupied] - means[occupied] ** 2, 0.0)

    planarity, cylindricality = eigen_features(pts)
    desc = np.empty(2 * n_bins + 2)
    desc[0 : 2 * n_bins : 2] = means
    desc[1 : 2 * n_bins : 2] = variances
    desc[-2] = planarity
    desc[-1] = cylindricality
    return desc


@dataclass(frozen=True)
class DescribedSegment:
    """A segment bundled with its key pose and descriptor."""

    segment: Segment
    keypose: KeyPose
    descriptor: np.ndarray


def describe_segment(segment: Segment, params: GestaltParams | None = None) -> DescribedSegment:
    keypose = extract_keypose(segment)
    return DescribedSegment(segment, keypose, gestalt_descriptor(segment, keypose, params))


def describe_segments(
    segments: list[Segment], params: GestaltParams | None = None, n_threads: int = 1
) -> list[DescribedSegment]:
    """Describe many segments; output order follows input regardless of threading."""
    if n_threads > 1 and len(segments) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(lambda s: describe_segment(s, params), segments))
    return [describe_segment(s, params) for s in segments]
