"""Point clouds and rigid-body transforms in a right-handed, z-up frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 3)
    if pts.ndim == 1 and pts.shape[0] == 3:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) point array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3-D points. Coordinates are meters, z is global up."""

    points: np.ndarray
    frame_id: str = ""

    def __post_init__(self):
        pts = _as_points(self.points)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.frame_id == other.frame_id and np.array_equal(self.points, other.points)


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform: p' = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        tra = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(tra)):
            raise ValueError("transform contains non-finite values")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=ORTHONORMAL_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation determinant is not +1 (reflection or scaling)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        """Rotation by `yaw` radians about global z plus a translation."""
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.asarray(translation, dtype=np.float64))

    @classmethod
    def from_quaternion(cls, quat_xyzw, translation) -> RigidTransform:
        """Build from a scalar-last unit quaternion."""
        from scipy.spatial.transform import Rotation

        return cls(Rotation.from_quat(quat_xyzw).as_matrix(), translation)

    def to_quaternion(self) -> np.ndarray:
        """Scalar-last quaternion of the rotation part."""
        from scipy.spatial.transform import Rotation

        return Rotation.from_matrix(self.rotation).as_quat()

    def compose(self, other: RigidTransform) -> RigidTransform:
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def invert(self) -> RigidTransform:
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)

    def apply(self, points):
        """Transform one point (3,) or an (N, 3) array."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def apply_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.apply(cloud.points), frame_id=cloud.frame_id)

    def almost_equal(self, other: RigidTransform, atol: float = 1e-9) -> bool:
        return np.allclose(self.rotation, other.rotation, atol=atol) and np.allclose(
            self.translation, other.translation, atol=atol
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def invert(t: RigidTransform) -> RigidTransform:
    return t.invert()


def apply(t: RigidTransform, points):
    return t.apply(points)
