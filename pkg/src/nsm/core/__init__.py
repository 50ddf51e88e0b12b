from .geometry import PointCloud, RigidTransform, apply, compose, invert
from .index import SpatialIndex, knn, radius_neighbors
from .io import load_cloud, load_trajectory, save_cloud, save_trajectory

__all__ = [
    "PointCloud",
    "RigidTransform",
    "SpatialIndex",
    "apply",
    "compose",
    "invert",
    "knn",
    "radius_neighbors",
    "load_cloud",
    "save_cloud",
    "load_trajectory",
    "save_trajectory",
]
