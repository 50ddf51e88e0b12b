"""Deterministic synthetic forest scenes with per-point ground-truth labels.

Scenes mix trees (trunk cylinder + ellipsoid canopy), bushes (foliage
domes), and box objects on flat, sloped, or undulating terrain, plus sparse
clutter. Every point is labeled (ground / object id / clutter), so the
generator doubles as the oracle for ground filtering, segmentation, and
end-to-end localization tests. All sampling is driven by per-purpose RNG
substreams derived from the scene seed, so generation is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core.geometry import PointCloud, RigidTransform

GROUND_LABEL = -1
CLUTTER_LABEL = -2

_PLACE_STREAM = 1
_GROUND_STREAM = 2
_CLUTTER_STREAM = 3
_OBJECT_STREAM = 4
_SOURCE_STREAM = 7

# Foliage/body clearance above the terrain for bushes and boxes; keeps their
# lowest samples clearly off the ground surface, like real canopies and
# vehicle bodies.
_CLEARANCE = 0.3


@dataclass(frozen=True)
class Terrain:
    kind: str = "flat"  # "flat" | "slope" | "undulation"
    slope_deg: float = 0.0
    amplitude: float = 0.0
    wavelength: float = 20.0

    def __post_init__(self):
        if self.kind not in ("flat", "slope", "undulation"):
            raise ValueError("terrain kind must be 'flat', 'slope', or 'undulation'")
        if self.kind == "undulation" and self.wavelength <= 0:
            raise ValueError("undulation needs a positive wavelength")

    def height(self, xy: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(xy)
        if self.kind == "slope":
            return np.tan(np.deg2rad(self.slope_deg)) * xy[:, 0]
        if self.kind == "undulation":
            k = 2.0 * np.pi / self.wavelength
            return self.amplitude * np.sin(k * xy[:, 0]) * np.sin(k * xy[:, 1])
        return np.zeros(len(xy))


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    extent: tuple[float, float] = (40.0, 40.0)
    terrain: Terrain = field(default_factory=Terrain)
    n_trees: int = 10
    n_bushes: int = 10
    n_boxes: int = 5
    points_per_object: int = 600
    ground_density: float = 50.0  # points / m^2
    clutter_density: float = 0.3  # points / m^2
    min_spacing: float = 3.0
    edge_margin: float = 2.5

    def __post_init__(self):
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValueError("extent must be positive")
        if min(self.n_trees, self.n_bushes, self.n_boxes, self.points_per_object) < 0:
            raise ValueError("counts must be non-negative")
        if self.min_spacing <= 0:
            raise ValueError("min_spacing must be positive")

    @property
    def n_objects(self) -> int:
        return self.n_trees + self.n_bushes + self.n_boxes


@dataclass(frozen=True)
class PlacedObject:
    object_id: int
    kind: str  # "tree" | "bush" | "box"
    center: np.ndarray  # (3,) base point on the terrain


@dataclass(frozen=True)
class LabeledScene:
    cloud: PointCloud
    labels: np.ndarray  # (N,) int: GROUND_LABEL, CLUTTER_LABEL, or object id
    canopy: np.ndarray  # (N,) bool: foliage points eligible for seasonal jitter
    objects: list[PlacedObject]
    spec: SceneSpec


@dataclass(frozen=True)
class Perturbation:
    resample_fraction: float = 1.0
    noise_sigma: float = 0.0
    occlusion_deg: float = 0.0
    canopy_jitter: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.resample_fraction <= 1.0:
            raise ValueError("resample_fraction must be in (0, 1]")
        if self.noise_sigma < 0 or self.canopy_jitter < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0.0 <= self.occlusion_deg < 360.0:
            raise ValueError("occlusion_deg must be in [0, 360)")


def _place_objects(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample object base positions honoring min_spacing."""
    lo = np.array([spec.edge_margin, spec.edge_margin])
    hi = np.array(spec.extent) - spec.edge_margin
    if np.any(hi <= lo):
        raise ValueError("extent too small for the edge margin")
    placed: list[np.ndarray] = []
    attempts = 0
    max_attempts = 200 * max(spec.n_objects, 1)
    while len(placed) < spec.n_objects:
        if attempts >= max_attempts:
            raise ValueError(
                f"could not place {spec.n_objects} objects with spacing "
                f"{spec.min_spacing} in extent {spec.extent} after {attempts} attempts"
            )
        attempts += 1
        cand = rng.uniform(lo, hi)
        if all(np.linalg.norm(cand - p) >= spec.min_spacing for p in placed):
            placed.append(cand)
    return np.asarray(placed).reshape(-1, 2)


def _unit_sphere_cap(rng: np.random.Generator, n: int, z_min: float) -> np.ndarray:
    """Uniform directions on the spherical cap with z >= z_min."""
    u = rng.uniform(z_min, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    s = np.sqrt(np.maximum(1.0 - u**2, 0.0))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), u])


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _sample_tree(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Trunk cylinder plus an elongated canopy leaning off the trunk.

    The canopy is deliberately anisotropic and offset: natural trees have
    a dominant horizontal spread direction and lopsided foliage, which is
    what makes oriented key poses repeatable between observations.
    """
    trunk_r = rng.uniform(0.12, 0.25)
    trunk_h = rng.uniform(1.8, 3.0)
    major = rng.uniform(1.0, 1.5)
    semi = np.array([major, major * rng.uniform(0.45, 0.7), rng.uniform(0.8, 1.6)])
    lean = rng.uniform(0.3, 0.6) * major
    yaw = rng.uniform(0.0, 2.0 * np.pi)

    n_trunk = int(round(0.3 * n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_trunk)
    z = rng.uniform(0.0, trunk_h, size=n_trunk)
    r = trunk_r + rng.normal(0.0, 0.01, size=n_trunk)
    trunk = np.column_stack([r * np.cos(theta), r * np.sin(theta), z])

    n_canopy = n - n_trunk
    directions = _unit_sphere_cap(rng, n_canopy, -1.0)
    # 70% on the surface, the rest scattered inside the canopy volume.
    radial = np.where(rng.random(n_canopy) < 0.7, 1.0, np.cbrt(rng.random(n_canopy)))
    canopy = directions * semi * radial[:, None]
    canopy = canopy @ _yaw_matrix(yaw).T
    canopy[:, 0] += lean * np.cos(yaw)
    canopy[:, 1] += lean * np.sin(yaw)
    canopy[:, 2] += trunk_h + 0.4 * semi[2]
    pts = np.concatenate([trunk, canopy])
    is_canopy = np.zeros(n, dtype=bool)
    is_canopy[n_trunk:] = True
    return pts, is_canopy


def _sample_bush(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Two overlapping foliage domes of unequal size: elongated and lopsided."""
    r1 = rng.uniform(0.6, 1.1)
    r2 = r1 * rng.uniform(0.5, 0.8)
    sep = (r1 + r2) * rng.uniform(0.55, 0.8)
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    squash = rng.uniform(0.6, 0.9)  # bushes are wider than tall
    n1 = int(round(0.65 * n))
    pts = np.empty((n, 3))
    for lo, hi, radius, cx in ((0, n1, r1, 0.0), (n1, n, r2, sep)):
        m = hi - lo
        directions = _unit_sphere_cap(rng, m, 0.0)
        radial = np.where(rng.random(m) < 0.8, 1.0, np.cbrt(rng.random(m)))
        dome = directions * radius * radial[:, None]
        dome[:, 0] += cx
        pts[lo:hi] = dome
    pts = pts @ _yaw_matrix(yaw).T
    pts[:, 2] = pts[:, 2] * squash + _CLEARANCE
    return pts, np.ones(n, dtype=bool)


def _sample_box(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    size = rng.uniform([2.2, 1.0, 1.0], [3.6, 1.8, 2.2])
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    sx, sy, sz = size
    # Faces: +x, -x, +y, -y, top; sampled proportionally to area.
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    pts = np.empty((n, 3))
    pts[face == 0] = np.column_stack(
        [np.full((face == 0).sum(), 0.5 * sx), u[face == 0] * sy, (v[face == 0] + 0.5) * sz]
    )
    pts[face == 1] = np.column_stack(
        [np.full((face == 1).sum(), -0.5 * sx), u[face == 1] * sy, (v[face == 1] + 0.5) * sz]
    )
    pts[face == 2] = np.column_stack(
        [u[face == 2] * sx, np.full((face == 2).sum(), 0.5 * sy), (v[face == 2] + 0.5) * sz]
    )
    pts[face == 3] = np.column_stack(
        [u[face == 3] * sx, np.full((face == 3).sum(), -0.5 * sy), (v[face == 3] + 0.5) * sz]
    )
    pts[face == 4] = np.column_stack(
        [u[face == 4] * sx, v[face == 4] * sy, np.full((face == 4).sum(), sz)]
    )
    pts = pts @ _yaw_matrix(yaw).T
    pts[:, 2] += _CLEARANCE
    return pts, np.zeros(n, dtype=bool)


_SAMPLERS = {"tree": _sample_tree, "bush": _sample_bush, "box": _sample_box}


def generate_scene(spec: SceneSpec) -> LabeledScene:
    """Build a labeled scene; identical specs produce bit-identical scenes."""
    place_rng = np.random.default_rng([spec.seed, _PLACE_STREAM])
    centers_xy = _place_objects(spec, place_rng)
    kinds = ["tree"] * spec.n_trees + ["bush"] * spec.n_bushes + ["box"] * spec.n_boxes

    blocks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    canopy: list[np.ndarray] = []

    ground_rng = np.random.default_rng([spec.seed, _GROUND_STREAM])
    area = spec.extent[0] * spec.extent[1]
    spacing = 1.0 / np.sqrt(spec.ground_density)
    nx = max(1, int(round(spec.extent[0] / spacing)))
    ny = max(1, int(round(spec.extent[1] / spacing)))
    gx, gy = np.meshgrid(
        (np.arange(nx) + 0.5) * spec.extent[0] / nx,
        (np.arange(ny) + 0.5) * spec.extent[1] / ny,
        indexing="ij",
    )
    gxy = np.column_stack([gx.ravel(), gy.ravel()])
    gxy += ground_rng.uniform(-0.5, 0.5, size=gxy.shape) * spacing
    gz = spec.terrain.height(gxy) + ground_rng.normal(0.0, 0.01, size=len(gxy))
    blocks.append(np.column_stack([gxy, gz]))
    labels.append(np.full(len(gxy), GROUND_LABEL, dtype=np.int64))
    canopy.append(np.zeros(len(gxy), dtype=bool))

    objects = []
    for i, kind in enumerate(kinds):
        obj_rng = np.random.default_rng([spec.seed, _OBJECT_STREAM, i])
        pts, is_canopy = _SAMPLERS[kind](obj_rng, spec.points_per_object)
        base_z = float(spec.terrain.height(centers_xy[i][None, :])[0])
        center = np.array([centers_xy[i][0], centers_xy[i][1], base_z])
        pts = pts + center
        blocks.append(pts)
        labels.append(np.full(len(pts), i, dtype=np.int64))
        canopy.append(is_canopy)
        objects.append(PlacedObject(object_id=i, kind=kind, center=center))

    clutter_rng = np.random.default_rng([spec.seed, _CLUTTER_STREAM])
    n_clutter = int(round(area * spec.clutter_density))
    if n_clutter:
        cxy = clutter_rng.uniform([0.0, 0.0], spec.extent, size=(n_clutter, 2))
        cz = spec.terrain.height(cxy) + clutter_rng.uniform(0.25, 2.5, size=n_clutter)
        blocks.append(np.column_stack([cxy, cz]))
        labels.append(np.full(n_clutter, CLUTTER_LABEL, dtype=np.int64))
        canopy.append(np.zeros(n_clutter, dtype=bool))

    cloud = PointCloud(np.concatenate(blocks), frame_id=f"scene-{spec.seed}")
    return LabeledScene(
        cloud=cloud,
        labels=np.concatenate(labels),
        canopy=np.concatenate(canopy),
        objects=objects,
        spec=spec,
    )


def derive_source(
    scene: LabeledScene,
    transform: RigidTransform,
    perturbation: Perturbation | None = None,
    seed: int = 0,
) -> tuple[PointCloud, RigidTransform]:
    """Re-observe `scene` from a sensor displaced by `transform`.

    The returned cloud is expressed in the sensor (source) frame, so
    `transform` is exactly the source-to-map alignment a localizer should
    recover; it is returned unchanged as the ground truth. Perturbations
    model a second visit: random resampling, per-object angular occlusion,
    foliage jitter, and isotropic measurement noise.
    """
    perturbation = perturbation or Perturbation()
    rng = np.random.default_rng([seed, _SOURCE_STREAM])
    pts = scene.cloud.points.copy()
    labels = scene.labels
    canopy = scene.canopy
    keep = np.ones(len(pts), dtype=bool)

    if perturbation.occlusion_deg > 0:
        occ = np.deg2rad(perturbation.occlusion_deg)
        for obj in scene.objects:
            mask = labels == obj.object_id
            rel = pts[mask, :2] - obj.center[:2]
            azimuth = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)
            start = rng.uniform(0.0, 2.0 * np.pi)
            hidden = np.mod(azimuth - start, 2.0 * np.pi) < occ
            keep[np.nonzero(mask)[0][hidden]] = False

    if perturbation.resample_fraction < 1.0:
        keep &= rng.random(len(pts)) < perturbation.resample_fraction

    pts = pts[keep]
    canopy = canopy[keep]
    if perturbation.canopy_jitter > 0 and canopy.any():
        pts[canopy] += rng.normal(0.0, perturbation.canopy_jitter, size=(int(canopy.sum()), 3))
    if perturbation.noise_sigma > 0:
        pts += rng.normal(0.0, perturbation.noise_sigma, size=pts.shape)

    source_pts = transform.invert().apply(pts)
    return PointCloud(source_pts, frame_id=f"{scene.cloud.frame_id}-source"), transform
