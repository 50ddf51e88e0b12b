"""Geometric-consistency filtering and 6-DoF pose estimation from matches.

Accepted matches are first grouped into the largest cluster whose key poses
pairwise preserve inter-point distances within epsilon (a rigidity test),
then RANSAC over the clustered key poses produces the source-to-target
transform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .core.geometry import PointCloud, RigidTransform
from .segment_map import SegmentMap
from .errors import DegenerateGeometryWarning
from .features import KeyPose, describe_segments
from .forest import ForestModel
from .ground_filter import filter_ground
from .matching import match_segments
from .segmentation import euclidean_cluster

if TYPE_CHECKING:
    from .config import PipelineConfig


@dataclass(frozen=True)
class ConsistencyParams:
    epsilon: float = 0.4
    min_cluster_size: int = 4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.min_cluster_size < 3:
            raise ValueError("min_cluster_size must be >= 3 (pose fit needs 3 matches)")


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 1000
    inlier_radius: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_radius <= 0:
            raise ValueError("inlier_radius must be positive")


@dataclass(frozen=True)
class Correspondence:
    source_keypose: KeyPose
    target_keypose: KeyPose
    weight: float
    source_id: int = -1
    target_id: int = -1


@dataclass(frozen=True)
class CorrespondenceSet:
    pairs: list[Correspondence] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def source_positions(self) -> np.ndarray:
        if not self.pairs:
            return np.empty((0, 3))
        return np.stack([p.source_keypose.position for p in self.pairs])

    def target_positions(self) -> np.ndarray:
        if not self.pairs:
            return np.empty((0, 3))
        return np.stack([p.target_keypose.position for p in self.pairs])


class LocalizationStatus(str, Enum):
    LOCALIZED = "localized"
    INSUFFICIENT_MATCHES = "insufficient_matches"
    RANSAC_FAILED = "ransac_failed"


@dataclass(frozen=True)
class LocalizationResult:
    status: LocalizationStatus
    transform: RigidTransform | None = None
    inliers: CorrespondenceSet = field(default_factory=CorrespondenceSet)
    consistency_cluster_size: int = 0
    n_source_segments: int = 0
    n_accepted_matches: int = 0

    def __post_init__(self):
        if self.status is LocalizationStatus.LOCALIZED:
            if self.transform is None or len(self.inliers) < 3:
                raise ValueError("a localized result needs a transform and >= 3 inliers")


def pairwise_consistent(p: Correspondence, q: Correspondence, epsilon: float) -> bool:
    """Whether two matches preserve the key-pose distance within epsilon (strict)."""
    d_t = np.linalg.norm(p.target_keypose.position - q.target_keypose.position)
    d_s = np.linalg.norm(p.source_keypose.position - q.source_keypose.position)
    return bool(abs(d_t - d_s) < epsilon)


def consistency_filter(
    correspondences: CorrespondenceSet, params: ConsistencyParams | None = None
) -> CorrespondenceSet:
    """Largest greedy cluster of mutually consistent matches.

    Clusters are seeded in descending-weight order; a match joins a cluster
    only if it is consistent with every current member. Returns the largest
    cluster if it reaches min_cluster_size, otherwise an empty set.
    """
    params = params or ConsistencyParams()
    pairs = sorted(
        correspondences.pairs, key=lambda p: (-p.weight, p.source_id, p.target_id)
    )
    unused = list(range(len(pairs)))
    best: list[int] = []
    while unused:
        seed = unused.pop(0)
        cluster = [seed]
        remaining = []
        for idx in unused:
            if all(pairwise_consistent(pairs[idx], pairs[m], params.epsilon) for m in cluster):
                cluster.append(idx)
            else:
                remaining.append(idx)
        unused = remaining
        if len(cluster) > len(best):
            best = cluster
    if len(best) < params.min_cluster_size:
        return CorrespondenceSet()
    return CorrespondenceSet([pairs[i] for i in best])


def fit_rigid_transform(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping source points onto target points
    (SVD point-set alignment with reflection correction)."""
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.shape != target.shape or source.shape[0] < 3:
        raise ValueError("need matching (N>=3, 3) point sets")
    cs = source.mean(axis=0)
    ct = target.mean(axis=0)
    h = (source - cs).T @ (target - ct)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, ct - rot @ cs)


def estimate_pose(
    correspondences: CorrespondenceSet, params: RansacParams | None = None
) -> LocalizationResult:
    """RANSAC over key-pose positions, then a least-squares refit on inliers."""
    params = params or RansacParams()
    n = len(correspondences)
    if n < 3:
        return LocalizationResult(
            status=LocalizationStatus.INSUFFICIENT_MATCHES,
            consistency_cluster_size=n,
        )
    src = correspondences.source_positions()
    tgt = correspondences.target_positions()
    rng = np.random.default_rng([params.seed, 0x5AC])
    best_count = 0
    best_inliers: np.ndarray | None = None
    for _ in range(params.iterations):
        pick = rng.choice(n, size=3, replace=False)
        try:
            hyp = fit_rigid_transform(src[pick], tgt[pick])
        except np.linalg.LinAlgError:
            continue
        err = np.sqrt(np.sum((hyp.apply(src) - tgt) ** 2, axis=1))
        inliers = err <= params.inlier_radius
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None or best_count < 3:
        return LocalizationResult(
            status=LocalizationStatus.RANSAC_FAILED,
            consistency_cluster_size=n,
        )
    refit = fit_rigid_transform(src[best_inliers], tgt[best_inliers])
    kept = [p for p, ok in zip(correspondences.pairs, best_inliers) if ok]
    return LocalizationResult(
        status=LocalizationStatus.LOCALIZED,
        transform=refit,
        inliers=CorrespondenceSet(kept),
        consistency_cluster_size=n,
    )


def build_map(
    cloud: PointCloud,
    config: "PipelineConfig",
    include_points: bool = False,
    n_threads: int = 1,
) -> SegmentMap:
    """Target-side pipeline: ground filter, segment, describe, assemble the map."""
    work = cloud
    if config.ground_filter_target and len(work):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateGeometryWarning)
            work = filter_ground(work, config.pmf).non_ground
    segments = euclidean_cluster(work, config.segmentation)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGeometryWarning)
        described = describe_segments(segments, config.gestalt, n_threads=n_threads)
    return SegmentMap.from_described(
        described,
        fingerprint=config.map_fingerprint(),
        frame_id=cloud.frame_id,
        params={"segments": len(described)},
        include_points=include_points,
    )


def localize(
    source_cloud: PointCloud,
    smap: SegmentMap,
    model: ForestModel,
    config: "PipelineConfig",
    n_threads: int = 1,
) -> LocalizationResult:
    """Full pipeline: ground filter, segment, describe, match, filter, pose."""
    smap.check_fingerprint(config.map_fingerprint())

    cloud = source_cloud
    if config.ground_filter_source:
        if len(cloud) == 0:
            return LocalizationResult(status=LocalizationStatus.INSUFFICIENT_MATCHES)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateGeometryWarning)
            cloud = filter_ground(cloud, config.pmf).non_ground

    segments = euclidean_cluster(cloud, config.segmentation)
    if not segments:
        return LocalizationResult(status=LocalizationStatus.INSUFFICIENT_MATCHES)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGeometryWarning)
        described = describe_segments(segments, config.gestalt, n_threads=n_threads)
    candidates = match_segments(described, smap, model, config.matching)
    accepted = [c for c in candidates if c.accepted]
    result_info = dict(n_source_segments=len(segments), n_accepted_matches=len(accepted))
    if len(accepted) < config.consistency.min_cluster_size:
        return LocalizationResult(status=LocalizationStatus.INSUFFICIENT_MATCHES, **result_info)

    source_kp = {d.segment.segment_id: d.keypose for d in described}
    target_kp = {e.segment_id: e.keypose for e in smap.entries}
    cset = CorrespondenceSet(
        [
            Correspondence(
                source_keypose=source_kp[c.source_segment_id],
                target_keypose=target_kp[c.target_segment_id],
                weight=c.rf_score,
                source_id=c.source_segment_id,
                target_id=c.target_segment_id,
            )
            for c in accepted
        ]
    )
    filtered = consistency_filter(cset, config.consistency)
    if len(filtered) == 0:
        return LocalizationResult(status=LocalizationStatus.INSUFFICIENT_MATCHES, **result_info)
    result = estimate_pose(filtered, config.ransac)
    return LocalizationResult(
        status=result.status,
        transform=result.transform,
        inliers=result.inliers,
        consistency_cluster_size=result.consistency_cluster_size,
        **result_info,
    )
