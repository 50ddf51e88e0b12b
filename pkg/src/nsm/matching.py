"""Candidate segment correspondences between a source cloud and the target map.

For every source segment, the k nearest target descriptors are proposed and
each proposal is scored by the forest on (|f_s|, |f_t|, |f_s - f_t|); the
score is thresholded into an accepted flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.geometry import RigidTransform
from .core.index import SpatialIndex
from .segment_map import SegmentMap
from .features import DESCRIPTOR_DIM, DescribedSegment, KeyPose
from .forest import ForestModel, TrainingSet, rf_score

PAIR_FEATURE_DIM = 3 * DESCRIPTOR_DIM


@dataclass(frozen=True)
class MatchParams:
    k_neighbours: int = 200
    rf_threshold: float = 0.69

    def __post_init__(self):
        if self.k_neighbours < 1:
            raise ValueError("k_neighbours must be >= 1")
        if not 0.0 <= self.rf_threshold <= 1.0:
            raise ValueError("rf_threshold must be in [0, 1]")


@dataclass(frozen=True)
class MatchCandidate:
    source_segment_id: int
    target_segment_id: int
    l2_distance: float
    rf_score: float
    accepted: bool


def build_pair_feature(f_s: np.ndarray, f_t: np.ndarray) -> np.ndarray:
    """Classifier input for one candidate pair: [|f_s|, |f_t|, |f_s - f_t|]."""
    f_s = np.asarray(f_s, dtype=np.float64).reshape(-1)
    f_t = np.asarray(f_t, dtype=np.float64).reshape(-1)
    if f_s.shape[0] != DESCRIPTOR_DIM or f_t.shape[0] != DESCRIPTOR_DIM:
        raise ValueError(f"descriptors must have {DESCRIPTOR_DIM} dimensions")
    return np.concatenate([np.abs(f_s), np.abs(f_t), np.abs(f_s - f_t)])


def _pair_feature_block(f_s: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """build_pair_feature for one source against an (N, 66) target block."""
    block = np.empty((len(targets), PAIR_FEATURE_DIM))
    block[:, :DESCRIPTOR_DIM] = np.abs(f_s)
    block[:, DESCRIPTOR_DIM : 2 * DESCRIPTOR_DIM] = np.abs(targets)
    block[:, 2 * DESCRIPTOR_DIM :] = np.abs(f_s - targets)
    return block


def match_segments(
    source: list[DescribedSegment],
    target: SegmentMap,
    model: ForestModel,
    params: MatchParams | None = None,
) -> list[MatchCandidate]:
    """Score k-NN candidates for every source segment against the map.

    Returns all candidates (accepted or not), sorted by descending score;
    ties fall back to (source id, target id) order.
    """
    params = params or MatchParams()
    if len(target) == 0:
        raise ValueError("target map is empty")
    if model.n_features != PAIR_FEATURE_DIM:
        raise ValueError(
            f"model expects {model.n_features} features, pair features have {PAIR_FEATURE_DIM}"
        )
    target_desc = target.descriptor_matrix()
    index = SpatialIndex(target_desc)
    candidates = []
    for ds in source:
        f_s = np.asarray(ds.descriptor, dtype=np.float64)
        hits = index.knn(f_s, params.k_neighbours)
        rows = [row for row, _ in hits]
        scores = rf_score(model, _pair_feature_block(f_s, target_desc[rows]))
        for (row, dist), w in zip(hits, scores):
            candidates.append(
                MatchCandidate(
                    source_segment_id=ds.segment.segment_id,
                    target_segment_id=target.entries[row].segment_id,
                    l2_distance=dist,
                    rf_score=float(w),
                    accepted=bool(w >= params.rf_threshold),
                )
            )
    candidates.sort(key=lambda c: (-c.rf_score, c.source_segment_id, c.target_segment_id))
    return candidates


def label_pairs(
    source_keyposes: list[KeyPose],
    target_keyposes: list[KeyPose],
    gt_transform: RigidTransform,
    radius: float = 0.5,
) -> list[tuple[int, int, bool]]:
    """Label every (source, target) pair: True iff the key poses land within
    `radius` of each other under the ground-truth transform (strict <)."""
    src = np.stack([kp.position for kp in source_keyposes]) if source_keyposes else np.empty((0, 3))
    tgt = np.stack([kp.position for kp in target_keyposes]) if target_keyposes else np.empty((0, 3))
    src = gt_transform.apply(src)
    out = []
    for i in range(len(src)):
        dists = np.sqrt(np.sum((tgt - src[i]) ** 2, axis=1))
        for j in range(len(tgt)):
            out.append((i, j, bool(dists[j] < radius)))
    return out


def make_training_set(
    source: list[DescribedSegment],
    target: SegmentMap,
    gt_transform: RigidTransform,
    radius: float = 0.5,
) -> TrainingSet:
    """All source x target pairs as labeled classifier rows."""
    labels = label_pairs(
        [ds.keypose for ds in source],
        [e.keypose for e in target.entries],
        gt_transform,
        radius=radius,
    )
    target_desc = target.descriptor_matrix()
    rows = np.empty((len(labels), PAIR_FEATURE_DIM))
    flags = np.empty(len(labels), dtype=bool)
    for k, (i, j, is_match) in enumerate(labels):
        rows[k] = build_pair_feature(source[i].descriptor, target_desc[j])
        flags[k] = is_match
    return TrainingSet(rows, flags)
