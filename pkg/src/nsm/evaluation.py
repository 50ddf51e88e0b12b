"""Pose-error metrics and ROC evaluation of match classifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.geometry import RigidTransform


@dataclass(frozen=True)
class PoseError:
    translation: float  # meters
    rotation: float  # radians, in [0, pi]


def rotation_geodesic(rotations: np.ndarray) -> np.ndarray:
    """Geodesic angle of one or more rotation matrices, arccos((trace - 1) / 2).

    The cosine is clamped to [-1, 1] so floating-point drift in near-identity
    or near-pi rotations can never produce a domain error.
    """
    rots = np.asarray(rotations, dtype=np.float64)
    trace = np.trace(rots, axis1=-2, axis2=-1)
    return np.arccos(np.clip((trace - 1.0) / 2.0, -1.0, 1.0))


def pose_error(estimated: RigidTransform, reference: RigidTransform) -> PoseError:
    """Error of `estimated` against `reference` via dT = T_e @ T_c^-1."""
    delta = estimated.compose(reference.invert())
    return PoseError(
        translation=float(np.linalg.norm(delta.translation)),
        rotation=float(rotation_geodesic(delta.rotation)),
    )


@dataclass(frozen=True)
class RocCurve:
    # One row per distinct score threshold, descending; rates are fractions
    # of positives/negatives scoring >= threshold.
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float
    operating_threshold: float
    operating_tpr: float
    operating_fpr: float


def roc(scored_pairs, target_fpr: float = 0.1) -> RocCurve:
    """Exact ROC curve of (score, label) pairs with trapezoidal AUC.

    Also picks the operating point whose false-positive rate is closest to
    `target_fpr` (ties prefer the higher threshold).
    """
    pairs = list(scored_pairs)
    scores = np.asarray([s for s, _ in pairs], dtype=np.float64)
    labels = np.asarray([bool(l) for _, l in pairs])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative labels")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate([distinct, [len(sorted_scores) - 1]])  # last index per distinct score
    tp = np.cumsum(sorted_labels)[cut]
    fp = np.cumsum(~sorted_labels)[cut]
    thresholds = sorted_scores[cut]
    tpr = tp / n_pos
    fpr = fp / n_neg

    full_fpr = np.concatenate([[0.0], fpr])
    full_tpr = np.concatenate([[0.0], tpr])
    auc = float(np.trapezoid(full_tpr, full_fpr))

    k = int(np.argmin(np.abs(fpr - target_fpr)))
    return RocCurve(
        thresholds=thresholds,
        tpr=tpr,
        fpr=fpr,
        auc=auc,
        operating_threshold=float(thresholds[k]),
        operating_tpr=float(tpr[k]),
        operating_fpr=float(fpr[k]),
    )


@dataclass(frozen=True)
class RunReport:
    n_frames: int
    n_localized: int
    translation_rmse: float | None
    translation_std: float | None
    rotation_rmse: float | None
    rotation_std: float | None

    def to_dict(self) -> dict:
        return {
            "frames": self.n_frames,
            "localizations": self.n_localized,
            "translation_rmse_m": self.translation_rmse,
            "translation_std_m": self.translation_std,
            "rotation_rmse_deg": None
            if self.rotation_rmse is None
            else float(np.rad2deg(self.rotation_rmse)),
            "rotation_std_deg": None
            if self.rotation_std is None
            else float(np.rad2deg(self.rotation_std)),
        }


def run_report(results, ground_truth) -> RunReport:
    """Aggregate localization results against per-frame ground-truth transforms.

    `results` and `ground_truth` are aligned lists; entries whose result is
    None or not localized count only toward the frame total. RMSE and the
    (population) standard deviation are over localized frames.
    """
    from .registration import LocalizationStatus

    if len(results) != len(ground_truth):
        raise ValueError("results and ground truth must be aligned")
    e_t = []
    e_r = []
    for res, gt in zip(results, ground_truth):
        if res is None or res.status is not LocalizationStatus.LOCALIZED:
            continue
        err = pose_error(res.transform, gt)
        e_t.append(err.translation)
        e_r.append(err.rotation)
    if not e_t:
        return RunReport(len(results), 0, None, None, None, None)
    e_t = np.asarray(e_t)
    e_r = np.asarray(e_r)
    return RunReport(
        n_frames=len(results),
        n_localized=len(e_t),
        translation_rmse=float(np.sqrt(np.mean(e_t**2))),
        translation_std=float(np.std(e_t)),
        rotation_rmse=float(np.sqrt(np.mean(e_r**2))),
        rotation_std=float(np.std(e_r)),
    )
