"""Segment-based global localization for LIDAR point clouds.

A source point cloud is localized within a prior segment map by stripping
ground points, clustering object-sized segments, describing each with an
oriented hybrid shape descriptor, gating candidate matches with a Random
Forest, and estimating the 6-DoF alignment via geometric-consistency
filtering and RANSAC.
"""

from .config import PipelineConfig, build_config
from .core import PointCloud, RigidTransform, SpatialIndex, load_cloud, save_cloud
from .evaluation import PoseError, RocCurve, pose_error, roc, run_report
from .features import (
    DESCRIPTOR_DIM,
    DescribedSegment,
    GestaltParams,
    KeyPose,
    describe_segment,
    describe_segments,
    eigen_features,
    extract_keypose,
    gestalt_descriptor,
)
from .forest import ForestModel, RfParams, TrainingSet, rf_load, rf_save, rf_score, rf_train
from .ground_filter import GroundLabeling, PmfParams, filter_ground
from .matching import (
    MatchCandidate,
    MatchParams,
    build_pair_feature,
    label_pairs,
    make_training_set,
    match_segments,
)
from .registration import (
    ConsistencyParams,
    Correspondence,
    CorrespondenceSet,
    LocalizationResult,
    LocalizationStatus,
    RansacParams,
    build_map,
    consistency_filter,
    estimate_pose,
    fit_rigid_transform,
    localize,
    pairwise_consistent,
)
from .segment_map import MapEntry, SegmentMap, load_map, save_map
from .segmentation import Segment, SegmentationParams, euclidean_cluster
from .synthgen import (
    CLUTTER_LABEL,
    GROUND_LABEL,
    LabeledScene,
    Perturbation,
    SceneSpec,
    Terrain,
    derive_source,
    generate_scene,
)

__version__ = "0.1.0"
