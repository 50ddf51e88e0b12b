"""Command-line entry point wiring all pipeline stages.

Exit codes: 0 success, 2 I/O error, 3 validation/config error, 4 pipeline
failure (a stage ran but could not produce a localization).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .core.geometry import PointCloud, RigidTransform
from .core.io import load_cloud, load_trajectory, save_cloud
from .segment_map import SegmentMap, load_map, save_map
from .errors import FingerprintMismatchError, FormatError, NsmError, PipelineError
from .evaluation import roc, run_report
from .features import describe_segments
from .forest import TrainingSet, rf_load, rf_save, rf_train
from .ground_filter import filter_ground
from .matching import match_segments
from .registration import LocalizationResult, LocalizationStatus, build_map, localize
from .segmentation import Segment, euclidean_cluster
from .synthgen import Perturbation, SceneSpec, Terrain, derive_source, generate_scene

log = logging.getLogger("nsm")


def _coerce(text: str):
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _flag_overrides(args) -> dict:
    """Collect config overrides from --set plus the ergonomic shortcuts."""
    overrides: dict[str, dict] = {}

    def put(section, key, value):
        if value is not None:
            overrides.setdefault(section, {})[key] = value

    for item in getattr(args, "set", None) or []:
        try:
            dotted, raw = item.split("=", 1)
            section, key = dotted.split(".", 1)
        except ValueError:
            raise ValueError(f"--set expects section.key=value, got {item!r}") from None
        put(section.strip(), key.strip(), _coerce(raw.strip()))

    put("pmf", "cell_size", getattr(args, "pmf_cell_size", None))
    put("pmf", "initial_window", getattr(args, "pmf_initial_window", None))
    put("pmf", "max_window", getattr(args, "pmf_max_window", None))
    put("pmf", "slope", getattr(args, "pmf_slope", None))
    put("pmf", "initial_height_thresh", getattr(args, "pmf_initial_height", None))
    put("pmf", "max_height_thresh", getattr(args, "pmf_max_height", None))
    put("segmentation", "min_points", getattr(args, "min_points", None))
    put("segmentation", "max_points", getattr(args, "max_points", None))
    put("segmentation", "max_distance", getattr(args, "max_dist", None))
    put("matching", "k_neighbours", getattr(args, "k", None))
    put("matching", "rf_threshold", getattr(args, "threshold", None))
    put("rf", "n_trees", getattr(args, "trees", None))
    put("rf", "max_depth", getattr(args, "depth", None))
    if getattr(args, "seed", None) is not None:
        put("rf", "seed", args.seed)
        put("ransac", "seed", args.seed)
    return overrides


def _resolve_config(args) -> config_mod.PipelineConfig:
    file_data: dict = {}
    if getattr(args, "profile", None):
        file_data = config_mod.load_config_file(config_mod.profile_path(args.profile))
    if getattr(args, "config", None):
        explicit = config_mod.load_config_file(args.config)
        for section, values in explicit.items():
            if isinstance(values, dict):
                file_data.setdefault(section, {}).update(values)
            else:
                file_data[section] = values
    cfg = config_mod.build_config(file_data, _flag_overrides(args))
    log.info("resolved-config %s", cfg.resolved_json())
    return cfg


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _transform_to_dict(tf: RigidTransform) -> dict:
    return {
        "quaternion_xyzw": [float(v) for v in tf.to_quaternion()],
        "translation": [float(v) for v in tf.translation],
    }


def _transform_from_dict(data: dict) -> RigidTransform:
    return RigidTransform.from_quaternion(data["quaternion_xyzw"], data["translation"])


def _result_to_dict(result: LocalizationResult, frame_id: str) -> dict:
    return {
        "frame_id": frame_id,
        "status": result.status.value,
        "transform": None if result.transform is None else _transform_to_dict(result.transform),
        "inliers": [
            {"source_id": p.source_id, "target_id": p.target_id, "weight": p.weight}
            for p in result.inliers.pairs
        ],
        "consistency_cluster_size": result.consistency_cluster_size,
        "n_source_segments": result.n_source_segments,
        "n_accepted_matches": result.n_accepted_matches,
    }


# ---------------------------------------------------------------- subcommands


def cmd_gen_scene(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    objects = data.get("objects", {})
    spec = SceneSpec(
        seed=data.get("seed", 0),
        extent=tuple(data.get("extent", (40.0, 40.0))),
        terrain=Terrain(**data.get("terrain", {"kind": "flat"})),
        n_trees=objects.get("tree", 0),
        n_bushes=objects.get("bush", 0),
        n_boxes=objects.get("box", 0),
        points_per_object=data.get("points_per_object", 600),
        ground_density=data.get("ground_density", 50.0),
        clutter_density=data.get("clutter_density", 0.3),
        min_spacing=data.get("min_spacing", 3.0),
        edge_margin=data.get("edge_margin", 2.5),
    )
    scene = generate_scene(spec)
    save_cloud(scene.cloud, args.out)
    _write_json(
        args.labels,
        {
            "labels": scene.labels.tolist(),
            "objects": [
                {"id": o.object_id, "kind": o.kind, "center": [float(v) for v in o.center]}
                for o in scene.objects
            ],
        },
    )
    log.info("scene: %d points, %d objects", len(scene.cloud), len(scene.objects))

    if args.source_out:
        source_spec = data.get("source", {})
        tf_spec = source_spec.get("transform", {})
        transform = RigidTransform.from_yaw(
            np.deg2rad(tf_spec.get("yaw_deg", 0.0)),
            tf_spec.get("translation", (0.0, 0.0, 0.0)),
        )
        perturbation = Perturbation(**source_spec.get("perturbation", {}))
        source_cloud, gt = derive_source(
            scene, transform, perturbation, seed=source_spec.get("seed", spec.seed)
        )
        save_cloud(source_cloud, args.source_out)
        if args.gt_out:
            _write_json(args.gt_out, _transform_to_dict(gt))
    return 0


def cmd_filter_ground(args) -> int:
    cfg = _resolve_config(args)
    cloud = load_cloud(args.infile)
    labeling = filter_ground(cloud, cfg.pmf)
    save_cloud(labeling.non_ground, args.out)
    if args.ground:
        save_cloud(labeling.ground, args.ground)
    log.info(
        "ground filter: %d ground / %d non-ground", len(labeling.ground), len(labeling.non_ground)
    )
    return 0


def _save_segments(segments: list[Segment], outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for seg in segments:
        name = f"segment_{seg.segment_id:04d}.ply"
        save_cloud(PointCloud(seg.points, frame_id=seg.source_frame_id), outdir / name)
        files.append({"segment_id": seg.segment_id, "file": name, "n_points": len(seg)})
    _write_json(outdir / "index.json", {"segments": files})


def _load_segments(indir: Path) -> list[Segment]:
    with open(indir / "index.json", "r", encoding="utf-8") as fh:
        index = json.load(fh)
    segments = []
    for entry in index["segments"]:
        cloud = load_cloud(indir / entry["file"])
        segments.append(
            Segment(segment_id=entry["segment_id"], points=cloud.points, source_frame_id=cloud.frame_id)
        )
    return segments


def cmd_segment(args) -> int:
    cfg = _resolve_config(args)
    cloud = load_cloud(args.infile)
    segments = euclidean_cluster(cloud, cfg.segmentation)
    _save_segments(segments, Path(args.out))
    log.info("segmentation: %d segments", len(segments))
    return 0


def cmd_describe(args) -> int:
    cfg = _resolve_config(args)
    segments = _load_segments(Path(args.segments))
    described = describe_segments(segments, cfg.gestalt, n_threads=args.threads)
    smap = SegmentMap.from_described(
        described, fingerprint=cfg.map_fingerprint(), params={"segments": len(described)}
    )
    save_map(smap, args.out)
    log.info("described %d segments -> %s", len(described), args.out)
    return 0


def cmd_build_map(args) -> int:
    cfg = _resolve_config(args)
    cloud = load_cloud(args.infile)
    smap = build_map(cloud, cfg, include_points=args.include_points, n_threads=args.threads)
    save_map(smap, args.out)
    log.info("map: %d segments from %d points", len(smap), len(cloud))
    return 0


def cmd_train_rf(args) -> int:
    cfg = _resolve_config(args)
    raw = np.loadtxt(args.pairs, delimiter=",", ndmin=2)
    if raw.shape[1] < 2:
        raise FormatError(f"{args.pairs}: expected rows of label,f_1,...,f_D")
    data = TrainingSet(raw[:, 1:], raw[:, 0] > 0.5)
    model = rf_train(data, cfg.rf, n_threads=args.threads)
    rf_save(model, args.out)
    log.info(
        "forest: %d trees on %d rows, oob=%s", cfg.rf.n_trees, len(data.labels), model.oob_score
    )
    return 0


def cmd_match(args) -> int:
    cfg = _resolve_config(args)
    smap = load_map(args.map, active_fingerprint=cfg.map_fingerprint())
    model = rf_load(args.model)
    segments = _load_segments(Path(args.source))
    described = describe_segments(segments, cfg.gestalt, n_threads=args.threads)
    candidates = match_segments(described, smap, model, cfg.matching)
    _write_json(
        args.out,
        [
            {
                "source_id": c.source_segment_id,
                "target_id": c.target_segment_id,
                "l2_distance": c.l2_distance,
                "rf_score": c.rf_score,
                "accepted": c.accepted,
            }
            for c in candidates
        ],
    )
    if args.dump_pairs:
        if not args.gt_transform:
            raise ValueError("--dump-pairs needs --gt-transform for labels")
        with open(args.gt_transform, "r", encoding="utf-8") as fh:
            gt = _transform_from_dict(json.load(fh))
        from .matching import make_training_set

        training = make_training_set(described, smap, gt)
        rows = np.column_stack([training.labels.astype(np.float64), training.features])
        np.savetxt(args.dump_pairs, rows, delimiter=",", fmt="%.17g")
    log.info("matching: %d candidates, %d accepted", len(candidates), sum(c.accepted for c in candidates))
    return 0


def cmd_localize(args) -> int:
    cfg = _resolve_config(args)
    smap = load_map(args.map, active_fingerprint=cfg.map_fingerprint())
    model = rf_load(args.model)
    cloud = load_cloud(args.source)
    result = localize(cloud, smap, model, cfg, n_threads=args.threads)
    _write_json(args.out, _result_to_dict(result, cloud.frame_id))
    log.info("localize: %s", result.status.value)
    if result.status is not LocalizationStatus.LOCALIZED:
        raise PipelineError(f"localization failed: {result.status.value}")
    return 0


def cmd_eval(args) -> int:
    results_dir = Path(args.results)
    if not results_dir.is_dir():
        raise FileNotFoundError(f"results directory {results_dir} does not exist")
    gt_by_frame = dict(load_trajectory(args.gt))
    results = []
    truths = []
    for path in sorted(results_dir.glob("*.json")):
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        frame_id = data.get("frame_id")
        if frame_id not in gt_by_frame:
            raise ValueError(f"{path}: frame {frame_id!r} has no ground-truth pose")
        status = LocalizationStatus(data["status"])
        tf = None
        if data.get("transform"):
            tf = _transform_from_dict(data["transform"])
        if status is LocalizationStatus.LOCALIZED:
            results.append(_LocalizedStub(status, tf))
        else:
            results.append(_LocalizedStub(status, None))
        truths.append(gt_by_frame[frame_id])
    report = run_report(results, truths)
    _write_json(args.out, report.to_dict())
    if args.roc:
        if not args.scores:
            raise ValueError("--roc needs --scores with score,label rows")
        raw = np.loadtxt(args.scores, delimiter=",", ndmin=2)
        curve = roc([(row[0], row[1] > 0.5) for row in raw], target_fpr=args.target_fpr)
        with open(args.roc, "w", encoding="utf-8") as fh:
            fh.write(f"# auc={curve.auc:.17g} operating_threshold={curve.operating_threshold:.17g}\n")
            fh.write("threshold,tpr,fpr\n")
            for thr, tpr, fpr in zip(curve.thresholds, curve.tpr, curve.fpr):
                fh.write(f"{thr:.17g},{tpr:.17g},{fpr:.17g}\n")
    log.info("eval: %d/%d localized", report.n_localized, report.n_frames)
    return 0


class _LocalizedStub:
    """Minimal result view for run_report built from persisted JSON."""

    def __init__(self, status, transform):
        self.status = status
        self.transform = transform


# -------------------------------------------------------------------- parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--profile", help="built-in parameter profile (kitti, cp)")
    parser.add_argument("--seed", type=int, help="seed for forest training and RANSAC")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (results identical)")
    parser.add_argument("--log-level", default="warning", help="logging level")
    parser.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override any config value (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsm", description="Segment-based global localization for LIDAR point clouds"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a labeled synthetic scene")
    p.add_argument("--spec", required=True, help="scene spec JSON")
    p.add_argument("--out", required=True, help="scene cloud output (.ply/.pcd/.xyz)")
    p.add_argument("--labels", required=True, help="per-point labels JSON output")
    p.add_argument("--source-out", help="also derive a perturbed source cloud")
    p.add_argument("--gt-out", help="ground-truth transform JSON for the source cloud")
    _add_common(p)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("filter-ground", help="split a cloud into ground / non-ground")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="non-ground output cloud")
    p.add_argument("--ground", help="optional ground output cloud")
    p.add_argument("--pmf-cell-size", type=float)
    p.add_argument("--pmf-initial-window", type=int)
    p.add_argument("--pmf-max-window", type=int)
    p.add_argument("--pmf-slope", type=float)
    p.add_argument("--pmf-initial-height", type=float)
    p.add_argument("--pmf-max-height", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_filter_ground)

    p = sub.add_parser("segment", help="cluster a non-ground cloud into segments")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="segment output directory")
    p.add_argument("--min-points", type=int)
    p.add_argument("--max-points", type=int)
    p.add_argument("--max-dist", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("describe", help="compute key poses and descriptors for segments")
    p.add_argument("--segments", required=True, help="segment directory from 'segment'")
    p.add_argument("--out", required=True, help="output .nsm map file")
    _add_common(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("build-map", help="filter + segment + describe + persist a target map")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="output .nsm map file")
    p.add_argument("--include-points", action="store_true", help="store segment point payloads")
    _add_common(p)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("train-rf", help="train the match classifier from labeled pairs")
    p.add_argument("--pairs", required=True, help="CSV rows: label,f_1,...,f_D")
    p.add_argument("--out", required=True, help="output .rf model file")
    p.add_argument("--trees", type=int)
    p.add_argument("--depth", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_train_rf)

    p = sub.add_parser("match", help="propose and gate segment correspondences")
    p.add_argument("--map", required=True)
    p.add_argument("--source", required=True, help="segment directory from 'segment'")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True, help="matches JSON output")
    p.add_argument("--dump-pairs", help="also write labeled classifier rows (CSV)")
    p.add_argument("--gt-transform", help="ground-truth transform JSON for --dump-pairs")
    _add_common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("localize", help="full pipeline: localize a cloud in a map")
    p.add_argument("--map", required=True)
    p.add_argument("--source", required=True, help="source cloud file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="result JSON output")
    _add_common(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="aggregate localization results against ground truth")
    p.add_argument("--results", required=True, help="directory of result JSON files")
    p.add_argument("--gt", required=True, help="trajectory file: frame_id t q")
    p.add_argument("--out", required=True, help="report JSON output")
    p.add_argument("--roc", help="ROC curve CSV output")
    p.add_argument("--scores", help="scored pairs CSV (score,label) for --roc")
    p.add_argument("--target-fpr", type=float, default=0.1)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        log.error("%s", exc)
        print(f"nsm: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"nsm: {exc}", file=sys.stderr)
        return 2
    except (FingerprintMismatchError, ValueError) as exc:
        print(f"nsm: {exc}", file=sys.stderr)
        return 3
    except (PipelineError, NsmError) as exc:
        print(f"nsm: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
