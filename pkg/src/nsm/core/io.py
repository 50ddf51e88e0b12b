"""Point-cloud and trajectory file I/O (ASCII formats only)."""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from ..errors import DroppedPointsWarning, FormatError
from .geometry import PointCloud, RigidTransform

FORMATS = ("xyz", "ply", "pcd")

_SUFFIX_TO_FORMAT = {".xyz": "xyz", ".txt": "xyz", ".ply": "ply", ".pcd": "pcd"}


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in FORMATS:
            raise ValueError(f"unsupported format {fmt!r}; expected one of {FORMATS}")
        return fmt
    try:
        return _SUFFIX_TO_FORMAT[path.suffix.lower()]
    except KeyError:
        raise ValueError(f"cannot infer cloud format from suffix {path.suffix!r}") from None


def _finite_filter(rows: list[list[float]], path: Path) -> np.ndarray:
    pts = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    finite = np.all(np.isfinite(pts), axis=1)
    dropped = int(len(pts) - finite.sum())
    if dropped:
        warnings.warn(
            f"{path}: dropped {dropped} non-finite point(s)", DroppedPointsWarning, stacklevel=3
        )
    return pts[finite]


def _parse_xyz(lines, path: Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) < 3:
            raise FormatError(f"{path}:{lineno}: expected at least 3 columns")
        try:
            rows.append([float(parts[0]), float(parts[1]), float(parts[2])])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return _finite_filter(rows, path)


def _parse_ply(lines, path: Path) -> np.ndarray:
    it = iter(enumerate(lines, start=1))
    try:
        _, first = next(it)
    except StopIteration:
        raise FormatError(f"{path}: empty file") from None
    if first.strip() != "ply":
        raise FormatError(f"{path}: missing 'ply' magic line")
    n_vertices = None
    properties = []
    for lineno, line in it:
        tokens = line.strip().split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1:] != ["ascii", "1.0"]:
                raise FormatError(f"{path}:{lineno}: only 'format ascii 1.0' is supported")
        elif tokens[0] == "element":
            if tokens[1] == "vertex":
                n_vertices = int(tokens[2])
            elif n_vertices is not None:
                raise FormatError(f"{path}:{lineno}: elements after 'vertex' are not supported")
        elif tokens[0] == "property" and n_vertices is not None:
            properties.append(tokens[-1])
        elif tokens[0] == "end_header":
            break
    else:
        raise FormatError(f"{path}: header has no 'end_header'")
    if n_vertices is None:
        raise FormatError(f"{path}: header has no 'element vertex'")
    for axis in ("x", "y", "z"):
        if axis not in properties:
            raise FormatError(f"{path}: vertex element lacks property {axis!r}")
    cols = [properties.index(a) for a in ("x", "y", "z")]
    rows = []
    for lineno, line in it:
        body = line.strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) < len(properties):
            raise FormatError(f"{path}:{lineno}: expected {len(properties)} columns")
        rows.append([float(parts[c]) for c in cols])
        if len(rows) == n_vertices:
            break
    if len(rows) != n_vertices:
        raise FormatError(f"{path}: expected {n_vertices} vertices, found {len(rows)}")
    return _finite_filter(rows, path)


def _parse_pcd(lines, path: Path) -> np.ndarray:
    fields = None
    n_points = None
    data_mode = None
    it = iter(enumerate(lines, start=1))
    for lineno, line in it:
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        key = tokens[0].upper()
        if key == "VERSION":
            if tokens[1] not in ("0.7", ".7"):
                raise FormatError(f"{path}:{lineno}: only PCD v0.7 is supported")
        elif key == "FIELDS":
            fields = tokens[1:]
        elif key == "POINTS":
            n_points = int(tokens[1])
        elif key == "DATA":
            data_mode = tokens[1]
            break
    if data_mode != "ascii":
        raise FormatError(f"{path}: only 'DATA ascii' is supported")
    if fields is None or n_points is None:
        raise FormatError(f"{path}: header lacks FIELDS or POINTS")
    for axis in ("x", "y", "z"):
        if axis not in fields:
            raise FormatError(f"{path}: FIELDS lacks {axis!r}")
    cols = [fields.index(a) for a in ("x", "y", "z")]
    rows = []
    for lineno, line in it:
        body = line.strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) < len(fields):
            raise FormatError(f"{path}:{lineno}: expected {len(fields)} columns")
        rows.append([float(parts[c]) for c in cols])
    if len(rows) != n_points:
        raise FormatError(f"{path}: expected {n_points} points, found {len(rows)}")
    return _finite_filter(rows, path)


_PARSERS = {"xyz": _parse_xyz, "ply": _parse_ply, "pcd": _parse_pcd}


def load_cloud(path, fmt: str | None = None, frame_id: str = "") -> PointCloud:
    """Parse a point cloud file; non-finite rows are dropped with a warning."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    with open(path, "r", encoding="utf-8") as fh:
        pts = _PARSERS[fmt](fh, path)
    return PointCloud(pts, frame_id=frame_id or path.stem)


def save_cloud(cloud: PointCloud, path, fmt: str | None = None) -> None:
    """Write a cloud with full float precision so load∘save round-trips exactly."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    pts = cloud.points
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "ply":
            fh.write(
                "ply\nformat ascii 1.0\n"
                f"element vertex {len(pts)}\n"
                "property float x\nproperty float y\nproperty float z\n"
                "end_header\n"
            )
        elif fmt == "pcd":
            fh.write(
                "# .PCD v0.7 - Point Cloud Data file format\n"
                "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
                f"WIDTH {len(pts)}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
                f"POINTS {len(pts)}\nDATA ascii\n"
            )
        for x, y, z in pts:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def load_trajectory(path) -> list[tuple[str, RigidTransform]]:
    """Read 'frame_id tx ty tz qx qy qz qw' lines (scalar-last unit quaternion)."""
    path = Path(path)
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 8:
                raise FormatError(f"{path}:{lineno}: expected 8 columns, got {len(parts)}")
            frame_id = parts[0]
            vals = [float(v) for v in parts[1:]]
            quat = np.asarray(vals[3:7])
            norm = np.linalg.norm(quat)
            if abs(norm - 1.0) > 1e-6:
                raise FormatError(f"{path}:{lineno}: quaternion norm {norm:.6f} is not 1")
            out.append((frame_id, RigidTransform.from_quaternion(quat / norm, vals[0:3])))
    return out


def save_trajectory(entries: list[tuple[str, RigidTransform]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame_id, tf in entries:
            t = tf.translation
            q = tf.to_quaternion()
            fh.write(
                f"{frame_id} {t[0]:.17g} {t[1]:.17g} {t[2]:.17g} "
                f"{q[0]:.17g} {q[1]:.17g} {q[2]:.17g} {q[3]:.17g}\n"
            )
