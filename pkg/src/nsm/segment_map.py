"""Persisted target database of segments, key poses, and descriptors.

Entries are quantized to 32-bit floats at construction (key poses as
position + heading angle, descriptors verbatim), so save/load round-trips
are bit-exact and matching behaves identically before and after a reload.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FingerprintMismatchError
from .features import DESCRIPTOR_DIM, DescribedSegment, KeyPose
from .core.container import read_container, write_container

MAP_KIND = "nsm-map"
MAP_VERSION = 1


@dataclass(frozen=True)
class MapEntry:
    segment_id: int
    position: np.ndarray  # float32 (3,)
    heading: float
    isotropic: bool
    descriptor: np.ndarray  # float32 (66,)
    points: np.ndarray | None = None  # float32 (N, 3) payload, optional

    def __post_init__(self):
        desc = np.asarray(self.descriptor, dtype=np.float32).reshape(-1)
        if desc.shape[0] != DESCRIPTOR_DIM:
            raise ValueError(f"descriptor must have {DESCRIPTOR_DIM} dimensions, got {desc.shape[0]}")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float32).reshape(3))
        object.__setattr__(self, "heading", np.float32(self.heading))
        object.__setattr__(self, "descriptor", desc)
        if self.points is not None:
            object.__setattr__(
                self, "points", np.asarray(self.points, dtype=np.float32).reshape(-1, 3)
            )

    @property
    def keypose(self) -> KeyPose:
        return KeyPose.from_heading(
            self.position.astype(np.float64), float(self.heading), isotropic=self.isotropic
        )


@dataclass(frozen=True)
class SegmentMap:
    entries: list[MapEntry]
    fingerprint: str = ""
    frame_id: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [e.segment_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("segment ids in a map must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_described(
        cls,
        described: list[DescribedSegment],
        fingerprint: str = "",
        frame_id: str = "",
        params: dict | None = None,
        include_points: bool = False,
    ) -> SegmentMap:
        entries = [
            MapEntry(
                segment_id=d.segment.segment_id,
                position=d.keypose.position,
                heading=d.keypose.heading,
                isotropic=d.keypose.isotropic,
                descriptor=d.descriptor,
                points=d.segment.points if include_points else None,
            )
            for d in described
        ]
        return cls(entries, fingerprint=fingerprint, frame_id=frame_id, params=params or {})

    def descriptor_matrix(self) -> np.ndarray:
        """Entries' descriptors stacked as a float64 (N, 66) matrix."""
        if not self.entries:
            return np.empty((0, DESCRIPTOR_DIM))
        return np.stack([e.descriptor for e in self.entries]).astype(np.float64)

    def check_fingerprint(self, active_fingerprint: str) -> None:
        if self.fingerprint and self.fingerprint != active_fingerprint:
            raise FingerprintMismatchError(
                f"map was built with parameter fingerprint {self.fingerprint}, "
                f"but the active config has {active_fingerprint}"
            )


def save_map(smap: SegmentMap, path) -> None:
    n = len(smap.entries)
    positions = np.zeros((n, 3), dtype=np.float32)
    headings = np.zeros(n, dtype=np.float32)
    descriptors = np.zeros((n, DESCRIPTOR_DIM), dtype=np.float32)
    point_counts = []
    point_blocks = []
    for i, e in enumerate(smap.entries):
        positions[i] = e.position
        headings[i] = e.heading
        descriptors[i] = e.descriptor
        point_counts.append(0 if e.points is None else len(e.points))
        if e.points is not None:
            point_blocks.append(e.points)
    points = (
        np.concatenate(point_blocks, axis=0)
        if point_blocks
        else np.empty((0, 3), dtype=np.float32)
    )
    meta = {
        "fingerprint": smap.fingerprint,
        "frame_id": smap.frame_id,
        "params": smap.params,
        "segment_ids": [int(e.segment_id) for e in smap.entries],
        "isotropic": [bool(e.isotropic) for e in smap.entries],
        "point_counts": point_counts,
        "descriptor_dim": DESCRIPTOR_DIM,
    }
    write_container(
        path,
        MAP_KIND,
        MAP_VERSION,
        meta,
        {
            "positions": positions,
            "headings": headings,
            "descriptors": descriptors,
            "points": points,
        },
    )


def load_map(path, active_fingerprint: str | None = None) -> SegmentMap:
    """Load a map; if `active_fingerprint` is given, enforce that it matches."""
    meta, arrays = read_container(path, MAP_KIND, MAP_VERSION)
    if meta.get("descriptor_dim") != DESCRIPTOR_DIM:
        raise ValueError(
            f"map stores {meta.get('descriptor_dim')}-D descriptors, expected {DESCRIPTOR_DIM}"
        )
    ids = meta["segment_ids"]
    isotropic = meta["isotropic"]
    counts = meta["point_counts"]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    entries = []
    for i, sid in enumerate(ids):
        pts = None
        if counts[i]:
            pts = arrays["points"][offsets[i] : offsets[i + 1]]
        entries.append(
            MapEntry(
                segment_id=sid,
                position=arrays["positions"][i],
                heading=arrays["headings"][i],
                isotropic=isotropic[i],
                descriptor=arrays["descriptors"][i],
                points=pts,
            )
        )
    smap = SegmentMap(
        entries,
        fingerprint=meta.get("fingerprint", ""),
        frame_id=meta.get("frame_id", ""),
        params=meta.get("params", {}),
    )
    if active_fingerprint is not None:
        smap.check_fingerprint(active_fingerprint)
    return smap
