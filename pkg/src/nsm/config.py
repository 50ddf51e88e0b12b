"""Layered pipeline configuration: defaults < profile/file < flags.

Every value tracks where it came from, the resolved config can be dumped
as one machine-readable line, and the preprocessing/description sections
are hashed into a fingerprint that maps carry so stale parameter
combinations fail loudly at query time.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .features import GestaltParams
from .forest import RfParams
from .ground_filter import PmfParams
from .matching import MatchParams
from .registration import ConsistencyParams, RansacParams
from .segmentation import SegmentationParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTION_TYPES = {
    "pmf": PmfParams,
    "segmentation": SegmentationParams,
    "gestalt": GestaltParams,
    "rf": RfParams,
    "matching": MatchParams,
    "consistency": ConsistencyParams,
    "ransac": RansacParams,
}

PIPELINE_FLAGS = ("ground_filter_source", "ground_filter_target")

PROFILE_DIR = Path(__file__).parent / "profiles"


@dataclass(frozen=True)
class PipelineConfig:
    pmf: PmfParams = field(default_factory=PmfParams)
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    gestalt: GestaltParams = field(default_factory=GestaltParams)
    rf: RfParams = field(default_factory=RfParams)
    matching: MatchParams = field(default_factory=MatchParams)
    consistency: ConsistencyParams = field(default_factory=ConsistencyParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    ground_filter_source: bool = True
    ground_filter_target: bool = True
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTION_TYPES:
            out[name] = dataclasses.asdict(getattr(self, name))
        out["pipeline"] = {k: getattr(self, k) for k in PIPELINE_FLAGS}
        return out

    def resolved_json(self) -> str:
        """One-line JSON of all values plus their provenance, for run logs."""
        payload = {"values": self.to_dict(), "provenance": self.provenance}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def map_fingerprint(self) -> str:
        """Hash of every parameter that shapes a persisted map."""
        payload = {
            "pmf": dataclasses.asdict(self.pmf),
            "ground_filter": self.ground_filter_target,
            "segmentation": dataclasses.asdict(self.segmentation),
            "gestalt": dataclasses.asdict(self.gestalt),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _merge_section(name: str, cls, file_vals: dict, flag_vals: dict, provenance: dict):
    valid = {f.name for f in dataclasses.fields(cls)}
    merged = {}
    for source, values in (("file", file_vals), ("flag", flag_vals)):
        for key, val in values.items():
            if key not in valid:
                raise ValueError(f"unknown config key [{name}] {key}")
            merged[key] = val
            provenance[f"{name}.{key}"] = source
    for key in valid - set(merged):
        provenance[f"{name}.{key}"] = "default"
    return cls(**merged)


def build_config(
    file_data: dict | None = None, flag_data: dict | None = None
) -> PipelineConfig:
    """Resolve a config from parsed file data and flag overrides.

    Both inputs are {section: {key: value}} dicts; flags win over the file,
    which wins over defaults.
    """
    file_data = dict(file_data or {})
    flag_data = dict(flag_data or {})
    provenance: dict[str, str] = {}
    kwargs = {}
    for name, cls in SECTION_TYPES.items():
        kwargs[name] = _merge_section(
            name, cls, file_data.pop(name, {}), flag_data.pop(name, {}), provenance
        )
    pipe_file = file_data.pop("pipeline", {})
    pipe_flag = flag_data.pop("pipeline", {})
    for key in PIPELINE_FLAGS:
        if key in pipe_flag:
            kwargs[key] = bool(pipe_flag.pop(key))
            provenance[f"pipeline.{key}"] = "flag"
        elif key in pipe_file:
            kwargs[key] = bool(pipe_file.pop(key))
            provenance[f"pipeline.{key}"] = "file"
        else:
            provenance[f"pipeline.{key}"] = "default"
    for leftover in (pipe_file, pipe_flag, file_data, flag_data):
        if leftover:
            raise ValueError(f"unknown config sections/keys: {sorted(leftover)}")
    return PipelineConfig(provenance=provenance, **kwargs)


def load_config_file(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def profile_path(name: str) -> Path:
    path = PROFILE_DIR / f"{name}.toml"
    if not path.exists():
        available = sorted(p.stem for p in PROFILE_DIR.glob("*.toml"))
        raise ValueError(f"unknown profile {name!r}; available: {available}")
    return path
