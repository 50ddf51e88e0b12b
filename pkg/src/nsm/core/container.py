"""Versioned on-disk container: one JSON header line + raw little-endian arrays.

The header is plain text (diff-able), the payload is compact binary. All
persisted artifacts (segment maps, forest models) share this layout.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError, VersionError

MAGIC = b"NSMC1\n"


def write_container(path, kind: str, version: int, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write `arrays` (in dict order) after a single-line JSON header."""
    manifest = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.dtype.newbyteorder("<")
        arr = arr.astype(le, copy=False)
        manifest.append({"name": name, "dtype": le.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {"kind": kind, "version": version, "meta": meta, "arrays": manifest}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header_bytes)
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def read_container(path, kind: str, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container written by write_container, checking kind and version."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: not a recognized container file")
        header_line = fh.readline()
        if not header_line.endswith(b"\n"):
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: malformed header: {exc}") from exc
        if header.get("kind") != kind:
            raise FormatError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
        if header.get("version") != version:
            raise VersionError(
                f"{path}: format version {header.get('version')} is not supported (expected {version})"
            )
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise FormatError(f"{path}: truncated payload for array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape)
    return header["meta"], arrays
