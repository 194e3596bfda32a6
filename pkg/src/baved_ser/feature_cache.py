"""On-disk cache of extracted feature sequences.

One file per (record, backbone) at `<cache_root>/<namespace>/<record_id>.feat`
where the namespace is the backbone name (with a `__stub` suffix for stub
features, so synthetic runs can never poison a real cache).

File format, little-endian, 24-byte header then payload:

    bytes  0-3   magic  b"FSEQ"
    bytes  4-7   uint32 format version (currently 1)
    bytes  8-15  uint64 T (frame count)
    bytes 16-19  uint32 D (feature width)
    bytes 20-23  uint32 element type code (1 = float32)
    bytes 24-    row-major float32 frames, exactly T*D*4 bytes

Writes land in a temp file in the same directory and are published with
an atomic rename, so readers never observe a partial entry.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"FSEQ"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sIQII")
HEADER_SIZE = _HEADER.size  # 24


class CorruptCacheEntry(Exception):
    """Entry exists but its header, size or payload is invalid; delete and
    recompute."""


def cache_path(cache_root: str | Path, namespace: str, record_id: str) -> Path:
    return Path(cache_root) / namespace / f"{record_id}.feat"


def cache_put(frames: np.ndarray, cache_root: str | Path, namespace: str, record_id: str) -> Path:
    """Write one [T x D] float32 matrix; atomic, bit-exact round trip."""
    frames = np.ascontiguousarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise ValueError(f"expected [T x D] frames, got shape {frames.shape}")
    path = cache_path(cache_root, namespace, record_id)
    path.parent.mkdir(parents=True, exist_ok=True)

    header = _HEADER.pack(MAGIC, FORMAT_VERSION, frames.shape[0], frames.shape[1], DTYPE_FLOAT32)
    fd, tmp_name = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(header)
            handle.write(frames.tobytes(order="C"))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def cache_get(cache_root: str | Path, namespace: str, record_id: str) -> np.ndarray | None:
    """Read one entry back, or None on a miss (absence is not an error).

    Raises:
        CorruptCacheEntry: bad magic/version/type, size that disagrees
            with the header, or a non-finite payload.
    """
    path = cache_path(cache_root, namespace, record_id)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        return None

    if len(raw) < HEADER_SIZE:
        raise CorruptCacheEntry(f"{path}: {len(raw)} bytes, shorter than the {HEADER_SIZE}-byte header")
    magic, version, n_frames, width, dtype_code = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptCacheEntry(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CorruptCacheEntry(f"{path}: unsupported version {version}")
    if dtype_code != DTYPE_FLOAT32:
        raise CorruptCacheEntry(f"{path}: unknown element type code {dtype_code}")
    expected = HEADER_SIZE + n_frames * width * 4
    if len(raw) != expected:
        raise CorruptCacheEntry(f"{path}: {len(raw)} bytes, header implies {expected}")

    frames = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).reshape(n_frames, width).copy()
    if not np.isfinite(frames).all():
        raise CorruptCacheEntry(f"{path}: non-finite payload")
    return frames


def cache_delete(cache_root: str | Path, namespace: str, record_id: str) -> None:
    cache_path(cache_root, namespace, record_id).unlink(missing_ok=True)
