# kitti_io.py
"""SemanticKITTI-layout scan (.bin) and label (.label) files.

.bin: per point four little-endian float32 (x, y, z, intensity), 16 bytes.
.label: per point one little-endian uint32; low 16 bits semantic class,
high 16 bits instance id.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from core.errors import RejectedInputError, SampleFormatError
from core.geometry import PointCloud
from core.settings_store import atomic_write_bytes

POINT_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
RECORD_BYTES = 4 * POINT_DTYPE.itemsize
LABEL_BYTES = LABEL_DTYPE.itemsize
CLASS_MASK = 0xFFFF


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise SampleFormatError(f"cannot read file: {e.strerror or e}", path=path) from e


def read_kitti_bin(path: Path) -> PointCloud:
    raw = _read_bytes(path)
    whole = len(raw) - len(raw) % RECORD_BYTES
    if whole != len(raw):
        raise SampleFormatError(
            f"truncated point record: {len(raw)} bytes is not a multiple of {RECORD_BYTES}",
            path=path,
            byte_offset=whole,
        )
    rec = np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4)
    finite = np.isfinite(rec).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise RejectedInputError(f"{path}: non-finite value in point {bad} (byte offset {bad * RECORD_BYTES})")
    return PointCloud(rec[:, :3].astype(np.float64), rec[:, 3].astype(np.float64))


def encode_kitti_bin(cloud: PointCloud) -> bytes:
    n = len(cloud)
    rec = np.empty((n, 4), dtype=POINT_DTYPE)
    rec[:, :3] = cloud.xyz
    rec[:, 3] = 0.0 if cloud.intensity is None else cloud.intensity
    return rec.tobytes()


def write_kitti_bin(path: Path, cloud: PointCloud) -> Path:
    return atomic_write_bytes(Path(path), encode_kitti_bin(cloud))


def read_labels(path: Path, n_points: Optional[int] = None) -> np.ndarray:
    """Semantic class per point (instance id discarded)."""
    raw = _read_bytes(path)
    whole = len(raw) - len(raw) % LABEL_BYTES
    if whole != len(raw):
        raise SampleFormatError(
            f"truncated label record: {len(raw)} bytes is not a multiple of {LABEL_BYTES}",
            path=path,
            byte_offset=whole,
        )
    rec = np.frombuffer(raw, dtype=LABEL_DTYPE)
    if n_points is not None and rec.shape[0] != int(n_points):
        raise RejectedInputError(f"{path}: {rec.shape[0]} labels for {n_points} points")
    return (rec & CLASS_MASK).astype(np.int64)


def encode_labels(labels: np.ndarray) -> bytes:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.size and (lab.min() < 0 or lab.max() > CLASS_MASK):
        raise RejectedInputError("label values must fit in 16 bits")
    return lab.astype(LABEL_DTYPE).tobytes()


def write_labels(path: Path, labels: np.ndarray) -> Path:
    return atomic_write_bytes(Path(path), encode_labels(labels))


def read_scan(bin_path: Path, label_path: Optional[Path] = None) -> PointCloud:
    cloud = read_kitti_bin(bin_path)
    if label_path is None:
        return cloud
    labels = read_labels(label_path, n_points=len(cloud))
    return PointCloud(cloud.xyz, cloud.intensity, labels)
