# geometry.py
"""Columnar point container and Cartesian <-> polar conversion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from core.errors import RejectedInputError


@dataclass(frozen=True)
class PointCloud:
    """N points stored column-wise.

    xyz: (N, 3) float64 meters
    intensity: optional (N,) float, unitless in [0, 1]
    labels: optional (N,) non-negative int class ids
    """

    xyz: np.ndarray
    intensity: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        xyz = np.asarray(self.xyz, dtype=np.float64)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            if xyz.size == 0:
                xyz = xyz.reshape(0, 3)
            else:
                raise RejectedInputError(f"xyz must have shape (N, 3), got {xyz.shape}")
        if not np.isfinite(xyz).all():
            bad = int(np.flatnonzero(~np.isfinite(xyz).all(axis=1))[0])
            raise RejectedInputError(f"non-finite coordinate at point {bad}")
        object.__setattr__(self, "xyz", xyz)

        n = xyz.shape[0]
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if inten.shape[0] != n:
                raise RejectedInputError(f"intensity has length {inten.shape[0]}, expected {n}")
            if not np.isfinite(inten).all():
                raise RejectedInputError("non-finite intensity value")
            object.__setattr__(self, "intensity", inten)
        if self.labels is not None:
            labels = np.asarray(self.labels).reshape(-1)
            if labels.shape[0] != n:
                raise RejectedInputError(f"labels have length {labels.shape[0]}, expected {n}")
            if labels.size and (labels.min() < 0):
                raise RejectedInputError("labels must be non-negative class ids")
            object.__setattr__(self, "labels", labels.astype(np.int64, copy=False))

    @classmethod
    def from_xyz(cls, xyz, intensity=None, labels=None) -> "PointCloud":
        return cls(np.asarray(xyz, dtype=np.float64).reshape(-1, 3), intensity, labels)

    def __len__(self) -> int:
        return int(self.xyz.shape[0])

    @property
    def n_points(self) -> int:
        return len(self)

    def take(self, indices) -> "PointCloud":
        """Gather every attribute at `indices` (duplicates allowed)."""
        idx = np.asarray(indices, dtype=np.int64)
        return PointCloud(
            self.xyz[idx],
            None if self.intensity is None else self.intensity[idx],
            None if self.labels is None else self.labels[idx],
        )

    def planar_distance(self) -> np.ndarray:
        return np.hypot(self.xyz[:, 0], self.xyz[:, 1])


class PolarPoint(NamedTuple):
    rho: float
    theta: float
    z: float


@dataclass(frozen=True)
class PolarCoords:
    """Columnar (rho, theta, z); iterating yields PolarPoint rows."""

    rho: np.ndarray
    theta: np.ndarray
    z: np.ndarray

    def __len__(self) -> int:
        return int(self.rho.shape[0])

    def __getitem__(self, i: int) -> PolarPoint:
        return PolarPoint(float(self.rho[i]), float(self.theta[i]), float(self.z[i]))

    def __iter__(self) -> Iterator[PolarPoint]:
        for i in range(len(self)):
            yield self[i]


def to_polar(cloud: PointCloud) -> PolarCoords:
    xyz = cloud.xyz
    if not np.isfinite(xyz).all():
        raise RejectedInputError("non-finite coordinate")
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    rho = np.hypot(x, y)
    # arctan2 of signed zeros can give +-pi; points on the axis get theta 0
    theta = np.where(rho == 0.0, 0.0, np.arctan2(y, x))
    return PolarCoords(rho=rho, theta=theta, z=z.copy())


def to_cartesian(polar: PolarCoords) -> np.ndarray:
    return np.column_stack(
        (polar.rho * np.cos(polar.theta), polar.rho * np.sin(polar.theta), polar.z)
    )
