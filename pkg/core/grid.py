# grid.py
"""Polar cylindrical block partition (radius x angle x height)."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Any, Iterator, Mapping, Optional

import numpy as np

from core.errors import RejectedInputError
from core.geometry import PointCloud, PolarCoords, to_polar

DATA_MAX = "max"


@dataclass(frozen=True)
class CylGridConfig:
    n_radial: int = 64
    n_angular: int = 64
    n_height: int = 16
    rho_min: float = 3.0
    rho_max: Optional[float] = None  # None: resolve to the cloud's max rho
    z_min: float = -3.0
    z_max: float = 1.5
    drop_out_of_range: bool = False

    def __post_init__(self) -> None:
        for name in ("n_radial", "n_angular", "n_height"):
            v = getattr(self, name)
            if int(v) != v or int(v) < 1:
                raise RejectedInputError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        bounds = [self.rho_min, self.z_min, self.z_max]
        if self.rho_max is not None:
            bounds.append(self.rho_max)
        if not all(math.isfinite(float(b)) for b in bounds):
            raise RejectedInputError("grid range bounds must be finite")
        if self.rho_max is not None and not float(self.rho_min) < float(self.rho_max):
            raise RejectedInputError(f"rho_min ({self.rho_min}) must be < rho_max ({self.rho_max})")
        if not float(self.z_min) < float(self.z_max):
            raise RejectedInputError(f"z_min ({self.z_min}) must be < z_max ({self.z_max})")

    @property
    def n_bins(self) -> int:
        return self.n_radial * self.n_angular * self.n_height

    @property
    def resolution(self) -> str:
        return f"{self.n_radial}x{self.n_angular}x{self.n_height}"

    def resolve_rho_max(self, rho: np.ndarray) -> float:
        rho_max = float(rho.max()) if self.rho_max is None else float(self.rho_max)
        if not float(self.rho_min) < rho_max:
            raise RejectedInputError(
                f"rho_min ({self.rho_min}) must be < resolved rho_max ({rho_max})"
            )
        return rho_max

    def to_mapping(self) -> dict[str, Any]:
        return {
            "n_radial": self.n_radial,
            "n_angular": self.n_angular,
            "n_height": self.n_height,
            "rho_min": float(self.rho_min),
            "rho_max": DATA_MAX if self.rho_max is None else float(self.rho_max),
            "z_min": float(self.z_min),
            "z_max": float(self.z_max),
            "drop_out_of_range": bool(self.drop_out_of_range),
        }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: Optional["CylGridConfig"] = None) -> "CylGridConfig":
        """Build from config-file keys; unknown keys are ignored, missing keys keep `base` values."""
        cfg = base or cls()
        kw: dict[str, Any] = {}
        for key in ("n_radial", "n_angular", "n_height"):
            if key in data:
                kw[key] = _as_int(data[key], key)
        for key in ("rho_min", "z_min", "z_max"):
            if key in data:
                kw[key] = _as_float(data[key], key)
        if "rho_max" in data:
            kw["rho_max"] = parse_rho_max(data["rho_max"])
        if "drop_out_of_range" in data:
            kw["drop_out_of_range"] = bool(data["drop_out_of_range"])
        return replace(cfg, **kw)


# Crop ranges per dataset at the 64 x 64 x 16 resolution.
CROP_PRESETS: dict[str, CylGridConfig] = {
    "semantickitti": CylGridConfig(64, 64, 16, rho_min=3.0, rho_max=None, z_min=-3.0, z_max=1.5),
    "semanticposs": CylGridConfig(64, 64, 16, rho_min=3.0, rho_max=80.0, z_min=-3.0, z_max=3.0),
}


def _as_int(v: Any, key: str) -> int:
    try:
        f = float(v)
    except (TypeError, ValueError) as e:
        raise RejectedInputError(f"{key}: expected an integer, got {v!r}") from e
    if not f.is_integer():
        raise RejectedInputError(f"{key}: expected an integer, got {v!r}")
    return int(f)


def _as_float(v: Any, key: str) -> float:
    try:
        return float(v)
    except (TypeError, ValueError) as e:
        raise RejectedInputError(f"{key}: expected a number, got {v!r}") from e


def parse_rho_max(v: Any) -> Optional[float]:
    if v is None or (isinstance(v, str) and v.strip().lower() in {DATA_MAX, "data-max"}):
        return None
    return _as_float(v, "rho_max")


_RES_RE = re.compile(r"^\s*(\d+)\s*[xX×]\s*(\d+)\s*[xX×]\s*(\d+)\s*$")


def parse_resolution(text: str) -> tuple[int, int, int]:
    """'64x64x16' -> (64, 64, 16) as (radial, angular, height)."""
    m = _RES_RE.match(str(text))
    if not m:
        raise RejectedInputError(f"grid resolution must look like RxPxZ, got {text!r}")
    r, p, z = (int(g) for g in m.groups())
    if min(r, p, z) < 1:
        raise RejectedInputError(f"grid resolution must be positive, got {text!r}")
    return r, p, z


@dataclass(frozen=True)
class BinIndexing:
    """Per-point flat bin ids plus the occupied bins in CSR form.

    bin_ids[k] is the k-th occupied bin (ascending); its points are
    order[offsets[k]:offsets[k + 1]], ascending point indices.
    Dropped points (drop_out_of_range) have bin_of_point == -1.
    """

    bin_of_point: np.ndarray
    bin_ids: np.ndarray
    offsets: np.ndarray
    order: np.ndarray
    n_bins: int
    rho_max: float

    @property
    def K(self) -> int:
        return int(self.bin_ids.shape[0])

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def points_in(self, k: int) -> np.ndarray:
        return self.order[self.offsets[k]:self.offsets[k + 1]]

    @property
    def occupied_bins(self) -> Iterator[tuple[int, np.ndarray]]:
        for k in range(self.K):
            yield int(self.bin_ids[k]), self.points_in(k)

    def slot_of_point(self) -> np.ndarray:
        """Position k in bin_ids of every point's bin (-1 for dropped points)."""
        slot = np.full(self.bin_of_point.shape[0], -1, dtype=np.int64)
        slot[self.order] = np.repeat(np.arange(self.K, dtype=np.int64), self.counts)
        return slot


def bin_coordinates(polar: PolarCoords, cfg: CylGridConfig, rho_max: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamped (radial, angular, height) bin indices."""
    d_rho = (rho_max - cfg.rho_min) / cfg.n_radial
    d_theta = 2.0 * np.pi / cfg.n_angular
    d_z = (cfg.z_max - cfg.z_min) / cfg.n_height

    radial = np.clip(np.floor((polar.rho - cfg.rho_min) / d_rho), 0, cfg.n_radial - 1).astype(np.int64)
    # theta == pi falls on index P and wraps into the last angular bin
    angular = np.clip(np.floor((polar.theta + np.pi) / d_theta), 0, cfg.n_angular - 1).astype(np.int64)
    height = np.clip(np.floor((polar.z - cfg.z_min) / d_z), 0, cfg.n_height - 1).astype(np.int64)
    return radial, angular, height


def in_range_mask(polar: PolarCoords, cfg: CylGridConfig, rho_max: float) -> np.ndarray:
    return (
        (polar.rho >= cfg.rho_min)
        & (polar.rho <= rho_max)
        & (polar.z >= cfg.z_min)
        & (polar.z <= cfg.z_max)
    )


def build_bins(cloud: PointCloud, cfg: CylGridConfig, polar: Optional[PolarCoords] = None) -> BinIndexing:
    if len(cloud) == 0:
        raise RejectedInputError("cannot bin an empty cloud")
    if polar is None:
        polar = to_polar(cloud)
    rho_max = cfg.resolve_rho_max(polar.rho)

    radial, angular, height = bin_coordinates(polar, cfg, rho_max)
    flat = (radial * cfg.n_angular + angular) * cfg.n_height + height

    if cfg.drop_out_of_range:
        flat = np.where(in_range_mask(polar, cfg, rho_max), flat, -1)
        if (flat < 0).all():
            raise RejectedInputError("no point lies inside the crop range")

    # stable sort keeps point indices ascending inside each bin
    order = np.argsort(flat, kind="stable")
    if cfg.drop_out_of_range:
        order = order[flat[order] >= 0]
    sorted_bins = flat[order]
    starts = np.flatnonzero(np.r_[True, sorted_bins[1:] != sorted_bins[:-1]])
    offsets = np.r_[starts, sorted_bins.shape[0]].astype(np.int64)

    return BinIndexing(
        bin_of_point=flat,
        bin_ids=sorted_bins[starts],
        offsets=offsets,
        order=order.astype(np.int64),
        n_bins=cfg.n_bins,
        rho_max=rho_max,
    )


def ring_areas(cfg: CylGridConfig, rho_max: float) -> np.ndarray:
    """Planar area of one annulus sector per radial ring (linear radial spacing)."""
    edges = np.linspace(cfg.rho_min, rho_max, cfg.n_radial + 1)
    return np.pi * (edges[1:] ** 2 - edges[:-1] ** 2) / cfg.n_angular
