# synth.py
"""Synthetic long-tail scans: radial density proportional to rho^-k."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Mapping

import numpy as np

from core.errors import RejectedInputError
from core.geometry import PointCloud
from core.sampling import make_rng

# |1 - k| below this uses the k == 1 (log-uniform) closed form
_LOG_FORM_TOL = 1e-9


@dataclass(frozen=True)
class SynthConfig:
    n_points: int = 122880
    rho_min: float = 3.0
    rho_max: float = 80.0
    z_range: tuple[float, float] = (-3.0, 1.5)
    density_exponent: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_points) != self.n_points or int(self.n_points) < 1:
            raise RejectedInputError(f"n_points must be a positive integer, got {self.n_points!r}")
        object.__setattr__(self, "n_points", int(self.n_points))
        if not (math.isfinite(self.rho_min) and math.isfinite(self.rho_max)):
            raise RejectedInputError("rho range must be finite")
        if not 0 < self.rho_min < self.rho_max:
            raise RejectedInputError(f"need 0 < rho_min < rho_max, got {self.rho_min}, {self.rho_max}")
        z0, z1 = (float(v) for v in self.z_range)
        if not (math.isfinite(z0) and math.isfinite(z1) and z0 <= z1):
            raise RejectedInputError(f"invalid z_range {self.z_range!r}")
        object.__setattr__(self, "z_range", (z0, z1))
        if not (math.isfinite(self.density_exponent) and self.density_exponent > 0):
            raise RejectedInputError(f"density_exponent must be > 0, got {self.density_exponent}")

    def to_mapping(self) -> dict[str, Any]:
        d = asdict(self)
        d["z_range"] = list(self.z_range)
        return d

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: "SynthConfig | None" = None) -> "SynthConfig":
        """Accepts the long keys plus the CLI short forms n, k, z_min, z_max."""
        aliases = {"n": "n_points", "k": "density_exponent"}
        kw: dict[str, Any] = {}
        z = list((base or cls()).z_range)
        known = {"n_points", "seed", "rho_min", "rho_max", "density_exponent", "z_min", "z_max", "z_range"}
        for key, val in data.items():
            key = aliases.get(str(key), str(key))
            if key not in known:
                raise RejectedInputError(f"unknown synth parameter {key!r}")
            try:
                if key in ("n_points", "seed"):
                    kw[key] = int(float(val))
                elif key in ("rho_min", "rho_max", "density_exponent"):
                    kw[key] = float(val)
                elif key == "z_min":
                    z[0] = float(val)
                elif key == "z_max":
                    z[1] = float(val)
                else:
                    z = [float(v) for v in val]
            except (TypeError, ValueError) as e:
                raise RejectedInputError(f"synth parameter {key}={val!r}: {e}") from e
        kw["z_range"] = tuple(z)
        return replace(base or cls(), **kw)


def parse_synth(text: str, base: SynthConfig | None = None) -> SynthConfig:
    """'n=100000,k=2,rho_max=80' -> SynthConfig."""
    pairs: dict[str, str] = {}
    for part in str(text or "").split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise RejectedInputError(f"synth parameters must be key=value, got {part!r}")
        k, v = part.split("=", 1)
        pairs[k.strip()] = v.strip()
    return SynthConfig.from_mapping(pairs, base)


def long_tail_cdf(rho, cfg: SynthConfig) -> np.ndarray:
    r = np.clip(np.asarray(rho, dtype=np.float64), cfg.rho_min, cfg.rho_max)
    a, b, k = cfg.rho_min, cfg.rho_max, cfg.density_exponent
    if abs(1.0 - k) < _LOG_FORM_TOL:
        return np.log(r / a) / math.log(b / a)
    e = 1.0 - k
    return (r**e - a**e) / (b**e - a**e)


def long_tail_inverse_cdf(u, cfg: SynthConfig) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    a, b, k = cfg.rho_min, cfg.rho_max, cfg.density_exponent
    if abs(1.0 - k) < _LOG_FORM_TOL:
        return a * (b / a) ** u
    e = 1.0 - k
    return (a**e + u * (b**e - a**e)) ** (1.0 / e)


def generate_long_tail(cfg: SynthConfig) -> PointCloud:
    rng = make_rng(cfg.seed)
    n = cfg.n_points
    rho = np.clip(long_tail_inverse_cdf(rng.random(n), cfg), cfg.rho_min, cfg.rho_max)
    theta = rng.uniform(-np.pi, np.pi, size=n)
    z = rng.uniform(cfg.z_range[0], cfg.z_range[1], size=n)
    intensity = rng.random(n)
    xyz = np.column_stack((rho * np.cos(theta), rho * np.sin(theta), z))
    return PointCloud(xyz, intensity)
