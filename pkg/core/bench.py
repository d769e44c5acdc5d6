# bench.py
"""Wall-clock timing of RS, PCB-RS and FPS over downsampling cascades."""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.errors import RejectedInputError
from core.geometry import PointCloud
from core.grid import CylGridConfig
from core.log import get_logger
from core.sampling import (
    FPS,
    METHODS,
    PCB_RS,
    RS,
    farthest_point_sample,
    make_rng,
    normalize_method,
    pcb_random_sample,
    random_indices,
)

log = get_logger(__name__)

HARNESS_RUNS = 5
UNSTABLE_MAD_RATIO = 0.20
MIN_FPS_OVER_PCB = 10.0
MAX_RS_DEPTH_SPREAD = 2.0


@dataclass(frozen=True)
class CascadeSpec:
    sizes: tuple[int, ...]
    repeats: int = 11
    methods: tuple[str, ...] = METHODS
    pcb_first_only: bool = True
    grid: CylGridConfig = field(default_factory=CylGridConfig)

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2:
            raise RejectedInputError("a cascade needs an input size and at least one target size")
        if min(sizes) < 1 or any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise RejectedInputError(f"cascade sizes must be positive and strictly decreasing: {sizes}")
        if int(self.repeats) < 1:
            raise RejectedInputError(f"repeats must be >= 1, got {self.repeats}")
        methods = tuple(dict.fromkeys(normalize_method(m) for m in self.methods))
        if not methods:
            raise RejectedInputError("no sampling method selected")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "repeats", int(self.repeats))
        object.__setattr__(self, "methods", methods)

    @property
    def label(self) -> str:
        return "(" + "->".join(str(s) for s in self.sizes) + f")x{self.repeats}"


DEFAULT_CASCADES: tuple[CascadeSpec, ...] = tuple(
    CascadeSpec(sizes) for sizes in (
        (4096, 1024),
        (4096, 1024, 256),
        (4096, 1024, 256, 64),
        (4096, 1024, 256, 64, 16),
    )
)


def parse_sizes(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in str(text).replace("->", ",").split(",") if t.strip())
    except ValueError as e:
        raise RejectedInputError(f"cannot parse cascade sizes {text!r}") from e


def _run_cascade_once(method: str, xyz: np.ndarray, spec: CascadeSpec, rng: np.random.Generator) -> np.ndarray:
    for stage, m in enumerate(spec.sizes[1:]):
        if method == RS or (method == PCB_RS and stage > 0 and spec.pcb_first_only):
            idx = random_indices(xyz.shape[0], m, rng)
        elif method == PCB_RS:
            idx = pcb_random_sample(PointCloud(xyz), spec.grid, m, rng).indices
        else:
            idx = farthest_point_sample(PointCloud(xyz), m, 0).indices
        xyz = xyz[idx]
    return xyz


def prepare_inputs(clouds: Union[PointCloud, Sequence[PointCloud]], spec: CascadeSpec, seed: int) -> list[np.ndarray]:
    """One input per repeat, cut to the first cascade size (untimed)."""
    if isinstance(clouds, PointCloud):
        clouds = [clouds]
    clouds = list(clouds)
    if not clouds:
        raise RejectedInputError("no source clouds given")
    n0 = spec.sizes[0]
    inputs = []
    for r in range(spec.repeats):
        cloud = clouds[r % len(clouds)]
        if len(cloud) < n0:
            raise RejectedInputError(f"source cloud has {len(cloud)} points, cascade starts at {n0}")
        pick = random_indices(len(cloud), n0, make_rng(seed, 100, r))
        inputs.append(np.ascontiguousarray(cloud.xyz[pick]))
    return inputs


def time_method(method: str, inputs: list[np.ndarray], spec: CascadeSpec, seed: int) -> float:
    """Total seconds for all repeats; single-threaded, one warm-up cascade discarded."""
    tag = METHODS.index(method)
    _run_cascade_once(method, inputs[0], spec, make_rng(seed, 200, tag))
    rngs = [make_rng(seed, 300, tag, r) for r in range(len(inputs))]

    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        for xyz, rng in zip(inputs, rngs):
            _run_cascade_once(method, xyz, spec, rng)
        elapsed = time.perf_counter() - t0
    finally:
        if gc_was_enabled:
            gc.enable()
    return elapsed


def run_cascade(spec: CascadeSpec, clouds: Union[PointCloud, Sequence[PointCloud]], seed: int = 0) -> pd.DataFrame:
    """Seconds per method to run `spec` `repeats` times (I/O and generation excluded)."""
    inputs = prepare_inputs(clouds, spec, seed)
    rows = []
    for method in spec.methods:
        seconds = time_method(method, inputs, spec, seed)
        log.info("%s %s: %.6f s", spec.label, method, seconds)
        rows.append({"cascade": spec.label, "depth": len(spec.sizes) - 1, "method": method, "seconds": seconds})
    return pd.DataFrame(rows)


def run_cascades(
    specs: Iterable[CascadeSpec],
    clouds: Union[PointCloud, Sequence[PointCloud]],
    seed: int = 0,
    runs: int = HARNESS_RUNS,
) -> pd.DataFrame:
    """Median seconds over `runs` harness runs per (cascade, method), with MAD and a stability flag."""
    if int(runs) < 1:
        raise RejectedInputError(f"runs must be >= 1, got {runs}")
    frames = []
    for spec in specs:
        per_run = pd.concat(
            [run_cascade(spec, clouds, seed).assign(run=r) for r in range(int(runs))],
            ignore_index=True,
        )
        frames.append(summarize_runs(per_run))
    return pd.concat(frames, ignore_index=True)


def summarize_runs(per_run: pd.DataFrame) -> pd.DataFrame:
    def mad(s: pd.Series) -> float:
        return float((s - s.median()).abs().median())

    g = per_run.groupby(["cascade", "depth", "method"], sort=False)["seconds"]
    out = g.agg(seconds="median", mad=mad, runs="count").reset_index()
    out["unstable"] = out["mad"] > UNSTABLE_MAD_RATIO * out["seconds"]
    return out


def check_timings(frame: pd.DataFrame) -> list[str]:
    """Ordering and ratio checks; returns a list of violations (empty when all hold)."""
    problems: list[str] = []
    wide = frame.pivot_table(index=["depth", "cascade"], columns="method", values="seconds", sort=True)
    for (depth, cascade), row in wide.iterrows():
        if {RS, PCB_RS, FPS} <= set(row.index):
            if not row[RS] < row[PCB_RS] < row[FPS]:
                problems.append(f"{cascade}: expected RS < PCB-RS < FPS, got "
                                f"{row[RS]:.6f} / {row[PCB_RS]:.6f} / {row[FPS]:.6f}")
            if depth == 1 and row[FPS] / row[PCB_RS] < MIN_FPS_OVER_PCB:
                problems.append(f"{cascade}: FPS/PCB-RS = {row[FPS] / row[PCB_RS]:.1f} < {MIN_FPS_OVER_PCB:g}")
    if RS in wide.columns and len(wide) > 1:
        rs = wide[RS].dropna()
        if rs.min() > 0 and rs.max() / rs.min() >= MAX_RS_DEPTH_SPREAD:
            problems.append(f"RS time varies {rs.max() / rs.min():.2f}x across cascade depths")
    return problems


def format_table(frame: pd.DataFrame) -> str:
    wide = frame.pivot_table(index=["depth", "cascade"], columns="method", values="seconds", sort=True)
    wide = wide[[m for m in METHODS if m in wide.columns]]
    wide.index = wide.index.droplevel("depth")
    text = wide.to_string(float_format=lambda v: f"{v:.5f}")
    if "unstable" in frame.columns and frame["unstable"].any():
        flagged = frame.loc[frame["unstable"], ["cascade", "method"]]
        text += "\nunstable: " + ", ".join(f"{c} {m}" for c, m in flagged.itertuples(index=False))
    return text
