# stats.py
"""Distance-band histograms and RS vs PCB-RS uniformity comparison."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import chisquare

from core.errors import RejectedInputError
from core.geometry import PointCloud
from core.grid import BinIndexing, CylGridConfig, build_bins
from core.log import get_logger
from core.sampling import PCB_RS, RS, pcb_random_sample, random_sample
from core.settings_store import atomic_write_text

log = get_logger(__name__)

# 0-10, 10-20, 20-30, 30-40, 40-50 and above 50 m
DEFAULT_EDGES = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, np.inf)

TABLE_COLUMNS = ["band_lo_m", "band_hi_m", "count", "fraction"]


@dataclass(frozen=True)
class RangeHistogram:
    edges: np.ndarray
    counts: np.ndarray
    fractions: np.ndarray

    @property
    def n_bands(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def flatness(self) -> float:
        """max/min band fraction; inf when a band is empty."""
        lo = float(self.fractions.min())
        return float("inf") if lo == 0 else float(self.fractions.max()) / lo


@dataclass(frozen=True)
class UniformityReport:
    method: str
    cv_bins: float
    per_band_fraction: RangeHistogram
    n_seeds: int
    m: int


def normalize_edges(edges: Optional[Iterable[float]] = None) -> np.ndarray:
    """Band boundaries in meters; an open last band (inf) is appended when missing."""
    e = np.asarray(list(DEFAULT_EDGES if edges is None else edges), dtype=np.float64)
    if e.size == 0:
        raise RejectedInputError("at least one band edge is required")
    if np.isnan(e).any():
        raise RejectedInputError("band edges must be numbers")
    if e[0] < 0:
        raise RejectedInputError(f"first band edge must be >= 0, got {e[0]}")
    if np.isfinite(e[-1]):
        e = np.append(e, np.inf)
    if not (np.diff(e) > 0).all():
        raise RejectedInputError(f"band edges must be strictly increasing: {e.tolist()}")
    return e


def parse_edges(text: str) -> np.ndarray:
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as e:
        raise RejectedInputError(f"cannot parse band edges {text!r}") from e
    return normalize_edges(vals)


def band_index(rho: np.ndarray, edges: np.ndarray) -> np.ndarray:
    # left-closed bands; points below the first edge are counted in band 0
    n_bands = edges.shape[0] - 1
    return np.clip(np.searchsorted(edges, rho, side="right") - 1, 0, n_bands - 1)


def histogram_from_counts(edges: np.ndarray, counts: np.ndarray) -> RangeHistogram:
    counts = np.asarray(counts, dtype=np.int64)
    total = counts.sum()
    fractions = counts / total if total else np.zeros(counts.shape[0])
    return RangeHistogram(edges, counts, fractions)


def distance_histogram(cloud: PointCloud, edges: Optional[Iterable[float]] = None) -> RangeHistogram:
    e = normalize_edges(edges)
    idx = band_index(cloud.planar_distance(), e)
    return histogram_from_counts(e, np.bincount(idx, minlength=e.shape[0] - 1))


def coefficient_of_variation(counts: np.ndarray) -> float:
    c = np.asarray(counts, dtype=np.float64)
    mean = c.mean() if c.size else 0.0
    return 0.0 if mean == 0 else float(c.std() / mean)


def bin_selection_counts(bins: BinIndexing, indices: np.ndarray) -> np.ndarray:
    """Sampled points per occupied source bin (zeros included)."""
    slot = bins.slot_of_point()[np.asarray(indices, dtype=np.int64)]
    return np.bincount(slot[slot >= 0], minlength=bins.K)


def compare_methods(
    cloud: PointCloud,
    cfg: CylGridConfig,
    m: int,
    seeds: Sequence[int],
    edges: Optional[Iterable[float]] = None,
    *,
    threads: int = 1,
) -> tuple[UniformityReport, UniformityReport]:
    """RS and PCB-RS uniformity over `seeds`; band fractions and cv are seed averages."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise RejectedInputError("compare_methods needs at least one seed")
    e = normalize_edges(edges)
    n_bands = e.shape[0] - 1
    bins = build_bins(cloud, cfg)
    bands = band_index(cloud.planar_distance(), e)

    def one(seed: int) -> tuple[np.ndarray, float, np.ndarray, float]:
        rs = random_sample(len(cloud), m, seed).indices
        pcb = pcb_random_sample(cloud, cfg, m, seed, bins=bins).indices
        return (
            np.bincount(bands[rs], minlength=n_bands),
            coefficient_of_variation(bin_selection_counts(bins, rs)),
            np.bincount(bands[pcb], minlength=n_bands),
            coefficient_of_variation(bin_selection_counts(bins, pcb)),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]

    def report(method: str, band_col: int, cv_col: int) -> UniformityReport:
        pooled = np.sum([r[band_col] for r in results], axis=0)
        hist = histogram_from_counts(e, pooled)
        cv = float(np.mean([r[cv_col] for r in results]))
        return UniformityReport(method, cv, hist, len(seeds), int(m))

    rs_report, pcb_report = report(RS, 0, 1), report(PCB_RS, 2, 3)
    log.info("compare: K=%d m=%d seeds=%d cv RS=%.4f PCB-RS=%.4f",
             bins.K, m, len(seeds), rs_report.cv_bins, pcb_report.cv_bins)
    return rs_report, pcb_report


def band_consistency(source: RangeHistogram, sampled_counts: np.ndarray) -> float:
    """Chi-square p-value of sampled band counts against the source fractions."""
    obs = np.asarray(sampled_counts, dtype=np.float64)
    expected = source.fractions * obs.sum()
    keep = expected > 0
    if (obs[~keep] > 0).any():
        return 0.0
    if keep.sum() < 2:
        return 1.0
    return float(chisquare(obs[keep], expected[keep]).pvalue)


def rs_band_consistency(
    cloud: PointCloud,
    m: int,
    seeds: Sequence[int],
    edges: Optional[Iterable[float]] = None,
) -> tuple[np.ndarray, float]:
    """Pooled RS band counts over seeds and their chi-square p-value."""
    source = distance_histogram(cloud, edges)
    bands = band_index(cloud.planar_distance(), source.edges)
    pooled = np.zeros(source.n_bands, dtype=np.int64)
    for s in seeds:
        pooled += np.bincount(bands[random_sample(len(cloud), m, int(s)).indices], minlength=source.n_bands)
    return pooled, band_consistency(source, pooled)


# ----------------- tables -----------------


def histogram_frame(hist: RangeHistogram) -> pd.DataFrame:
    return pd.DataFrame({
        "band_lo_m": hist.edges[:-1],
        "band_hi_m": hist.edges[1:],
        "count": hist.counts,
        "fraction": hist.fractions,
    })


def uniformity_frame(reports: Iterable[UniformityReport]) -> pd.DataFrame:
    frames = []
    for r in reports:
        df = histogram_frame(r.per_band_fraction)
        df.insert(0, "method", r.method)
        df["cv_bins"] = r.cv_bins
        df["n_seeds"] = r.n_seeds
        df["m"] = r.m
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return None if not np.isfinite(v) else float(v)
    return v


def frame_to_json(df: pd.DataFrame) -> str:
    rows = [{k: _json_value(v) for k, v in rec.items()} for rec in df.to_dict("records")]
    return json.dumps(rows, indent=2)


def write_table(df: pd.DataFrame, path: Path, fmt: str = "csv") -> Path:
    fmt = fmt.lower()
    if fmt == "csv":
        text = df.to_csv(index=False)
    elif fmt == "json":
        text = frame_to_json(df)
    else:
        raise RejectedInputError(f"unknown output format {fmt!r} (csv or json)")
    return atomic_write_text(Path(path), text)
