# sampling.py
"""RS, PCB-RS and FPS downsampling. Every method returns indices into the source cloud."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from core.errors import RejectedInputError
from core.geometry import PointCloud
from core.grid import BinIndexing, CylGridConfig, build_bins
from core.log import get_logger

log = get_logger(__name__)

RS = "RS"
PCB_RS = "PCB-RS"
FPS = "FPS"
METHODS = (RS, PCB_RS, FPS)

_METHOD_ALIASES = {
    "rs": RS,
    "random": RS,
    "pcb-rs": PCB_RS,
    "pcb_rs": PCB_RS,
    "pcbrs": PCB_RS,
    "fps": FPS,
}

SEED_LIMIT = 2**64

# stream ids mixed into the seed; fixed so results never depend on call order
STREAM_SHUFFLE = 0
STREAM_KEYS = 1
STREAM_EXTRA = 2
STREAM_FINAL = 3

SeedLike = Union[int, np.random.Generator]


def normalize_method(name: str) -> str:
    key = str(name).strip().lower()
    if key not in _METHOD_ALIASES:
        raise RejectedInputError(f"unknown sampling method {name!r} (expected rs, pcb-rs or fps)")
    return _METHOD_ALIASES[key]


def make_rng(seed: SeedLike, *stream: int) -> np.random.Generator:
    """Philox generator for (seed, *stream). An existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    s = int(seed)
    if not 0 <= s < SEED_LIMIT:
        raise RejectedInputError(f"seed must be in [0, 2**64), got {seed!r}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([s, *stream])))


def random_seed() -> int:
    return int(np.random.SeedSequence().entropy) % SEED_LIMIT


def _seed_value(seed: SeedLike) -> Optional[int]:
    return None if isinstance(seed, np.random.Generator) else int(seed)


@dataclass(frozen=True)
class QuotaPlan:
    """Per-occupied-bin sample counts.

    quotas[k] <= counts[k] are distinct picks; extra[k] are replacement draws,
    non-zero only when the bins hold fewer than m points in total.
    """

    bin_ids: np.ndarray
    counts: np.ndarray
    quotas: np.ndarray
    extra: np.ndarray
    level: int

    @property
    def selection_counts(self) -> np.ndarray:
        return self.quotas + self.extra

    @property
    def total(self) -> int:
        return int(self.selection_counts.sum())

    @property
    def per_bin(self) -> list[tuple[int, int]]:
        return [(int(b), int(q)) for b, q in zip(self.bin_ids, self.selection_counts)]


@dataclass(frozen=True)
class SampleResult:
    indices: np.ndarray
    method: str
    seed: Optional[int]
    duplicated: bool
    start_index: Optional[int] = None
    min_distances: Optional[np.ndarray] = None
    plan: Optional[QuotaPlan] = None

    def __len__(self) -> int:
        return int(self.indices.shape[0])


def _check_sizes(n_points: int, m: int) -> None:
    if int(n_points) < 1:
        raise RejectedInputError(f"cannot sample from {n_points} points")
    if int(m) < 1:
        raise RejectedInputError(f"sample size must be >= 1, got {m}")


def random_indices(n_points: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffle and slice; pads with uniform draws (with replacement) when n < m."""
    if n_points >= m:
        return rng.permutation(n_points)[:m]
    out = np.concatenate([np.arange(n_points), rng.integers(0, n_points, size=m - n_points)])
    rng.shuffle(out)
    return out


def random_sample(n_points: int, m: int, seed: SeedLike) -> SampleResult:
    _check_sizes(n_points, m)
    n_points, m = int(n_points), int(m)
    idx = random_indices(n_points, m, make_rng(seed, STREAM_SHUFFLE))
    return SampleResult(idx.astype(np.int64), RS, _seed_value(seed), duplicated=n_points < m)


def _tie_order(k: int, tie_order) -> np.ndarray:
    if tie_order is None:
        return np.arange(k, dtype=np.int64)
    order = np.asarray(tie_order, dtype=np.int64).reshape(-1)
    if order.shape[0] != k or not np.array_equal(np.sort(order), np.arange(k)):
        raise RejectedInputError("tie_order must be a permutation of the bin positions")
    return order


def allocate_quotas(bin_counts, m: int, *, tie_order=None, bin_ids=None) -> QuotaPlan:
    """Water-filling: raise a common level L, each bin giving min(N_i, L), until m is reached.

    The remainder r (fewer than the unsaturated bins) adds one to the first r
    unsaturated bins in `tie_order` (ascending bin position by default).
    """
    counts = np.asarray(bin_counts, dtype=np.int64).reshape(-1)
    if counts.shape[0] < 1:
        raise RejectedInputError("need at least one bin")
    if int(m) < 1:
        raise RejectedInputError(f"sample size must be >= 1, got {m}")
    if (counts < 0).any():
        raise RejectedInputError("bin counts must be non-negative")
    total = int(counts.sum())
    if total == 0:
        raise RejectedInputError("all bin counts are zero")
    m = int(m)
    k = counts.shape[0]
    order = _tie_order(k, tie_order)
    ids = np.arange(k, dtype=np.int64) if bin_ids is None else np.asarray(bin_ids, dtype=np.int64)

    extra = np.zeros(k, dtype=np.int64)
    if total <= m:
        quotas = counts.copy()
        shortfall = m - total
        if shortfall:
            filled = order[counts[order] > 0]
            base, rem = divmod(shortfall, filled.shape[0])
            extra[filled] = base
            extra[filled[:rem]] += 1
        return QuotaPlan(ids, counts, quotas, extra, level=int(counts.max()))

    # largest L with sum(min(counts, L)) <= m; sum is m at most at lo, above m at hi
    lo, hi = 0, int(counts.max())
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if int(np.minimum(counts, mid).sum()) <= m:
            lo = mid
        else:
            hi = mid
    quotas = np.minimum(counts, lo)
    rem = m - int(quotas.sum())
    if rem:
        unsaturated = order[counts[order] > lo]
        quotas[unsaturated[:rem]] += 1
    return QuotaPlan(ids, counts, quotas, extra, level=lo)


def pcb_quota_plan(bins: BinIndexing, m: int) -> QuotaPlan:
    """The plan PCB-RS follows for `bins`: water-filling with ascending bin-id tie-break."""
    return allocate_quotas(bins.counts, m, bin_ids=bins.bin_ids)


def pcb_random_sample(
    cloud: PointCloud,
    cfg: CylGridConfig,
    m: int,
    seed: SeedLike,
    *,
    bins: Optional[BinIndexing] = None,
) -> SampleResult:
    """Polar cylinder balanced random sampling.

    Per occupied bin: shuffle its points and keep the first quota of them;
    then shuffle the concatenation once more.
    """
    if int(m) < 1:
        raise RejectedInputError(f"sample size must be >= 1, got {m}")
    m = int(m)
    if bins is None:
        bins = build_bins(cloud, cfg)
    plan = pcb_quota_plan(bins, m)

    counts = bins.counts
    pts = bins.order
    slot = np.repeat(np.arange(bins.K, dtype=np.int64), counts)

    # one key per source point, a function of (seed, point index) only;
    # sorting by key inside each bin is that bin's shuffle
    keys = make_rng(seed, STREAM_KEYS).random(len(cloud))
    ranked = pts[np.lexsort((keys[pts], slot))]
    rank_in_bin = np.arange(pts.shape[0], dtype=np.int64) - np.repeat(bins.offsets[:-1], counts)
    chosen = ranked[rank_in_bin < np.repeat(plan.quotas, counts)]

    if plan.extra.any():
        extra_slot = np.repeat(np.arange(bins.K, dtype=np.int64), plan.extra)
        u = make_rng(seed, STREAM_EXTRA).random(extra_slot.shape[0])
        pos = bins.offsets[extra_slot] + np.floor(u * counts[extra_slot]).astype(np.int64)
        chosen = np.concatenate([chosen, pts[pos]])
        log.debug("pcb-rs: %d replacement draws over %d kept points", extra_slot.shape[0], pts.shape[0])

    idx = make_rng(seed, STREAM_FINAL).permutation(chosen)
    return SampleResult(
        idx.astype(np.int64),
        PCB_RS,
        _seed_value(seed),
        duplicated=bool(plan.extra.any()),
        plan=plan,
    )


def farthest_point_sample(cloud: PointCloud, m: int, start_index: int = 0) -> SampleResult:
    """Greedy FPS, O(N*M): keep each point's squared distance to its nearest pick."""
    n = len(cloud)
    if n == 0:
        raise RejectedInputError("cannot sample from an empty cloud")
    if int(m) < 1:
        raise RejectedInputError(f"sample size must be >= 1, got {m}")
    if int(m) > n:
        raise RejectedInputError(f"FPS needs m <= N (m={m}, N={n}); it has no replacement semantics")
    if not 0 <= int(start_index) < n:
        raise RejectedInputError(f"start_index {start_index} outside [0, {n})")
    m, start = int(m), int(start_index)

    xyz = cloud.xyz
    selected = np.empty(m, dtype=np.int64)
    min_dist = np.empty(m, dtype=np.float64)
    selected[0] = start
    min_dist[0] = np.inf

    nearest = np.sum((xyz - xyz[start]) ** 2, axis=1)
    nearest[start] = -1.0
    for i in range(1, m):
        j = int(np.argmax(nearest))  # first maximum: smallest index wins ties
        selected[i] = j
        min_dist[i] = np.sqrt(nearest[j])
        np.minimum(nearest, np.sum((xyz - xyz[j]) ** 2, axis=1), out=nearest)
        nearest[j] = -1.0  # picked points stay at -1 and are never chosen again

    return SampleResult(selected, FPS, None, duplicated=False, start_index=start, min_distances=min_dist)


def sample(
    cloud: PointCloud,
    method: str,
    m: int,
    seed: SeedLike,
    cfg: Optional[CylGridConfig] = None,
    *,
    start_index: int = 0,
) -> SampleResult:
    method = normalize_method(method)
    if method == RS:
        return random_sample(len(cloud), m, seed)
    if method == PCB_RS:
        return pcb_random_sample(cloud, cfg or CylGridConfig(), m, seed)
    return farthest_point_sample(cloud, m, start_index)
