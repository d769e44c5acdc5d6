# losses.py
"""Weighted cross-entropy, sampling consistency loss and the two ways of combining them.

All functions work on already-reduced class-probability vectors and return
exact partial derivatives next to the value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import bisect

from core.errors import RejectedInputError

PROB_EPS = 1e-12
WEIGHT_EPS = 0.02
FD_STEP = 1e-6
FD_RTOL = 1e-4
KINK_GAP = 1e-6


def _vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise RejectedInputError(f"{name} must not be empty")
    if not np.isfinite(v).all():
        raise RejectedInputError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class ClassDistribution:
    probs: np.ndarray

    def __post_init__(self) -> None:
        p = _vector(self.probs, "probs")
        if (p < 0).any() or (p > 1).any():
            raise RejectedInputError("probabilities must lie in [0, 1]")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise RejectedInputError(f"probabilities sum to {p.sum()!r}, expected 1")
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return int(self.probs.shape[0])


@dataclass(frozen=True)
class ClassTarget:
    one_hot: np.ndarray

    def __post_init__(self) -> None:
        y = _vector(self.one_hot, "one_hot")
        if not (np.count_nonzero(y == 1.0) == 1 and np.count_nonzero(y) == 1):
            raise RejectedInputError("target must have exactly one entry equal to 1")
        object.__setattr__(self, "one_hot", y)

    @classmethod
    def from_index(cls, c: int, n_classes: int) -> "ClassTarget":
        if not 0 <= int(c) < int(n_classes):
            raise RejectedInputError(f"class {c} outside [0, {n_classes})")
        y = np.zeros(int(n_classes))
        y[int(c)] = 1.0
        return cls(y)

    @property
    def index(self) -> int:
        return int(np.argmax(self.one_hot))

    def __len__(self) -> int:
        return int(self.one_hot.shape[0])


@dataclass(frozen=True)
class ClassWeights:
    w: np.ndarray

    def __post_init__(self) -> None:
        w = _vector(self.w, "weights")
        if (w <= 0).any():
            raise RejectedInputError("class weights must be strictly positive")
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return int(self.w.shape[0])


@dataclass(frozen=True)
class UncertaintyParams:
    sigma1: float
    sigma2: float

    def __post_init__(self) -> None:
        for name in ("sigma1", "sigma2"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise RejectedInputError(f"{name} must be > 0, got {v!r}")
            object.__setattr__(self, name, v)


class ValueGrad(NamedTuple):
    value: float
    grad: np.ndarray


class ConsistencyGrad(NamedTuple):
    value: float
    grad_pcb: np.ndarray
    grad_rs: np.ndarray


class UncertaintyGrad(NamedTuple):
    value: float
    d_sigma1: float
    d_sigma2: float
    d_wce: float
    d_scl: float


@dataclass(frozen=True)
class LossReport:
    l_wce: float
    l_scl: float
    l_total: float
    mode: str  # "fixed" or "uncertainty"
    grads: dict[str, object] = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        return {
            "mode": self.mode,
            "l_wce": self.l_wce,
            "l_scl": self.l_scl,
            "l_total": self.l_total,
            "d_sigma1": float(self.grads.get("sigma1", 0.0)),
            "d_sigma2": float(self.grads.get("sigma2", 0.0)),
        }


def _as_probs(x) -> np.ndarray:
    return x.probs if isinstance(x, ClassDistribution) else ClassDistribution(x).probs


def _same_dim(*vectors: np.ndarray) -> None:
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise RejectedInputError(f"dimension mismatch: {sorted(dims)}")


# raw kernels: no normalization checks, so finite differences can perturb one entry


def _wce(p: np.ndarray, y: np.ndarray, w: np.ndarray) -> ValueGrad:
    pc = np.maximum(p, PROB_EPS)
    value = float(-np.sum(w * y * np.log(pc)))
    return ValueGrad(value, -w * y / pc)


def _scl(a: np.ndarray, b: np.ndarray) -> ConsistencyGrad:
    d = a - b
    s = np.sign(d)  # 0 at equal entries
    return ConsistencyGrad(float(np.sum(np.abs(d))), s, -s)


def _uncertainty(l_wce: float, l_scl: float, s1: float, s2: float) -> UncertaintyGrad:
    value = l_wce / s1**2 + l_scl / s2**2 + math.log1p(s1) + math.log1p(s2)
    return UncertaintyGrad(
        value,
        -2.0 * l_wce / s1**3 + 1.0 / (1.0 + s1),
        -2.0 * l_scl / s2**3 + 1.0 / (1.0 + s2),
        1.0 / s1**2,
        1.0 / s2**2,
    )


def weighted_ce(pred, target, weights) -> ValueGrad:
    p = _as_probs(pred)
    y = target.one_hot if isinstance(target, ClassTarget) else ClassTarget(target).one_hot
    w = weights.w if isinstance(weights, ClassWeights) else ClassWeights(weights).w
    _same_dim(p, y, w)
    return _wce(p, y, w)


def sampling_consistency(p_pcb, p_rs) -> ConsistencyGrad:
    a, b = _as_probs(p_pcb), _as_probs(p_rs)
    _same_dim(a, b)
    return _scl(a, b)


def _loss_scalar(v, name: str) -> float:
    f = float(v)
    if not math.isfinite(f):
        raise RejectedInputError(f"{name} must be finite")
    return f


def total_fixed(l_wce: float, l_scl: float, alpha: float) -> float:
    alpha = _loss_scalar(alpha, "alpha")
    if alpha < 0:
        raise RejectedInputError(f"alpha must be >= 0, got {alpha}")
    return _loss_scalar(l_wce, "l_wce") + alpha * _loss_scalar(l_scl, "l_scl")


def total_uncertainty(l_wce: float, l_scl: float, params: UncertaintyParams) -> UncertaintyGrad:
    if not isinstance(params, UncertaintyParams):
        params = UncertaintyParams(*params)
    lw, ls = _loss_scalar(l_wce, "l_wce"), _loss_scalar(l_scl, "l_scl")
    if lw < 0 or ls < 0:
        raise RejectedInputError("losses must be non-negative")
    return _uncertainty(lw, ls, params.sigma1, params.sigma2)


def loss_report(
    p_pcb,
    p_rs,
    target,
    weights,
    *,
    alpha: Optional[float] = None,
    params: Optional[UncertaintyParams] = None,
) -> LossReport:
    """Total loss with WCE on the PCB-RS branch and SCL between both branches.

    Exactly one of `alpha` (fixed weighted sum) or `params` (uncertainty
    weighting) selects the combination.
    """
    if (alpha is None) == (params is None):
        raise RejectedInputError("pass exactly one of alpha or params")
    wce = weighted_ce(p_pcb, target, weights)
    scl = sampling_consistency(p_pcb, p_rs)
    if alpha is not None:
        total = total_fixed(wce.value, scl.value, alpha)
        a, b = 1.0, float(alpha)
        d_s1 = d_s2 = 0.0
        mode = "fixed"
    else:
        unc = total_uncertainty(wce.value, scl.value, params)
        total = unc.value
        a, b = unc.d_wce, unc.d_scl
        d_s1, d_s2 = unc.d_sigma1, unc.d_sigma2
        mode = "uncertainty"
    grads = {
        "p_pcb": a * wce.grad + b * scl.grad_pcb,
        "p_rs": b * scl.grad_rs,
        "sigma1": d_s1,
        "sigma2": d_s2,
    }
    return LossReport(wce.value, scl.value, total, mode, grads)


def class_weights_from_counts(counts, eps: float = WEIGHT_EPS) -> ClassWeights:
    """w_c = 1 / sqrt(f_c + eps), rescaled to mean 1."""
    c = np.asarray(counts, dtype=np.float64).reshape(-1)
    if c.size == 0 or (c < 0).any() or c.sum() <= 0:
        raise RejectedInputError("class counts must be non-negative with a positive total")
    w = 1.0 / np.sqrt(c / c.sum() + eps)
    return ClassWeights(w / w.mean())


def stationary_sigma(l: float, lo: float = 1e-6, xtol: float = 1e-12) -> float:
    """Root of d/dsigma [l / sigma^2 + log(1 + sigma)] by bisection (l > 0)."""
    l = _loss_scalar(l, "l")
    if l <= 0:
        raise RejectedInputError("stationary sigma exists only for a positive loss")

    def g(s: float) -> float:
        return -2.0 * l / s**3 + 1.0 / (1.0 + s)

    hi = 1.0
    while g(hi) <= 0:
        hi *= 2.0
    return float(bisect(g, lo, hi, xtol=xtol))


# ----------------- finite-difference checks -----------------


class GradCheck(NamedTuple):
    op: str
    trial: int
    max_rel_err: float
    n_checked: int
    passed: bool


def rel_err(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _central(f, x: np.ndarray, i: int, h: float) -> float:
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def _random_probs(rng: np.random.Generator, c: int) -> np.ndarray:
    # mixed with uniform so no entry is within reach of the step size
    return 0.9 * rng.dirichlet(np.ones(c)) + 0.1 / c


def check_gradients(
    trials: int = 100,
    seed: int = 0,
    step: float = FD_STEP,
    rtol: float = FD_RTOL,
) -> list[GradCheck]:
    """Compare every analytic gradient with central differences on random inputs."""
    rng = np.random.default_rng(seed)
    rows: list[GradCheck] = []

    def record(op: str, trial: int, pairs: list[tuple[float, float]]) -> None:
        errs = [rel_err(a, f) for a, f in pairs]
        worst = max(errs) if errs else 0.0
        rows.append(GradCheck(op, trial, worst, len(errs), worst < rtol))

    for t in range(int(trials)):
        c = int(rng.integers(2, 21))
        p = _random_probs(rng, c)
        q = _random_probs(rng, c)
        y = np.zeros(c)
        y[int(rng.integers(0, c))] = 1.0
        w = rng.uniform(0.1, 5.0, size=c)

        wce = _wce(p, y, w)
        record("weighted_ce", t, [
            (wce.grad[i], _central(lambda v: _wce(v, y, w).value, p, i, step)) for i in range(c)
        ])

        scl = _scl(p, q)
        ok = np.abs(p - q) >= KINK_GAP
        pairs = [(scl.grad_pcb[i], _central(lambda v: _scl(v, q).value, p, i, step)) for i in range(c) if ok[i]]
        pairs += [(scl.grad_rs[i], _central(lambda v: _scl(p, v).value, q, i, step)) for i in range(c) if ok[i]]
        record("sampling_consistency", t, pairs)

        lw, ls = rng.uniform(0.0, 5.0, size=2)
        sig = rng.uniform(0.1, 10.0, size=2)
        unc = _uncertainty(lw, ls, sig[0], sig[1])
        record("total_uncertainty", t, [
            (unc.d_sigma1, _central(lambda v: _uncertainty(lw, ls, v[0], v[1]).value, sig, 0, step)),
            (unc.d_sigma2, _central(lambda v: _uncertainty(lw, ls, v[0], v[1]).value, sig, 1, step)),
        ])

    return rows


def closed_form_checks(tol: float = 1e-12) -> list[tuple[str, float, float, bool]]:
    two_ln2 = 2.0 * math.log(2.0)
    cases = [
        ("weighted_ce (0.5,0.5) w=(2,1)", two_ln2,
         weighted_ce([0.5, 0.5], [1.0, 0.0], [2.0, 1.0]).value),
        ("weighted_ce exact one-hot", 0.0,
         weighted_ce([0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]).value),
        ("sampling_consistency (0.7,0.2,0.1) vs (0.5,0.3,0.2)", 0.4,
         sampling_consistency([0.7, 0.2, 0.1], [0.5, 0.3, 0.2]).value),
        ("total_fixed alpha=10", 3.0, total_fixed(1.0, 0.2, 10.0)),
        ("total_fixed alpha=15", 4.0, total_fixed(1.0, 0.2, 15.0)),
        ("total_uncertainty regularizer only", two_ln2,
         total_uncertainty(0.0, 0.0, UncertaintyParams(1.0, 1.0)).value),
        ("total_uncertainty sigma=1", 1.5 + two_ln2,
         total_uncertainty(1.0, 0.5, UncertaintyParams(1.0, 1.0)).value),
    ]
    return [(name, expected, got, abs(expected - got) <= tol) for name, expected, got in cases]
