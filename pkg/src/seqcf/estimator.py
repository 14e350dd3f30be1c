"""Thresholded nearest-neighbor estimates of counterfactual means."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, EstimationError
from .model import ExperimentLog
from .rng import Streams

__all__ = [
    "EstimatorSettings",
    "DistanceMatrix",
    "Estimate",
    "EstimateTable",
    "FALLBACKS",
    "pairwise_distance",
    "neighbor_set",
    "nn_estimate",
    "estimate_all",
]

FALLBACKS = ("none", "self-observation", "column-mean", "global-mean")
NONE, SELF, COLUMN, GLOBAL = range(4)


@dataclass(frozen=True)
class EstimatorSettings:
    eta: float
    action: int = 0
    cap: Optional[int] = None
    alpha: float = 0.05
    subsample_k: Optional[int] = None
    cap_seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.eta):
            raise ConfigError("eta must be finite")
        if self.cap is not None and self.cap < 1:
            raise ConfigError("cap must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.subsample_k is not None and self.subsample_k < 2:
            raise ConfigError("subsample_k must be >= 2")


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    rho: np.ndarray      # [N, N], +inf where overlap is 0
    overlap: np.ndarray  # [N, N] int
    time_window: np.ndarray
    action: int = 0


@dataclass(frozen=True)
class Estimate:
    value: float
    neighbor_count: int
    fallback: str = "none"


@dataclass(frozen=True, eq=False)
class EstimateTable:
    """Estimates for every (unit, time) stored as parallel ``[N, T]`` arrays.

    ``fallback`` holds integer codes indexing :data:`FALLBACKS`.
    """

    value: np.ndarray
    count: np.ndarray
    fallback: np.ndarray
    action: int = 0

    @property
    def shape(self):
        return self.value.shape

    def __getitem__(self, key) -> Estimate:
        i, t = key
        return Estimate(float(self.value[i, t]), int(self.count[i, t]),
                        FALLBACKS[int(self.fallback[i, t])])

    @property
    def has_neighbors(self) -> np.ndarray:
        return self.fallback == NONE


def _window(log: ExperimentLog, time_window) -> np.ndarray:
    if time_window is None:
        return np.arange(log.n_times)
    w = np.unique(np.asarray(list(time_window), dtype=np.int64))
    if w.size == 0:
        raise ValueError("time window must be non-empty")
    if w[0] < 0 or w[-1] >= log.n_times:
        raise ValueError("time window outside [0, T)")
    return w


def _direct(M: np.ndarray, Y: np.ndarray):
    N, W = M.shape
    num = np.zeros((N, N))
    for s in range(W):
        m = M[:, s]
        y = Y[:, s]
        diff = y[:, None] - y[None, :]
        num += (m[:, None] * m[None, :]) * (diff * diff)
    return num


def _gram(M: np.ndarray, Y: np.ndarray, rel_tol: float = 1e-10):
    # Center each time column on its treated mean to limit cancellation.
    cnt = M.sum(axis=0)
    centre = np.where(cnt > 0, (M * Y).sum(axis=0) / np.maximum(cnt, 1), 0.0)
    Z = (Y - centre) * M
    Z2 = Z * Z
    cross = Z @ Z.T
    sq = Z2 @ M.T
    scale = sq + sq.T
    num = scale - 2.0 * cross
    np.maximum(num, 0.0, out=num)
    # Recompute pairs the expansion cannot resolve so exact ties stay exact.
    close = num <= rel_tol * scale
    iu, ju = np.nonzero(np.triu(close, 1))
    for lo in range(0, iu.size, 4096):
        a, b = iu[lo:lo + 4096], ju[lo:lo + 4096]
        d = Y[a] - Y[b]
        num[a, b] = (M[a] * M[b] * d * d).sum(axis=1)
        num[b, a] = num[a, b]
    return num


def pairwise_distance(log: ExperimentLog, a: int, time_window: Optional[Sequence[int]] = None,
                      method: str = "auto") -> DistanceMatrix:
    """Mean squared outcome gap over times where both units received ``a``.

    ``method="direct"`` accumulates one time step at a time (bitwise equal to a
    scalar loop in time order); ``"gram"`` uses matrix products and is the
    default for large logs.  Pairs with no common treated time get ``+inf``.
    """
    w = _window(log, time_window)
    M = (log.treatments[:, w] == a).astype(float)
    Y = np.where(M > 0, log.outcomes[:, w], 0.0)
    N = log.n_units
    if method == "auto":
        method = "direct" if N * N * w.size <= 2_000_000 else "gram"
    if method == "direct":
        num = _direct(M, Y)
    elif method == "gram":
        num = _gram(M, Y)
    else:
        raise ConfigError(f"unknown distance method {method!r}")
    overlap = np.rint(M @ M.T).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(overlap > 0, num / np.maximum(overlap, 1), np.inf)
    np.fill_diagonal(rho, 0.0)
    rho.setflags(write=False)
    overlap.setflags(write=False)
    return DistanceMatrix(rho, overlap, w, a)


def neighbor_set(dist: DistanceMatrix, log: ExperimentLog, i: int, t: int,
                 settings: EstimatorSettings) -> np.ndarray:
    ok = (dist.rho[i] <= settings.eta) & (log.treatments[:, t] == settings.action)
    ok[i] = False
    return np.flatnonzero(ok)


def _arm_global_mean(log: ExperimentLog, a: int) -> float:
    m = log.treatments == a
    if not m.any():
        raise EstimationError(f"action {a} is never assigned in this log")
    return float(log.outcomes[m].mean())


def _cap_sample(nbrs: np.ndarray, cap: int, seed: int, i: int, t: int) -> np.ndarray:
    g = Streams(seed).generator("cap", i, t)
    return np.sort(g.choice(nbrs, size=cap, replace=False))


def nn_estimate(log: ExperimentLog, dist: DistanceMatrix, i: int, t: int,
                settings: EstimatorSettings) -> Estimate:
    a = settings.action
    if not (log.treatments == a).any():
        raise EstimationError(f"action {a} is never assigned in this log")
    nbrs = neighbor_set(dist, log, i, t, settings)
    if nbrs.size:
        if settings.cap is not None and nbrs.size > settings.cap:
            nbrs = _cap_sample(nbrs, settings.cap, settings.cap_seed, i, t)
        return Estimate(float(log.outcomes[nbrs, t].mean()), int(nbrs.size), "none")
    if log.treatments[i, t] == a:
        return Estimate(float(log.outcomes[i, t]), 0, "self-observation")
    col = log.treatments[:, t] == a
    if col.any():
        return Estimate(float(log.outcomes[col, t].mean()), 0, "column-mean")
    return Estimate(_arm_global_mean(log, a), 0, "global-mean")


def estimate_all(log: ExperimentLog, dist: DistanceMatrix, settings: EstimatorSettings,
                 times: Optional[Sequence[int]] = None) -> EstimateTable:
    """Estimates at every unit and the selected times (all times by default).

    Columns outside ``times`` are filled with ``nan`` and fallback code -1.
    """
    a = settings.action
    if not (log.treatments == a).any():
        raise EstimationError(f"action {a} is never assigned in this log")
    N, T = log.n_units, log.n_times
    cols = np.arange(T) if times is None else np.asarray(list(times), dtype=np.int64)
    M = (log.treatments[:, cols] == a).astype(float)
    Y = np.where(M > 0, log.outcomes[:, cols], 0.0)
    W = dist.rho <= settings.eta
    np.fill_diagonal(W, False)
    # Counts are small integers, exact in single precision.
    cnt = (W.astype(np.float32) @ M.astype(np.float32)).astype(float)
    tot = W.astype(float) @ Y
    val = np.empty_like(tot)
    has = cnt > 0
    np.divide(tot, cnt, out=val, where=has)
    fb = np.full(cnt.shape, NONE, dtype=np.int8)

    if settings.cap is not None:
        for i, c in zip(*np.nonzero(cnt > settings.cap)):
            t = int(cols[c])
            nbrs = np.flatnonzero(W[i] & (M[:, c] > 0))
            pick = _cap_sample(nbrs, settings.cap, settings.cap_seed, int(i), t)
            val[i, c] = log.outcomes[pick, t].mean()
            cnt[i, c] = settings.cap

    own = M > 0
    selfm = ~has & own
    val[selfm] = Y[selfm]
    fb[selfm] = SELF
    col_cnt = M.sum(axis=0)
    col_mean = Y.sum(axis=0) / np.maximum(col_cnt, 1)
    if (col_cnt == 0).any():
        col_mean[col_cnt == 0] = _arm_global_mean(log, a)
    rest = ~has & ~own
    val[rest] = np.broadcast_to(col_mean, val.shape)[rest]
    fb[rest] = np.where(np.broadcast_to(col_cnt > 0, val.shape)[rest], COLUMN, GLOBAL)

    if times is None:
        return EstimateTable(val, cnt.astype(np.int64), fb, a)
    V = np.full((N, T), np.nan)
    C = np.zeros((N, T), dtype=np.int64)
    F = np.full((N, T), -1, dtype=np.int8)
    V[:, cols] = val
    C[:, cols] = cnt
    F[:, cols] = fb
    return EstimateTable(V, C, F, a)
