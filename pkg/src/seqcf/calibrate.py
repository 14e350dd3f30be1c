"""Threshold tuning and noise-variance estimation by splitting time in two halves.

Distances always come from the first half; losses and the variance estimate
use treated entries of the second half only.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import CalibrationError, DegenerateEstimateWarning
from .estimator import DistanceMatrix, pairwise_distance
from .model import ExperimentLog

__all__ = [
    "TuningResult",
    "IterationResult",
    "split_halves",
    "eta_grid_from_percentiles",
    "split_losses",
    "tune_eta",
    "estimate_sigma",
    "iterate_sigma_eta",
]


@dataclass(frozen=True)
class TuningResult:
    eta_grid: List[float]
    losses: List[float]
    eta_tuned: float
    sigma_hat_sq: float
    split: Tuple[np.ndarray, np.ndarray]
    self_fallback_frac: float = 0.0


@dataclass(frozen=True)
class IterationResult:
    eta: float
    sigma_hat_sq: float
    converged: bool
    iterations: int
    trace: List[Tuple[float, float]] = field(default_factory=list)  # (eta used, sigma^2 found)


def split_halves(T: int) -> Tuple[np.ndarray, np.ndarray]:
    """0-based index sets ``[0, T//2)`` and ``[T//2, T)``."""
    if T < 2:
        raise ValueError("splitting time needs T >= 2")
    h = T // 2
    return np.arange(h), np.arange(h, T)


def eta_grid_from_percentiles(dist: DistanceMatrix, k: int = 20) -> List[float]:
    if k < 1:
        raise ValueError("grid size k must be >= 1")
    iu = np.triu_indices(dist.rho.shape[0], 1)
    vals = dist.rho[iu]
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise CalibrationError("no pair of units shares a treated time; cannot build a grid")
    q = 100.0 * np.arange(1, k + 1) / (k + 1)
    grid = np.unique(np.percentile(vals, q, method="linear"))
    return [float(x) for x in grid]


def _treated_t2(log: ExperimentLog, a: int, t2: np.ndarray) -> np.ndarray:
    return log.treatments[:, t2] == a


class _SecondHalf:
    """Treated second-half entries, prepared once and reused across thresholds."""

    def __init__(self, log: ExperimentLog, a: int, t2: np.ndarray):
        self.mask = _treated_t2(log, a, t2)
        self.M = self.mask.astype(float)
        self.M32 = self.M.astype(np.float32)
        self.Y = np.where(self.mask, log.outcomes[:, t2], 0.0)
        self.y = self.Y[self.mask]

    def residuals(self, eta: float, dist: DistanceMatrix):
        # A treated entry without neighbors falls back to its own outcome, so
        # its residual is exactly zero; this matches estimate_all uncapped.
        W = dist.rho <= eta
        np.fill_diagonal(W, False)
        cnt = (W.astype(np.float32) @ self.M32)[self.mask]
        tot = (W.astype(float) @ self.Y)[self.mask]
        selfs = cnt == 0
        fit = np.where(selfs, self.y, tot / np.where(selfs, 1.0, cnt))
        return self.y - fit, selfs


def _residuals(log, a, eta, dist, t2, half=None):
    half = half or _SecondHalf(log, a, t2)
    return half.residuals(float(eta), dist)


def split_losses(log: ExperimentLog, a: int, grid, dist: DistanceMatrix,
                 t2: np.ndarray) -> List[float]:
    """Sum of squared second-half residuals at treated entries, one per grid value."""
    half = _SecondHalf(log, a, t2)
    out = []
    for eta in grid:
        r, _ = half.residuals(float(eta), dist)
        out.append(float(np.sum(r * r)))
    return out


def _check_arm(log, a, t1, t2):
    if not (log.treatments[:, t1] == a).any() or not (log.treatments[:, t2] == a).any():
        raise CalibrationError(f"action {a} must be observed in both halves of the time split")


def estimate_sigma(log: ExperimentLog, a: int, eta: float,
                   split: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                   dist: Optional[DistanceMatrix] = None, warn: bool = True,
                   half: Optional[_SecondHalf] = None) -> float:
    """Mean squared second-half residual at treated entries.

    Warns with :class:`DegenerateEstimateWarning` when every residual comes
    from a self-observation fallback, which is zero by construction.
    """
    t1, t2 = split if split is not None else split_halves(log.n_times)
    if dist is None:
        dist = pairwise_distance(log, a, t1)
    m = _treated_t2(log, a, t2)
    if not m.any():
        raise CalibrationError(f"action {a} never observed in the second half")
    r, selfs = _residuals(log, a, eta, dist, t2, half)
    if warn and selfs.all():
        warnings.warn("variance estimate relies only on self-observation fallbacks",
                      DegenerateEstimateWarning, stacklevel=2)
    return float(np.mean(r * r))


def tune_eta(log: ExperimentLog, a: int = 0, k: int = 20,
             grid: Optional[List[float]] = None) -> TuningResult:
    """Pick the grid value minimizing the second-half loss (ties go to the smaller)."""
    t1, t2 = split_halves(log.n_times)
    _check_arm(log, a, t1, t2)
    dist = pairwise_distance(log, a, t1)
    if grid is None:
        grid = eta_grid_from_percentiles(dist, k)
    grid = sorted(float(g) for g in grid)
    losses = split_losses(log, a, grid, dist, t2)
    best = int(np.argmin(losses))  # first minimum, i.e. smallest eta
    eta = grid[best]
    r, selfs = _residuals(log, a, eta, dist, t2)
    if selfs.all():
        warnings.warn("variance estimate relies only on self-observation fallbacks",
                      DegenerateEstimateWarning, stacklevel=2)
    return TuningResult(list(grid), losses, eta, float(np.mean(r * r)), (t1, t2),
                        float(selfs.mean()) if selfs.size else 0.0)


def iterate_sigma_eta(log: ExperimentLog, a: int, eta0: float, max_iters: int = 25,
                      tol: float = 1e-3) -> IterationResult:
    """Alternate ``sigma^2 <- estimate_sigma(eta)`` and ``eta <- 2 sigma^2``.

    The starting reference is ``eta0 / 2``, the variance that ``eta0`` would
    correspond to.  Stops when successive variances agree to relative ``tol``.
    """
    if not eta0 > 0:
        raise ValueError("eta0 must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    t1, t2 = split_halves(log.n_times)
    _check_arm(log, a, t1, t2)
    dist = pairwise_distance(log, a, t1)
    half = _SecondHalf(log, a, t2)
    eta = float(eta0)
    s_old = eta / 2.0
    trace = []
    converged = False
    for it in range(1, max_iters + 1):
        s = estimate_sigma(log, a, eta, (t1, t2), dist, warn=False, half=half)
        trace.append((eta, s))
        done = abs(s - s_old) <= tol * max(s_old, 1e-12)
        eta = 2.0 * s
        s_old = s
        if done:
            converged = True
            break
    return IterationResult(eta, s_old, converged, len(trace), trace)
