"""Normal-quantile intervals for unit x time means and for the population mean."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import IntervalUnavailable
from .estimator import Estimate, EstimateTable
from .model import ExperimentLog
from .rng import Streams

__all__ = [
    "IntervalEstimate",
    "z_quantile",
    "prediction_interval",
    "prediction_halfwidths",
    "population_estimate",
    "subsample_ci",
]


@dataclass(frozen=True)
class IntervalEstimate:
    center: float
    half_width: float
    level: float
    n_effective: int

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    def covers(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def z_quantile(alpha: float) -> float:
    """Upper ``alpha/2`` standard normal quantile."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return float(ndtri(1.0 - alpha / 2.0))


def prediction_interval(est: Estimate, sigma_hat: float, alpha: float = 0.05) -> IntervalEstimate:
    if est.fallback != "none" or est.neighbor_count < 1:
        raise IntervalUnavailable(
            f"no neighbors for this entry (fallback={est.fallback}); interval undefined"
        )
    if sigma_hat < 0:
        raise ValueError("sigma_hat must be >= 0")
    hw = z_quantile(alpha) * sigma_hat / np.sqrt(est.neighbor_count)
    return IntervalEstimate(est.value, float(hw), 1.0 - alpha, est.neighbor_count)


def prediction_halfwidths(table: EstimateTable, sigma_hat: float, alpha: float = 0.05) -> np.ndarray:
    """Half-widths for every entry; ``nan`` where the interval is unavailable."""
    n = table.count.astype(float)
    out = np.full(n.shape, np.nan)
    ok = table.has_neighbors & (n > 0)
    out[ok] = z_quantile(alpha) * sigma_hat / np.sqrt(n[ok])
    return out


def population_estimate(log: ExperimentLog, estimates: EstimateTable, a: int) -> float:
    obs = log.treatments == a
    vals = np.where(obs, log.outcomes, estimates.value)
    return float(vals.mean())


def subsample_ci(estimates: EstimateTable, k: int, alpha: float = 0.05,
                 streams: Streams | None = None) -> IntervalEstimate:
    """Mean of ``k`` estimates sampled without replacement with a z interval."""
    vals = np.asarray(estimates.value if isinstance(estimates, EstimateTable) else estimates,
                      dtype=float).ravel()
    if k < 2:
        raise ValueError("subsample size K must be >= 2")
    if k > vals.size:
        raise ValueError(f"subsample size K={k} exceeds the {vals.size} available entries")
    if k == vals.size:
        pick = vals
    else:
        if streams is None:
            raise ValueError("subsampling fewer than all entries needs an RNG stream")
        idx = streams.generator("subsample").choice(vals.size, size=k, replace=False)
        pick = vals[idx]
    sd = float(np.std(pick, ddof=1))
    return IntervalEstimate(float(pick.mean()), z_quantile(alpha) * sd / np.sqrt(k), 1.0 - alpha, k)
