"""Core data types: latent factors, counterfactual means and experiment logs.

Array layout is row-major ``[unit][time][action]`` throughout.  Units, times
and actions are all 0-based indices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .errors import ConfigError

__all__ = [
    "ActionSet",
    "LatentState",
    "MeanTensor",
    "ExperimentLog",
    "MEAN_FUNCTIONS",
    "register_mean_fn",
    "build_mean_tensor",
    "realized_pmin",
]

MeanFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Each entry maps (U [N x d], V [T x d]) -> theta [N x T].
MEAN_FUNCTIONS: Dict[str, MeanFn] = {}


def register_mean_fn(name: str) -> Callable[[MeanFn], MeanFn]:
    def deco(fn: MeanFn) -> MeanFn:
        MEAN_FUNCTIONS[name] = fn
        return fn

    return deco


@register_mean_fn("bilinear")
def _bilinear(U, V):
    return U @ V.T


@register_mean_fn("norm-distance")
def _norm_distance(U, V):
    diff = U[:, None, :] - V[None, :, :]
    return np.sqrt(np.einsum("ntd,ntd->nt", diff, diff))


@register_mean_fn("sigmoid-inner")
def _sigmoid_inner(U, V):
    return 1.0 / (1.0 + np.exp(-(U @ V.T)))


def _frozen(x, dtype=None) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ActionSet:
    count: int

    def __post_init__(self):
        if int(self.count) < 1:
            raise ConfigError(f"action count must be >= 1, got {self.count}")

    def __iter__(self):
        return iter(range(self.count))

    def __len__(self):
        return self.count


@dataclass(frozen=True, eq=False)
class LatentState:
    """Unit factors ``[N, A, d]``, time factors ``[T, A, d]`` and the mean function."""

    unit_factors: np.ndarray
    time_factors: np.ndarray
    mean_fn: str = "bilinear"

    def __post_init__(self):
        u = _frozen(self.unit_factors, float)
        v = _frozen(self.time_factors, float)
        if u.ndim != 3 or v.ndim != 3:
            raise ConfigError("unit_factors and time_factors must be 3-d arrays")
        if u.shape[1:] != v.shape[1:]:
            raise ConfigError(
                f"factor shapes disagree: units {u.shape}, times {v.shape}"
            )
        object.__setattr__(self, "unit_factors", u)
        object.__setattr__(self, "time_factors", v)

    @property
    def n_units(self) -> int:
        return self.unit_factors.shape[0]

    @property
    def n_times(self) -> int:
        return self.time_factors.shape[0]

    @property
    def action_count(self) -> int:
        return self.unit_factors.shape[1]

    @property
    def dim(self) -> int:
        return self.unit_factors.shape[2]

    def check_bounds(self, c_u: float, c_v: float, slack: float = 1e-12) -> None:
        """Raise if any factor norm exceeds its configured bound."""
        nu = np.linalg.norm(self.unit_factors, axis=-1).max(initial=0.0)
        nv = np.linalg.norm(self.time_factors, axis=-1).max(initial=0.0)
        if nu > c_u * (1 + slack) + slack:
            raise ConfigError(f"unit factor norm {nu:.6g} exceeds c_u={c_u:.6g}")
        if nv > c_v * (1 + slack) + slack:
            raise ConfigError(f"time factor norm {nv:.6g} exceeds c_v={c_v:.6g}")


@dataclass(frozen=True, eq=False)
class MeanTensor:
    theta: np.ndarray  # [N, T, A]

    def __post_init__(self):
        th = _frozen(self.theta, float)
        if th.ndim != 3:
            raise ConfigError("theta must be [N, T, A]")
        if not np.all(np.isfinite(th)):
            raise ConfigError("theta has non-finite entries")
        object.__setattr__(self, "theta", th)

    def arm(self, a: int) -> np.ndarray:
        return self.theta[:, :, a]


def build_mean_tensor(latent: LatentState) -> MeanTensor:
    """Counterfactual means ``theta[i, t, a] = f(u_i^(a), v_t^(a))``."""
    try:
        fn = MEAN_FUNCTIONS[latent.mean_fn]
    except KeyError:
        known = ", ".join(sorted(MEAN_FUNCTIONS))
        raise ConfigError(
            f"unknown mean function {latent.mean_fn!r}; known: {known}"
        ) from None
    A = latent.action_count
    theta = np.empty((latent.n_units, latent.n_times, A))
    for a in range(A):
        theta[:, :, a] = fn(latent.unit_factors[:, a, :], latent.time_factors[:, a, :])
    return MeanTensor(theta)


@dataclass(frozen=True, eq=False)
class ExperimentLog:
    """Observed data of one sequential experiment.

    Attributes
    ----------
    treatments : int array [N, T]
        Assigned action per unit and time.
    outcomes : float array [N, T]
        Observed outcome under the assigned action.
    assign_probs : float array [N, T, A]
        Probabilities the policy used to draw each treatment.
    noise_bound, noise_sd : float
        Almost-sure bound and standard deviation of the noise, when known
        (``nan`` for real logs).
    """

    treatments: np.ndarray
    outcomes: np.ndarray
    assign_probs: np.ndarray
    noise_bound: float = float("nan")
    noise_sd: float = float("nan")

    def __post_init__(self):
        A_ = _frozen(self.treatments, np.int64)
        Y = _frozen(self.outcomes, float)
        P = _frozen(self.assign_probs, float)
        if A_.ndim != 2 or Y.shape != A_.shape:
            raise ConfigError(
                f"treatments {A_.shape} and outcomes {Y.shape} must both be [N, T]"
            )
        if P.ndim != 3 or P.shape[:2] != A_.shape:
            raise ConfigError(f"assign_probs {P.shape} must be [N, T, A]")
        if A_.size and (A_.min() < 0 or A_.max() >= P.shape[2]):
            raise ConfigError("treatment index outside the action set")
        if P.size and np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ConfigError("assignment probabilities must sum to 1 within 1e-12")
        if P.size and P.min() < 0:
            raise ConfigError("negative assignment probability")
        object.__setattr__(self, "treatments", A_)
        object.__setattr__(self, "outcomes", Y)
        object.__setattr__(self, "assign_probs", P)
        object.__setattr__(self, "noise_bound", float(self.noise_bound))
        object.__setattr__(self, "noise_sd", float(self.noise_sd))

    @property
    def n_units(self) -> int:
        return self.treatments.shape[0]

    @property
    def n_times(self) -> int:
        return self.treatments.shape[1]

    @property
    def action_count(self) -> int:
        return self.assign_probs.shape[2]

    def mask(self, a: int) -> np.ndarray:
        """Boolean ``[N, T]`` indicator of ``A_{i,t} == a``."""
        return self.treatments == a


def realized_pmin(log: ExperimentLog, a: int, t: int) -> float:
    """Smallest probability of action ``a`` over all units and times ``<= t``."""
    if not 0 <= t < log.n_times:
        raise ValueError(f"time index {t} outside [0, {log.n_times})")
    return float(log.assign_probs[:, : t + 1, a].min())
