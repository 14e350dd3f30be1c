"""Theoretical quantities used for diagnostics: chi, phi, the error bound and eta schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .model import LatentState

__all__ = [
    "TheoryParams",
    "BoundResult",
    "err_term_chi",
    "phi_discrete",
    "phi_continuous_mc",
    "thm1_bound",
    "scheduled_eta",
    "eta_schedule",
    "oracle_rho_star",
]


@dataclass(frozen=True)
class TheoryParams:
    """Constants entering the bound.

    ``pmin_seq[t]`` is the exploration floor at 0-based time ``t``; a single
    value is broadcast to every time.
    """

    c_u: float
    c_v: float
    c_eps: float
    lambda_a: float
    sigma_sq: float
    delta: float
    pmin_seq: Sequence[float] = (1.0,)
    big_c: float = 1.0
    sigma_v: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("c_u", "c_v", "c_eps", "sigma_sq", "big_c"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lambda_a <= 0:
            raise ConfigError("lambda_a must be positive")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        seq = np.asarray(self.pmin_seq, dtype=float).ravel()
        if seq.size == 0 or seq.min() < 0 or seq.max() > 1:
            raise ConfigError("pmin_seq must be a non-empty sequence of probabilities")
        object.__setattr__(self, "pmin_seq", tuple(seq.tolist()))
        if self.sigma_v is not None:
            S = np.asarray(self.sigma_v, dtype=float)
            lam = float(np.linalg.eigvalsh((S + S.T) / 2).min())
            if self.lambda_a > lam * (1 + 1e-9) + 1e-12:
                raise ConfigError(
                    f"lambda_a={self.lambda_a:.6g} exceeds the smallest eigenvalue {lam:.6g} of sigma_v"
                )

    def pmin(self, t: int) -> float:
        seq = self.pmin_seq
        if len(seq) == 1:
            return seq[0]
        if not 0 <= t < len(seq):
            raise ValueError(f"time index {t} outside the pmin sequence")
        return seq[t]

    def with_delta(self, delta: float) -> "TheoryParams":
        return TheoryParams(self.c_u, self.c_v, self.c_eps, self.lambda_a, self.sigma_sq, delta,
                            self.pmin_seq, self.big_c, self.sigma_v)


def err_term_chi(params: TheoryParams, N: int, T: int, t: Optional[int] = None) -> float:
    """Distance-estimation error ``chi``; uses the floor at the last time unless ``t`` is given."""
    if N < 1 or T < 1:
        raise ValueError("N and T must be >= 1")
    p = params.pmin(T - 1 if t is None else t)
    if p <= 0:
        raise ValueError("chi is undefined when the exploration floor is 0")
    K = params.c_v * params.c_u + params.c_eps
    return 4.0 * K * K * math.sqrt(2.0 * math.log(4.0 * N * T / params.delta)) / (p * math.sqrt(T))


def phi_discrete(support, sigma_v, u, r: float) -> float:
    """Share of the (uniformly weighted) support within quadratic distance ``r`` of ``u``."""
    pts = np.atleast_2d(np.asarray(support, dtype=float))
    S = np.asarray(sigma_v, dtype=float)
    diff = pts - np.asarray(u, dtype=float)
    q = np.einsum("md,de,me->m", diff, S, diff)
    return float(np.count_nonzero(q <= r) / pts.shape[0])


def phi_continuous_mc(d: int, u, r: float, n_samples: int, rng: np.random.Generator):
    """Monte Carlo ``P(|u' - u|^2 <= r)`` for ``u'`` uniform on the cube; returns ``(p, se)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (d,) or u.min() < 0 or u.max() > 1:
        raise ValueError("u must be a point of [0, 1]^d")
    if r < 0:
        raise ValueError("r must be >= 0")
    if r >= d:
        return 1.0, 0.0
    if r == 0:
        return 0.0, 0.0
    x = rng.random((n_samples, d))
    hit = np.sum((x - u) ** 2, axis=1) <= r
    p = float(hit.mean())
    return p, float(math.sqrt(p * (1 - p) / n_samples))


@dataclass(frozen=True)
class BoundResult:
    total: float
    bias_eta: float
    bias_chi: float
    variance: float
    inflation: float
    success_prob: float
    eta_prime: float
    chi: float
    applicable: bool
    reason: str = ""


def thm1_bound(params: TheoryParams, N: int, T: int, t: int, eta: float,
               phi_at: Callable[[float], float]) -> BoundResult:
    """Four-term high-probability bound on the squared error at 0-based time ``t``.

    The result is flagged ``applicable=False`` (with the terms still evaluated
    where finite) when ``eta`` is below ``2 sigma^2 + chi``, when the expected
    neighbor count ``p_t (N - 1) phi(eta')`` is below one, or when the final
    exploration floor is too small for ``T``.
    """
    P = params
    chi = err_term_chi(P, N, T)
    p_t = P.pmin(t)
    p_T = P.pmin(T - 1)
    eta_p = eta - 2.0 * P.sigma_sq - chi
    L = math.log(8.0 / P.delta)
    reasons = []
    if eta_p < 0:
        reasons.append("eta below 2 sigma^2 + chi")
    need = math.sqrt(8.0 * max(math.log(2.0 / P.delta), 0.0) / T)
    if p_T < need:
        reasons.append("exploration floor below sqrt(8 log(2/delta) / T)")
    phi0 = float(phi_at(max(eta_p, 0.0))) if eta_p >= 0 else 0.0
    nbar = p_t * phi0 * (N - 1)
    if nbar < 1:
        reasons.append("p_t (N-1) phi(eta') < 1")

    cv2 = P.c_v**2
    bias_eta = 2.0 * cv2 * (eta - 2.0 * P.sigma_sq) / P.lambda_a
    bias_chi = 2.0 * cv2 * chi / P.lambda_a
    with np.errstate(divide="ignore", invalid="ignore"):
        if nbar > 0:
            floor_var = 4.0 * P.c_eps**2 * L / (3.0 * p_t * phi0 * N)
            variance = 72.0 * L * max(P.sigma_sq, floor_var) / nbar
            phi2 = float(phi_at(eta_p + 2.0 * chi))
            ratio = (phi2 / phi0 - 1.0) ** 2
            inflation = 144.0 * P.c_eps**2 / p_t**2 * max(
                ratio, P.big_c * L * L / (phi0 * (N - 1)) ** 2)
            success = 1.0 - P.delta - 2.0 * math.exp(-nbar / 16.0)
        else:
            variance = inflation = math.inf
            success = -math.inf
    total = bias_eta + bias_chi + variance + inflation
    return BoundResult(total, bias_eta, bias_chi, variance, inflation, success, eta_p, chi,
                       not reasons, "; ".join(reasons))


SCHEDULES = ("discrete", "continuous-unit", "continuous-ate")


def scheduled_eta(kind: str, sigma_sq: float, chi: float, T: int, beta: float = 0.0) -> float:
    """Threshold schedule given an already computed ``chi``."""
    if kind == "discrete":
        if not 0 <= beta <= 0.5:
            raise ValueError("beta must lie in [0, 1/2]")
        return 2.0 * sigma_sq + chi
    if kind == "continuous-unit":
        if not 0 <= beta <= 0.5:
            raise ValueError("beta must lie in [0, 1/2] for the unit-level schedule")
        return 2.0 * sigma_sq + (1.0 + T ** ((1.0 - 2.0 * beta) / 6.0)) * chi
    if kind == "continuous-ate":
        if not 0 <= beta <= 0.25:
            raise ValueError("beta must lie in [0, 1/4] for the population-level schedule")
        return 2.0 * sigma_sq + math.sqrt(2.0) * (1.0 + T ** ((1.0 + 2.0 * beta) / 6.0)) * chi
    raise ValueError(f"unknown schedule {kind!r}; known: {SCHEDULES}")


def eta_schedule(kind: str, params: TheoryParams, N: int, T: int, beta: float = 0.0) -> float:
    """Scheduled threshold with ``chi`` evaluated at ``delta = 1 / (N T)``."""
    chi = err_term_chi(params.with_delta(1.0 / (N * T)), N, T)
    return scheduled_eta(kind, params.sigma_sq, chi, T, beta)


def oracle_rho_star(latent: LatentState, sigma_sq: float, i: int, j: int, a: int,
                    sigma_v) -> float:
    """Population distance ``(u_i - u_j)^T Sigma_v (u_i - u_j) + 2 sigma^2``."""
    g = latent.unit_factors[i, a] - latent.unit_factors[j, a]
    return float(g @ np.asarray(sigma_v, dtype=float) @ g + 2.0 * sigma_sq)
