"""Data-generating mechanism: latent factors, bounded noise and sequential policies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .errors import ConfigError
from .model import ExperimentLog, LatentState, build_mean_tensor
from .rng import Streams

__all__ = [
    "LatentSpec",
    "NoiseSpec",
    "PolicySpec",
    "time_second_moment",
    "sample_latent",
    "sample_noise",
    "policy_step",
    "run_experiment",
]

TIME_DISTS = ("uniform-cube", "symmetric-cube", "sphere")
SUPPORT_KINDS = ("ring", "random")


def time_second_moment(time_dist: str, d: int) -> np.ndarray:
    """Analytic ``E[v v^T]`` of the time-factor distribution (not centered)."""
    if time_dist == "uniform-cube":
        S = np.full((d, d), 0.25)
        np.fill_diagonal(S, 1.0 / 3.0)
        return S
    if time_dist == "symmetric-cube":
        return np.eye(d) / 3.0
    if time_dist == "sphere":
        return np.eye(d) / d
    raise ConfigError(f"unknown time distribution {time_dist!r}; known: {TIME_DISTS}")


def _time_norm_bound(time_dist: str, d: int) -> float:
    return 1.0 if time_dist == "sphere" else float(np.sqrt(d))


@dataclass(frozen=True)
class LatentSpec:
    """How unit and time factors are drawn.

    ``kind="discrete"`` draws each unit's factor uniformly from ``M`` support
    points; ``support`` is either an explicit ``M x d`` list, ``"ring"``
    (equally spaced on a circle of radius ``radius`` in the first two
    coordinates, centered at the origin) or ``"random"`` (uniform on the cube).
    ``kind="continuous"`` draws unit factors uniformly from ``[0, 1]^d``.
    Bounds ``c_u``/``c_v`` default to the tightest value implied by the
    distribution; explicit bounds are checked against the draws.
    """

    kind: str = "discrete"
    d: int = 2
    M: int = 5
    c_u: Optional[float] = None
    c_v: Optional[float] = None
    shared_across_actions: bool = True
    support: Union[str, Sequence[Sequence[float]]] = "ring"
    radius: float = 1.0
    time_dist: str = "uniform-cube"

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise ConfigError(f"latent kind must be discrete or continuous, got {self.kind!r}")
        if self.d < 1:
            raise ConfigError("latent dimension d must be >= 1")
        if self.kind == "discrete" and self.M < 1:
            raise ConfigError("M must be >= 1")
        if self.time_dist not in TIME_DISTS:
            raise ConfigError(f"unknown time distribution {self.time_dist!r}; known: {TIME_DISTS}")
        if isinstance(self.support, str) and self.support not in SUPPORT_KINDS:
            raise ConfigError(f"unknown support {self.support!r}; known: {SUPPORT_KINDS}")

    @property
    def sigma_v(self) -> np.ndarray:
        return time_second_moment(self.time_dist, self.d)

    def support_points(self, streams: Optional[Streams] = None, action: int = 0) -> np.ndarray:
        """The ``M x d`` support of a discrete spec."""
        if self.kind != "discrete":
            raise ConfigError("support points exist only for discrete latent specs")
        if not isinstance(self.support, str):
            pts = np.asarray(self.support, dtype=float)
            if pts.shape != (self.M, self.d):
                raise ConfigError(f"support must be {self.M} x {self.d}, got {pts.shape}")
        elif self.support == "ring":
            if self.d == 1:
                pts = np.linspace(-self.radius, self.radius, self.M)[:, None]
            else:
                ang = 2 * np.pi * np.arange(self.M) / self.M
                pts = np.zeros((self.M, self.d))
                pts[:, 0] = self.radius * np.cos(ang)
                pts[:, 1] = self.radius * np.sin(ang)
        else:
            if streams is None:
                raise ConfigError("random support needs an RNG stream")
            pts = streams.generator("support", action).random((self.M, self.d))
        if self.M > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            gap = np.einsum("ijd,ijd->ij", diff, diff)
            np.fill_diagonal(gap, np.inf)
            if gap.min() <= 0:
                raise ConfigError("discrete support points must be pairwise distinct")
        return pts


def sample_latent(spec: LatentSpec, N: int, T: int, action_count: int,
                  streams: Streams, mean_fn: str = "bilinear") -> LatentState:
    if N < 1 or T < 1 or action_count < 1:
        raise ConfigError("N, T and the action count must all be >= 1")
    d = spec.d
    U = np.empty((N, action_count, d))
    for a in range(action_count):
        src = 0 if spec.shared_across_actions else a
        if a > 0 and spec.shared_across_actions:
            U[:, a, :] = U[:, 0, :]
            continue
        g = streams.generator("unit", src)
        if spec.kind == "discrete":
            pts = spec.support_points(streams, src)
            U[:, a, :] = pts[g.integers(0, spec.M, size=N)]
        else:
            U[:, a, :] = g.random((N, d))

    V = np.empty((T, action_count, d))
    for a in range(action_count):
        g = streams.generator("time", a)
        if spec.time_dist == "uniform-cube":
            V[:, a, :] = g.random((T, d))
        elif spec.time_dist == "symmetric-cube":
            V[:, a, :] = 2.0 * g.random((T, d)) - 1.0
        else:
            z = g.standard_normal((T, d))
            V[:, a, :] = z / np.linalg.norm(z, axis=1, keepdims=True)

    latent = LatentState(U, V, mean_fn)
    latent.check_bounds(*latent_bounds(spec, latent))
    return latent


def latent_bounds(spec: LatentSpec, latent: Optional[LatentState] = None):
    """``(c_u, c_v)``: configured values, else the tightest distribution bound."""
    if spec.c_u is not None:
        c_u = float(spec.c_u)
    elif spec.kind == "continuous":
        c_u = float(np.sqrt(spec.d))
    elif isinstance(spec.support, str) and spec.support == "ring":
        c_u = float(spec.radius)
    elif isinstance(spec.support, str):
        c_u = float(np.sqrt(spec.d))
    else:
        c_u = float(np.linalg.norm(np.asarray(spec.support, float), axis=1).max())
    c_v = float(spec.c_v) if spec.c_v is not None else _time_norm_bound(spec.time_dist, spec.d)
    return c_u, c_v


_DEFAULT_BOUND = {"truncated-normal": 3.0, "uniform": np.sqrt(3.0), "rademacher-scaled": 1.0}


def _truncated_normal_scale(sigma: float, c: float) -> float:
    """Scale ``s`` of N(0, s^2) truncated to [-c, c] whose variance equals sigma^2."""

    def var(s):
        z = c / s
        pdf = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
        return s * s * (1.0 - 2.0 * z * pdf / (2.0 * ndtr(z) - 1.0))

    hi = 1.0
    while var(hi * sigma) < sigma**2:
        hi *= 2.0
        if hi > 1e8:
            raise ConfigError("could not match the truncated-normal variance")
    return brentq(lambda s: var(s) - sigma**2, 1e-3 * sigma, hi * sigma, xtol=1e-14 * sigma, rtol=1e-14)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 1.0
    c_eps: Optional[float] = None
    distribution: str = "truncated-normal"

    def __post_init__(self):
        if self.distribution not in _DEFAULT_BOUND:
            raise ConfigError(
                f"unknown noise distribution {self.distribution!r}; known: {sorted(_DEFAULT_BOUND)}"
            )
        if self.sigma < 0:
            raise ConfigError("noise sigma must be >= 0")
        c = self.bound
        s = self.sigma
        if s == 0:
            return
        if self.distribution == "truncated-normal" and not s * s < c * c / 3.0:
            raise ConfigError("truncated-normal noise needs sigma^2 < c_eps^2 / 3")
        if self.distribution == "uniform" and c < np.sqrt(3.0) * s * (1 - 1e-12):
            raise ConfigError("uniform noise needs c_eps >= sqrt(3) * sigma")
        if self.distribution == "rademacher-scaled" and c < s * (1 - 1e-12):
            raise ConfigError("rademacher noise needs c_eps >= sigma")

    @property
    def bound(self) -> float:
        if self.c_eps is not None:
            return float(self.c_eps)
        return float(_DEFAULT_BOUND[self.distribution] * self.sigma)


def sample_noise(spec: NoiseSpec, shape, gen: np.random.Generator) -> np.ndarray:
    s = spec.sigma
    if s == 0:
        return np.zeros(shape)
    if spec.distribution == "uniform":
        h = np.sqrt(3.0) * s
        return gen.uniform(-h, h, size=shape)
    if spec.distribution == "rademacher-scaled":
        return s * (2.0 * gen.integers(0, 2, size=shape) - 1.0)
    c = spec.bound
    scale = _truncated_normal_scale(s, c)
    lo = ndtr(-c / scale)
    u = gen.random(shape)
    x = scale * ndtri(lo + u * (1.0 - 2.0 * lo))
    return np.clip(x, -c, c)


POLICY_KINDS = ("constant", "epsilon-greedy-unit", "epsilon-greedy-pooled", "thompson-pooled")


@dataclass(frozen=True)
class PolicySpec:
    """Treatment policy.

    constant: ``probs`` (length |A|) or ``p`` on ``p_action`` with the rest split evenly.
    epsilon-greedy-*: ``eps_t = max(floor, t**-beta)`` with 1-based ``t``.
    thompson-pooled: Gaussian prior ``(prior_mean, prior_var)`` and known ``obs_var``;
    ``floor`` mixes in ``floor / |A|`` uniform exploration.
    """

    kind: str = "constant"
    p: float = 0.5
    p_action: int = 0
    probs: Optional[Sequence[float]] = None
    beta: float = 0.25
    floor: float = 0.0
    prior_mean: float = 0.0
    prior_var: float = 1.0
    obs_var: float = 1.0
    mc_draws: int = 1024

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}; known: {POLICY_KINDS}")
        if not 0.0 <= self.floor <= 1.0:
            raise ConfigError("policy floor must lie in [0, 1]")
        if self.beta < 0:
            raise ConfigError("policy beta must be >= 0")
        if self.kind == "constant" and self.probs is None and not 0.0 <= self.p <= 1.0:
            raise ConfigError("constant policy p must lie in [0, 1]")
        if self.prior_var <= 0 or self.obs_var <= 0:
            raise ConfigError("thompson variances must be positive")

    def constant_probs(self, A: int) -> np.ndarray:
        if self.probs is not None:
            pr = np.asarray(self.probs, float)
            if pr.shape != (A,) or pr.min() < 0 or abs(pr.sum() - 1) > 1e-12:
                raise ConfigError(f"constant probs must be a length-{A} probability vector")
            return pr
        if A == 1:
            return np.ones(1)
        if not 0 <= self.p_action < A:
            raise ConfigError("p_action outside the action set")
        pr = np.full(A, (1.0 - self.p) / (A - 1))
        pr[self.p_action] = self.p
        return pr

    def epsilon(self, t: int) -> float:
        """Exploration rate at 0-based time index ``t``."""
        return max(self.floor, float(t + 1) ** (-self.beta))


class _PolicyState:
    """Running per-arm statistics; updated one time step at a time."""

    def __init__(self, spec: PolicySpec, N: int, A: int):
        self.spec, self.N, self.A = spec, N, A
        pooled = spec.kind != "epsilon-greedy-unit"
        shape = (A,) if pooled else (N, A)
        self.sums = np.zeros(shape)
        self.counts = np.zeros(shape)

    def update(self, a_col: np.ndarray, y_col: np.ndarray) -> None:
        if self.spec.kind == "constant":
            return
        if self.spec.kind == "epsilon-greedy-unit":
            idx = np.arange(self.N)
            self.sums[idx, a_col] += y_col
            self.counts[idx, a_col] += 1
            return
        for a in range(self.A):
            m = a_col == a
            self.sums[a] += y_col[m].sum()
            self.counts[a] += m.sum()

    def probs(self, t: int, streams: Optional[Streams]) -> np.ndarray:
        spec, N, A = self.spec, self.N, self.A
        if spec.kind == "constant":
            return np.tile(spec.constant_probs(A), (N, 1))
        if t == 0:
            return np.full((N, A), 1.0 / A)
        if spec.kind.startswith("epsilon-greedy"):
            eps = spec.epsilon(t)
            counts = np.atleast_2d(self.counts)
            sums = np.atleast_2d(self.sums)
            unseen = (counts == 0).any(axis=1)
            means = np.where(counts > 0, sums / np.maximum(counts, 1), -np.inf)
            greedy = np.argmax(means, axis=1)
            P = np.full((counts.shape[0], A), eps / A)
            P[np.arange(counts.shape[0]), greedy] = 1.0 - eps + eps / A
            P[unseen] = 1.0 / A
            return np.broadcast_to(P, (N, A)).copy() if P.shape[0] == 1 else P
        # thompson-pooled
        prec = 1.0 / spec.prior_var + self.counts / spec.obs_var
        post_var = 1.0 / prec
        post_mean = post_var * (spec.prior_mean / spec.prior_var + self.sums / spec.obs_var)
        if A == 1:
            pr = np.ones(1)
        elif A == 2:
            p1 = float(ndtr((post_mean[1] - post_mean[0]) / np.sqrt(post_var[0] + post_var[1])))
            pr = np.array([1.0 - p1, p1])
        else:
            if streams is None:
                raise ConfigError("thompson with more than two arms needs an RNG stream")
            g = streams.generator("policy", t)
            draws = post_mean + np.sqrt(post_var) * g.standard_normal((spec.mc_draws, A))
            pr = np.bincount(np.argmax(draws, axis=1), minlength=A) / spec.mc_draws
        if spec.floor > 0:
            pr = (1.0 - spec.floor) * pr + spec.floor / A
        pr = pr / pr.sum()
        return np.tile(pr, (N, 1))


def policy_step(spec: PolicySpec, treatments: np.ndarray, outcomes: np.ndarray, t: int,
                action_count: int, streams: Optional[Streams] = None) -> np.ndarray:
    """Assignment probabilities ``[N, |A|]`` at 0-based time ``t``.

    Reads only columns ``< t`` of the history, replaying the same per-step
    updates the simulator applies, so the result matches the recorded
    probabilities bit for bit.
    """
    N = treatments.shape[0]
    state = _PolicyState(spec, N, action_count)
    for s in range(t):
        state.update(treatments[:, s], outcomes[:, s])
    return state.probs(t, streams)


def _draw_treatments(P: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(P[:, :-1], axis=1)
    return (u[:, None] >= cum).sum(axis=1)


def run_experiment(latent: LatentState, noise: NoiseSpec, policy: PolicySpec,
                   streams: Streams) -> ExperimentLog:
    theta = build_mean_tensor(latent).theta
    N, T, A = theta.shape
    eps = sample_noise(noise, (N, T), streams.generator("noise"))
    unif = streams.generator("treat").random((N, T))
    treat = np.zeros((N, T), dtype=np.int64)
    Y = np.zeros((N, T))
    probs = np.zeros((N, T, A))
    state = _PolicyState(policy, N, A)
    rows = np.arange(N)
    for t in range(T):
        P = state.probs(t, streams)
        probs[:, t, :] = P
        a_col = _draw_treatments(P, unif[:, t])
        treat[:, t] = a_col
        Y[:, t] = theta[rows, t, a_col] + eps[:, t]
        state.update(a_col, Y[:, t])
    return ExperimentLog(treat, Y, probs, noise_bound=noise.bound, noise_sd=noise.sigma)
