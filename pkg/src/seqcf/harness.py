"""Seeded Monte Carlo driver: simulate, calibrate, estimate and score each replication."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .calibrate import tune_eta
from .config import RunConfig
from .estimator import EstimatorSettings, estimate_all, pairwise_distance
from .inference import population_estimate, prediction_halfwidths, subsample_ci
from .model import ExperimentLog, build_mean_tensor, realized_pmin
from .rng import Streams
from .simulate import latent_bounds, run_experiment, sample_latent
from .theory import TheoryParams, eta_schedule

__all__ = ["ReplicationRecord", "run_replication", "run_montecarlo", "summarize",
           "METRIC_COLUMNS", "WALL_COLUMNS", "choose_eta"]


@dataclass(frozen=True)
class ReplicationRecord:
    rep: int
    seed: int
    N: int
    T: int
    beta: float
    policy: str
    eta: float
    sigma_hat_sq: float
    mse: float
    median_se: float
    pi_coverage: float
    pi_width: float
    ate_hat: float
    ate_ci_cover: float
    pmin_T: float
    wall_ms: float
    error: str = ""


METRIC_COLUMNS = ("eta", "sigma_hat_sq", "mse", "median_se", "pi_coverage", "pi_width",
                  "ate_hat", "ate_ci_cover", "pmin_T")
WALL_COLUMNS = ("wall_ms",)
NAN = float("nan")


def choose_eta(cfg: RunConfig, log: ExperimentLog) -> Tuple[float, float]:
    """Threshold and noise-variance estimate per the configured source."""
    est = cfg.estimator
    a = est.action
    tr = tune_eta(log, a, est.grid_k) if log.n_times >= 2 else None
    sigma_hat_sq = tr.sigma_hat_sq if tr is not None else NAN
    if est.eta_source == "fixed":
        return float(est.eta), sigma_hat_sq
    if est.eta_source == "tuned":
        if tr is None:
            raise ValueError("tuning needs T >= 2")
        return tr.eta_tuned, sigma_hat_sq
    # Schedule: true noise variance when the log carries it, else the estimate.
    sig2 = log.noise_sd ** 2 if math.isfinite(log.noise_sd) else sigma_hat_sq
    c_u, c_v = latent_bounds(cfg.experiment.latent.spec())
    c_eps = log.noise_bound if math.isfinite(log.noise_bound) else 0.0
    pmin = realized_pmin(log, a, log.n_times - 1)
    params = TheoryParams(c_u, c_v, c_eps, lambda_a=1.0, sigma_sq=sig2, delta=0.5,
                          pmin_seq=(pmin,))
    beta = cfg.experiment.policy.beta if cfg.experiment.policy.kind != "constant" else 0.0
    schedule = est.schedule
    if schedule == "continuous-ate":
        beta = min(beta, 0.25)
    return eta_schedule(schedule, params, log.n_units, log.n_times, min(beta, 0.5)), sigma_hat_sq


def _ate_target(cfg: RunConfig, streams: Streams, theta: np.ndarray, a: int) -> float:
    """Average of ``theta`` over the panel, or its superpopulation mean ``E[u]^T E[v]``."""
    if cfg.estimator.ate_target == "sample" or cfg.experiment.mean_fn != "bilinear":
        return float(theta[:, :, a].mean())
    spec = cfg.experiment.latent.spec()
    if spec.kind == "discrete":
        src = 0 if spec.shared_across_actions else a
        eu = spec.support_points(streams, src).mean(axis=0)
    else:
        eu = np.full(spec.d, 0.5)
    ev = np.full(spec.d, 0.5) if spec.time_dist == "uniform-cube" else np.zeros(spec.d)
    return float(eu @ ev)


def run_replication(cfg: RunConfig, rep: int, seed: Optional[int] = None) -> ReplicationRecord:
    ex, est = cfg.experiment, cfg.estimator
    seed = cfg.replication.seed if seed is None else seed
    beta = ex.policy.beta if ex.policy.kind.startswith("epsilon") else 0.0
    base = dict(rep=rep, seed=seed, N=ex.N, T=ex.T, beta=beta, policy=ex.policy.kind)
    t0 = time.perf_counter()
    try:
        streams = Streams(seed, rep)
        latent = sample_latent(ex.latent.spec(), ex.N, ex.T, ex.actions, streams, ex.mean_fn)
        log = run_experiment(latent, ex.noise.spec(), ex.policy.spec(), streams)
        theta = build_mean_tensor(latent).theta
        a = est.action
        eta, sigma_hat_sq = choose_eta(cfg, log)
        settings = EstimatorSettings(eta=eta, action=a, cap=est.cap, alpha=est.alpha,
                                     subsample_k=est.K, cap_seed=seed * 1_000_003 + rep)
        dist = pairwise_distance(log, a)
        tab = estimate_all(log, dist, settings)
        truth = theta[:, :, a]
        ok = tab.has_neighbors
        se = (tab.value - truth) ** 2
        mse = float(se[ok].mean()) if ok.any() else NAN
        median_se = float(np.median(se[ok])) if ok.any() else NAN

        sig_hat = math.sqrt(sigma_hat_sq) if math.isfinite(sigma_hat_sq) else NAN
        cand = np.flatnonzero(ok.ravel())
        if cand.size and math.isfinite(sig_hat):
            g = streams.generator("pi-entries")
            pick = cand if cand.size <= est.pi_samples else np.sort(
                g.choice(cand, size=est.pi_samples, replace=False))
            hw = prediction_halfwidths(tab, sig_hat, est.alpha).ravel()[pick]
            centre = tab.value.ravel()[pick]
            target = truth.ravel()[pick]
            pi_cov = float(np.mean(np.abs(centre - target) <= hw))
            pi_width = float(np.mean(2.0 * hw))
        else:
            pi_cov = pi_width = NAN

        ate_hat = population_estimate(log, tab, a)
        K = est.K if est.K is not None else int(math.isqrt(ex.N * ex.T))
        K = min(max(K, 2), ex.N * ex.T)
        ci = subsample_ci(tab, K, est.alpha, streams)
        cover = float(ci.covers(_ate_target(cfg, streams, theta, a)))
        pmin_T = realized_pmin(log, a, ex.T - 1)
        wall = (time.perf_counter() - t0) * 1000.0
        return ReplicationRecord(**base, eta=float(eta), sigma_hat_sq=float(sigma_hat_sq),
                                 mse=mse, median_se=median_se, pi_coverage=pi_cov,
                                 pi_width=pi_width, ate_hat=ate_hat, ate_ci_cover=cover,
                                 pmin_T=pmin_T, wall_ms=wall, error="")
    except Exception as e:  # isolate the failure to this replication
        wall = (time.perf_counter() - t0) * 1000.0
        nan = {c: NAN for c in METRIC_COLUMNS}
        return ReplicationRecord(**base, **nan, wall_ms=wall,
                                 error=f"{type(e).__name__}: {e}")


def summarize(records: List[ReplicationRecord]) -> Dict[str, object]:
    """Mean and sample sd (ddof=1) of each metric over replications without errors."""
    good = [r for r in records if not r.error]
    out: Dict[str, object] = {"reps": len(records), "failed": len(records) - len(good)}
    for c in METRIC_COLUMNS + WALL_COLUMNS:
        vals = np.array([getattr(r, c) for r in good], dtype=float)
        vals = vals[~np.isnan(vals)]
        mean = float(vals.mean()) if vals.size else NAN
        sd = float(vals.std(ddof=1)) if vals.size > 1 else NAN
        out[c] = {"mean": mean, "sd": sd, "n": int(vals.size)}
    return out


def run_montecarlo(cfg: RunConfig, threads: Optional[int] = None):
    """All replications of ``cfg``; rows come back in rep order for any thread count."""
    n = cfg.replication.reps
    threads = cfg.replication.threads if threads is None else threads
    if threads <= 1:
        records = [run_replication(cfg, r) for r in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda r: run_replication(cfg, r), range(n)))
    return records, summarize(records)
