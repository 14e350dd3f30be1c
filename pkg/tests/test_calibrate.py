import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqcf import (CalibrationError, DegenerateEstimateWarning, ExperimentLog, estimate_sigma,
                   eta_grid_from_percentiles, iterate_sigma_eta, pairwise_distance, split_halves,
                   tune_eta)
from seqcf.calibrate import split_losses
from seqcf.estimator import DistanceMatrix

from conftest import random_log


def _full_log(Y, treat=None):
    Y = np.asarray(Y, float)
    treat = np.zeros(Y.shape, int) if treat is None else np.asarray(treat)
    return ExperimentLog(treat, Y, np.full(Y.shape + (2,), 0.5))


@pytest.mark.parametrize("T,first,second", [(4, [0, 1], [2, 3]), (5, [0, 1], [2, 3, 4]),
                                            (2, [0], [1])])
def test_split_halves(T, first, second):
    a, b = split_halves(T)
    assert list(a) == first and list(b) == second


def test_split_too_short():
    with pytest.raises(ValueError):
        split_halves(1)


def _dm(vals, N):
    rho = np.full((N, N), np.inf)
    np.fill_diagonal(rho, 0.0)
    iu = list(zip(*np.triu_indices(N, 1)))
    for (i, j), v in zip(iu, vals):
        rho[i, j] = rho[j, i] = v
    return DistanceMatrix(rho, np.isfinite(rho).astype(int), np.arange(1))


def test_grid_constant():
    assert eta_grid_from_percentiles(_dm([2.5] * 6, 4), 20) == [2.5]


def test_grid_median():
    assert eta_grid_from_percentiles(_dm([1, 2, 3, 4, 5], 4), 1) == [3.0]


def test_grid_linear_interpolation():
    assert eta_grid_from_percentiles(_dm([1, 2, 3, 4], 4), 3) == [1.75, 2.5, 3.25]


def test_grid_all_infinite():
    with pytest.raises(CalibrationError):
        eta_grid_from_percentiles(_dm([], 3), 5)


def test_grid_argument():
    with pytest.raises(ValueError):
        eta_grid_from_percentiles(_dm([1.0], 2), 0)


def _duplicates(T=8, groups=(0.0, 10.0, -7.0), per=3, seed=0):
    """Noiseless units in exact-duplicate groups with distinct time paths."""
    g = np.random.default_rng(seed)
    paths = [off + g.normal(size=T) for off in groups]
    return _full_log(np.array([p for p in paths for _ in range(per)]))


def test_tune_tie_takes_smallest():
    log = _duplicates()
    tr = tune_eta(log, 0, grid=[0.0, 1e-6])
    assert tr.losses[0] == tr.losses[1] == 0.0
    assert tr.eta_tuned == 0.0


def test_tune_noiseless_duplicates_zero_loss():
    log = _duplicates()
    tr = tune_eta(log, 0, k=20)
    assert tr.eta_tuned == tr.eta_grid[0]
    assert tr.losses[0] == 0.0 and tr.sigma_hat_sq == 0.0
    assert sorted(tr.losses) == tr.losses or min(tr.losses) == tr.losses[0]


def test_tune_singleton_grid():
    g = np.random.default_rng(3)
    log = random_log(g, 8, 10, 2)
    tr = tune_eta(log, 0, grid=[0.7])
    assert tr.eta_tuned == 0.7 and len(tr.losses) == 1


def test_tune_needs_arm_in_both_halves():
    treat = np.zeros((3, 4), int)
    treat[:, 2:] = 1
    with pytest.raises(CalibrationError):
        tune_eta(_full_log(np.zeros((3, 4)), treat), 0)


def test_sigma_noiseless_duplicates():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert estimate_sigma(_duplicates(), 0, 0.0) == 0.0


def test_sigma_single_unit_degenerate():
    log = _full_log(np.random.default_rng(0).normal(size=(1, 10)))
    with pytest.warns(DegenerateEstimateWarning):
        assert estimate_sigma(log, 0, 1.0) == 0.0


def test_sigma_empty_second_half():
    treat = np.zeros((3, 4), int)
    treat[:, 2:] = 1
    with pytest.raises(CalibrationError):
        estimate_sigma(_full_log(np.zeros((3, 4)), treat), 0, 1.0)


def test_sigma_monte_carlo_oracle():
    # 51 units with equal means: every residual is Y minus a mean of 50 others.
    n, T = 50, 4000
    g = np.random.default_rng(8)
    log = _full_log(g.normal(size=(n + 1, T)))
    s = estimate_sigma(log, 0, 1e9)
    assert abs(s - (1 + 1 / n)) <= 0.05 * (1 + 1 / n)


def test_information_barrier():
    g = np.random.default_rng(2)
    log = random_log(g, 10, 12, 2)
    t1, t2 = split_halves(12)
    Y = log.outcomes.copy()
    Y[:, t2] = 1e6 * g.normal(size=(10, t2.size))
    bad = ExperimentLog(log.treatments, Y, log.assign_probs)
    d0, d1 = pairwise_distance(log, 0, t1), pairwise_distance(bad, 0, t1)
    assert np.array_equal(d0.rho, d1.rho) and np.array_equal(d0.overlap, d1.overlap)
    assert tune_eta(log, 0).eta_grid == tune_eta(bad, 0).eta_grid


def test_losses_deterministic():
    g = np.random.default_rng(6)
    log = random_log(g, 12, 10, 2)
    a, b = tune_eta(log, 0), tune_eta(log, 0)
    assert a.losses == b.losses and a.eta_tuned == b.eta_tuned


def test_losses_match_estimator_definition():
    from seqcf import EstimatorSettings, estimate_all
    g = np.random.default_rng(10)
    log = random_log(g, 9, 10, 2)
    t1, t2 = split_halves(10)
    D = pairwise_distance(log, 0, t1)
    grid = eta_grid_from_percentiles(D, 5)
    losses = split_losses(log, 0, grid, D, t2)
    for eta, loss in zip(grid, losses):
        tab = estimate_all(log, D, EstimatorSettings(eta=eta))
        m = log.treatments[:, t2] == 0
        r = (log.outcomes[:, t2] - tab.value[:, t2])[m]
        assert loss == pytest.approx(float(np.sum(r * r)), rel=1e-12, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(2, 10), st.integers(0, 10**6), st.floats(0, 5))
def test_sigma_non_negative(N, T, seed, eta):
    g = np.random.default_rng(seed)
    log = random_log(g, N, T, 2)
    t1, t2 = split_halves(T)
    if not (log.treatments[:, t2] == 0).any():
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEstimateWarning)
        assert estimate_sigma(log, 0, eta) >= 0.0


def test_iterate_duplicates_converge_to_zero():
    res = iterate_sigma_eta(_duplicates(), 0, eta0=0.5)
    assert res.converged and res.sigma_hat_sq == 0.0 and res.eta == 0.0
    assert res.iterations <= 2


def test_iterate_fixed_point_stabilizes():
    # With every unit a neighbor at both eta0 and 2v, the second pass repeats v.
    g = np.random.default_rng(1)
    log = _full_log(0.01 * g.normal(size=(6, 20)))
    res = iterate_sigma_eta(log, 0, eta0=10.0)
    v = res.trace[0][1]
    if estimate_sigma(log, 0, 2 * v) == v:
        assert res.converged and res.iterations <= 2


def test_iterate_cap_one():
    g = np.random.default_rng(4)
    log = random_log(g, 10, 12, 2)
    res = iterate_sigma_eta(log, 0, eta0=123.0, max_iters=1)
    assert res.iterations == 1 and not res.converged
    assert res.eta == 2 * res.sigma_hat_sq


def test_iterate_arguments():
    log = _duplicates()
    with pytest.raises(ValueError):
        iterate_sigma_eta(log, 0, eta0=0.0)
