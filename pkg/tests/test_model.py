import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqcf import ConfigError, ExperimentLog, LatentState, build_mean_tensor, realized_pmin
from seqcf.model import ActionSet, MEAN_FUNCTIONS, register_mean_fn


def _latent(u, v, fn="bilinear"):
    return LatentState(np.asarray(u, float)[:, None, :], np.asarray(v, float)[:, None, :], fn)


def test_bilinear_inner_product():
    th = build_mean_tensor(_latent([[1, 2]], [[3, 4]])).theta
    assert th[0, 0, 0] == 11.0


def test_zero_time_factor_gives_zero():
    th = build_mean_tensor(_latent([[1, 2], [-3, 5]], [[0, 0], [1, 1]])).theta
    assert np.all(th[:, 0, 0] == 0.0)


def test_norm_distance():
    th = build_mean_tensor(_latent([[0, 0]], [[3, 4]], "norm-distance")).theta
    assert th[0, 0, 0] == pytest.approx(5.0, abs=1e-15)


def test_sigmoid_registered():
    th = build_mean_tensor(_latent([[0, 0]], [[3, 4]], "sigmoid-inner")).theta
    assert th[0, 0, 0] == 0.5


def test_unknown_mean_fn():
    with pytest.raises(ConfigError):
        build_mean_tensor(_latent([[1]], [[1]], "cubic"))


def test_register_mean_fn():
    @register_mean_fn("test-sum")
    def _f(U, V):
        return U.sum(1)[:, None] + V.sum(1)[None, :]

    try:
        th = build_mean_tensor(_latent([[1, 2]], [[3, 4]], "test-sum")).theta
        assert th[0, 0, 0] == 10.0
    finally:
        MEAN_FUNCTIONS.pop("test-sum")


def test_shape_mismatch():
    with pytest.raises(ConfigError):
        LatentState(np.zeros((2, 1, 2)), np.zeros((3, 1, 3)))


def test_bounds_check():
    lat = _latent([[3, 4]], [[1, 0]])
    lat.check_bounds(5.0, 1.0)
    with pytest.raises(ConfigError):
        lat.check_bounds(4.9, 1.0)


def test_arrays_read_only():
    lat = _latent([[1, 2]], [[3, 4]])
    with pytest.raises(ValueError):
        lat.unit_factors[0, 0, 0] = 2.0
    th = build_mean_tensor(lat)
    with pytest.raises(ValueError):
        th.theta[0, 0, 0] = 1.0


def test_action_set():
    assert list(ActionSet(3)) == [0, 1, 2]
    with pytest.raises(ConfigError):
        ActionSet(0)


def test_log_validation():
    P = np.full((2, 3, 2), 0.5)
    ExperimentLog(np.zeros((2, 3), int), np.zeros((2, 3)), P)
    with pytest.raises(ConfigError):
        ExperimentLog(np.zeros((2, 3), int), np.zeros((2, 3)), P * 1.01)
    with pytest.raises(ConfigError):
        ExperimentLog(np.full((2, 3), 2), np.zeros((2, 3)), P)
    with pytest.raises(ConfigError):
        ExperimentLog(np.zeros((2, 3), int), np.zeros((2, 4)), P)


def _log_from_probs(P):
    N, T, A = P.shape
    return ExperimentLog(np.zeros((N, T), int), np.zeros((N, T)), P)


def test_pmin_constant_policy():
    P = np.zeros((4, 10, 2))
    P[..., 0] = 0.3
    P[..., 1] = 0.7
    log = _log_from_probs(P)
    assert all(realized_pmin(log, 0, t) == 0.3 for t in range(10))


def test_pmin_epsilon_decay():
    # eps_t = t^{-1/4}, greedy never a, |A| = 2; index 15 is the 16th step.
    T = 20
    eps = np.arange(1, T + 1) ** -0.25
    P = np.zeros((3, T, 2))
    P[:, :, 0] = eps / 2
    P[:, :, 1] = 1 - eps / 2
    log = _log_from_probs(P)
    assert realized_pmin(log, 0, 15) == pytest.approx(0.25, abs=1e-15)


def test_pmin_single_step():
    P = np.zeros((3, 1, 2))
    P[:, 0, 0] = [0.5, 0.2, 0.9]
    P[:, 0, 1] = 1 - P[:, 0, 0]
    assert realized_pmin(_log_from_probs(P), 0, 0) == 0.2


def test_pmin_range():
    log = _log_from_probs(np.full((2, 3, 2), 0.5))
    with pytest.raises(ValueError):
        realized_pmin(log, 0, 3)
    with pytest.raises(ValueError):
        realized_pmin(log, 0, -1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_pmin_non_increasing(N, T, seed):
    g = np.random.default_rng(seed)
    p = g.random((N, T))
    P = np.stack([p, 1 - p], axis=2)
    P[..., 1] = 1 - P[..., 0]
    log = _log_from_probs(P)
    vals = [realized_pmin(log, 0, t) for t in range(T)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(1, 4),
       st.integers(0, 2**32 - 1), st.sampled_from(["bilinear", "norm-distance", "sigmoid-inner"]))
def test_permutation_equivariance(N, T, A, d, seed, fn):
    g = np.random.default_rng(seed)
    U, V = g.normal(size=(N, A, d)), g.normal(size=(T, A, d))
    perm = g.permutation(N)
    th = build_mean_tensor(LatentState(U, V, fn)).theta
    thp = build_mean_tensor(LatentState(U[perm], V, fn)).theta
    assert np.array_equal(thp, th[perm])
    assert np.array_equal(th, build_mean_tensor(LatentState(U, V, fn)).theta)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_rotation_invariance(N, T, d, seed):
    g = np.random.default_rng(seed)
    U, V = g.normal(size=(N, 2, d)), g.normal(size=(T, 2, d))
    Q, _ = np.linalg.qr(g.normal(size=(d, d)))
    th = build_mean_tensor(LatentState(U, V)).theta
    thr = build_mean_tensor(LatentState(U @ Q, V @ Q)).theta
    assert np.max(np.abs(th - thr)) <= 1e-10
