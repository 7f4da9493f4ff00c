import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bode.gp import (Dataset, HyperSample, KernelParams, SingularCovarianceError, condition,
                     kernel_eval, kernel_matrix, log_marginal_likelihood, lml_from_dists,
                     posterior_cross_cov, predict, sq_dists)


def _dense(X, Y, s2, ell, noise):
    p = KernelParams(s2, ell)
    K = kernel_matrix(X, p) + noise * np.eye(len(X))
    return p, K, np.linalg.inv(K)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=4), st.floats(0.1, 10))
def test_kernel_at_zero_distance_is_s2(x, s2):
    p = KernelParams(s2, np.ones(len(x)))
    assert kernel_eval(np.array(x), np.array(x), p) == pytest.approx(s2, rel=1e-15)


@pytest.mark.parametrize("x, x2, ell, expected", [
    ([0.0], [1.0], [1.0], math.exp(-0.5)),
    ([0.0, 0.0], [1.0, 1.0], [1.0, 1.0], math.exp(-1.0)),
])
def test_kernel_values(x, x2, ell, expected):
    assert kernel_eval(np.array(x), np.array(x2), KernelParams(1.0, ell)) == pytest.approx(expected, rel=1e-14)


def test_kernel_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_eval(np.zeros(2), np.zeros(2), KernelParams(1.0, [1.0]))


def test_kernel_matrix_examples():
    p = KernelParams(2.0, [0.3])
    assert np.array_equal(kernel_matrix(np.array([[0.4]]), p), [[2.0]])
    assert np.allclose(kernel_matrix(np.array([[0.4], [0.4]]), p), 2.0)
    K = kernel_matrix(np.array([[0.0], [1.0]]), KernelParams(1.0, [1.0]))
    e = math.exp(-0.5)
    assert np.allclose(K, [[1, e], [e, 1]], rtol=1e-14)
    X = np.random.default_rng(0).random((6, 3))
    K = kernel_matrix(X, p.__class__(1.3, [0.2, 0.5, 1.0]))
    assert np.array_equal(K, K.T) and np.all(np.diag(K) == 1.3)


def test_condition_one_point():
    st_ = condition(Dataset([[0.5]], [2.0]), HyperSample(KernelParams(1.0, [0.2]), 1e-6))
    assert st_.alpha[0] == pytest.approx(2.0 / (1 + 1e-6), rel=1e-14)


def test_condition_duplicates_use_jitter():
    X = np.array([[0.3], [0.3], [0.3]])
    st_ = condition(Dataset(X, [1.0, 1.0, 1.0]), HyperSample(KernelParams(1.0, [0.5]), 0.0))
    assert st_.jitter_used > 0




@pytest.mark.parametrize("seed", range(5))
def test_cholesky_reconstruction(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.random((5, 2)), rng.standard_normal(5)
    theta = HyperSample(KernelParams(1.7, [0.3, 0.6]), 1e-6)
    st_ = condition(Dataset(X, Y), theta)
    A = kernel_matrix(X, theta.kernel) + 1e-6 * np.eye(5)
    assert np.max(np.abs(st_.chol @ st_.chol.T - A)) < 1e-10 * 1.7


def test_predict_at_design_interpolates():
    rng = np.random.default_rng(3)
    X, Y = rng.random((6, 1)), rng.standard_normal(6)
    st_ = condition(Dataset(X, Y), HyperSample(KernelParams(1.0, [0.3]), 1e-6))
    m, v = predict(st_, X[2])
    assert abs(m - Y[2]) <= 1e-3
    assert v <= 2e-6


def test_predict_far_recovers_prior():
    st_ = condition(Dataset([[0.0]], [1.5]), HyperSample(KernelParams(2.0, [0.01]), 1e-6))
    m, v = predict(st_, np.array([1.0]))
    assert abs(m) < 1e-12 and v == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_predict_matches_dense_inverse(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.random((4, 1)), rng.standard_normal(4)
    p, K, Ki = _dense(X, Y, 1.2, [0.4], 1e-6)
    st_ = condition(Dataset(X, Y), HyperSample(p, 1e-6))
    xs = rng.random((7, 1))
    from bode.gp import cross_kernel
    k = cross_kernel(xs, X, p)
    m, v = predict(st_, xs)
    assert np.allclose(m, k @ Ki @ Y, atol=1e-10 * (1 + np.abs(m).max()))
    assert np.allclose(v, 1.2 - np.einsum("ij,jk,ik->i", k, Ki, k), atol=1e-10)
    a, b = rng.random(1), rng.random(1)
    ka, kb = cross_kernel(a, X, p)[0], cross_kernel(b, X, p)[0]
    oracle = kernel_eval(a, b, p) - ka @ Ki @ kb
    assert posterior_cross_cov(st_, a, b) == pytest.approx(oracle, abs=1e-10)
    assert posterior_cross_cov(st_, a, a) == predict(st_, a)[1]


def test_lml_examples():
    v = log_marginal_likelihood(Dataset([[0.2]], [0.0]), HyperSample(KernelParams(1.0, [1.0]), 1e-6))
    assert v == pytest.approx(-0.5 * math.log(2 * math.pi * (1 + 1e-6)), abs=1e-12)
    X, Y = np.array([[0.1], [0.5]]), np.array([0.3, -1.2])
    p, K, Ki = _dense(X, Y, 1.5, [0.4], 1e-3)
    direct = -0.5 * Y @ Ki @ Y - 0.5 * math.log(np.linalg.det(K)) - math.log(2 * math.pi)
    assert log_marginal_likelihood(Dataset(X, Y), HyperSample(p, 1e-3)) == pytest.approx(direct, abs=1e-10)


def test_lml_scaling_identity():
    rng = np.random.default_rng(1)
    X, Y = rng.random((5, 2)), rng.standard_normal(5)
    a = log_marginal_likelihood(Dataset(X, Y), HyperSample(KernelParams(1.0, [0.7, 0.9]), 0.0))
    b = log_marginal_likelihood(Dataset(X, 10 * Y), HyperSample(KernelParams(100.0, [0.7, 0.9]), 0.0))
    assert b - a == pytest.approx(-5 * math.log(10), abs=1e-9)


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    X, Y = rng.random((8, 2)), rng.standard_normal(8)
    D = sq_dists(X)
    z = np.log([1.3, 0.4, 0.8, 1e-2])

    def f(z):
        e = np.exp(z)
        return lml_from_dists(D, Y, e[0], e[1:3], e[3])

    _, g = lml_from_dists(D, Y, *(lambda e: (e[0], e[1:3], e[3]))(np.exp(z)), grad=True)
    h = 1e-6
    fd = [(f(z + h * np.eye(4)[i]) - f(z - h * np.eye(4)[i])) / (2 * h) for i in range(4)]
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-7)
    assert f(z) == pytest.approx(log_marginal_likelihood(
        Dataset(X, Y), HyperSample(KernelParams(1.3, [0.4, 0.8]), 1e-2)), abs=1e-12)


def test_dataset_from_raw_roundtrip():
    y = np.array([3.0, 5.0, 10.0])
    ds = Dataset.from_raw([[0.1], [0.2], [0.3]], y)
    assert abs(ds.Y.mean()) < 1e-15 and ds.Y.std() == pytest.approx(1.0)
    assert np.allclose(ds.y_raw, y)
    assert Dataset.from_raw([[0.1], [0.2]], [4.0, 4.0]).y_scale == 1.0


def test_condition_singular_raises():
    # a NaN-free but indefinite matrix survives no jitter level
    from bode.gp import _factorize
    with pytest.raises(SingularCovarianceError):
        _factorize(np.array([[1.0, 0.0], [0.0, -1.0]]), 1.0)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_kernel_bound(x, x2):
    p = KernelParams(1.7, [0.4, 0.9])
    k = kernel_eval(np.array(x), np.array(x2), p)
    assert 0 < k <= 1.7
    if x != x2 and max(abs(a - b) for a, b in zip(x, x2)) > 1e-4:
        assert k < 1.7


@pytest.mark.parametrize("seed", range(10))
def test_variance_sandwich_and_monotone_conditioning(seed):
    rng = np.random.default_rng(seed)
    d, n = int(rng.integers(1, 4)), int(rng.integers(1, 20))
    X, Y = rng.random((n, d)), rng.standard_normal(n)
    theta = HyperSample(KernelParams(rng.uniform(0.5, 2), rng.uniform(0.05, 2, d)), 1e-6)
    a = condition(Dataset(X, Y), theta)
    b = condition(Dataset(np.vstack([X, rng.random(d)]), np.append(Y, 0.3)), theta)
    xs = rng.random((200, d))
    va, vb = predict(a, xs)[1], predict(b, xs)[1]
    s2 = theta.kernel.s2
    assert np.all((va >= 0) & (va <= s2)) and np.all((vb >= 0) & (vb <= s2))
    assert np.all(vb <= va + 1e-9 * s2)


@pytest.mark.parametrize("seed", range(50))
def test_dense_inverse_agreement(seed):
    from bode.gp import cross_kernel
    rng = np.random.default_rng(1000 + seed)
    d, n = int(rng.integers(1, 6)), int(rng.integers(1, 31))
    X, Y = rng.random((n, d)), rng.standard_normal(n)
    p = KernelParams(rng.uniform(0.5, 2), rng.uniform(0.2, 2, d))
    st_ = condition(Dataset(X, Y), HyperSample(p, 1e-6))
    Ki = np.linalg.inv(kernel_matrix(X, p) + 1e-6 * np.eye(n))
    x, x2 = rng.random(d), rng.random(d)
    k, k2 = cross_kernel(x, X, p)[0], cross_kernel(x2, X, p)[0]
    m, v = predict(st_, x)
    assert m == pytest.approx(k @ Ki @ Y, rel=1e-9, abs=1e-9 * p.s2)
    assert v == pytest.approx(p.s2 - k @ Ki @ k, rel=1e-9, abs=1e-9 * p.s2)
    assert posterior_cross_cov(st_, x, x2) == pytest.approx(kernel_eval(x, x2, p) - k @ Ki @ k2,
                                                            rel=1e-9, abs=1e-9 * p.s2)
