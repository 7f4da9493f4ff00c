import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import expon, gamma, norm

from bode.gp import Dataset, HyperSample, KernelParams, log_marginal_likelihood
from bode.hyper import (DegenerateSamplingError, McmcSettings, PriorSpec, log_posterior, log_prior,
                        sample_posterior, stretch_sample)


def _theta(s2, ell):
    return HyperSample(KernelParams(s2, ell))


@given(st.floats(-5, 0), st.integers(1, 3))
def test_log_prior_outside_support(bad, d):
    ell = np.ones(d)
    ell[0] = bad
    assert log_prior(_theta(1.0, ell), PriorSpec()) == -np.inf


def test_log_prior_example():
    assert log_prior(_theta(1.0, [1.0]), PriorSpec()) == pytest.approx(-2.0, abs=1e-14)


@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0, 4.0])
def test_log_prior_matches_scipy(rate):
    ell = np.array([0.3, 1.7])
    prior = PriorSpec(lengthscale_rate=rate, s2_shape=2.0, s2_rate=1.0)
    ref = expon(scale=1 / rate).logpdf(ell).sum() + gamma(2.0, scale=1.0).logpdf(0.8)
    assert log_prior(_theta(0.8, ell), prior) == pytest.approx(ref, abs=1e-12)


def test_log_posterior_examples():
    ds = Dataset([[0.3]], [0.7])
    assert log_posterior(_theta(1.0, [-1.0]), ds, PriorSpec()) == -np.inf
    th = _theta(1.5, [0.4])
    ref = log_prior(th, PriorSpec()) + norm(0, math.sqrt(1.5 + 1e-6)).logpdf(0.7)
    assert log_posterior(th, ds, PriorSpec()) == pytest.approx(ref, abs=1e-12)


def test_flat_prior_ranking_follows_likelihood():
    rng = np.random.default_rng(0)
    ds = Dataset(rng.random((6, 1)), rng.standard_normal(6))
    flat = PriorSpec(1e-9, 1.0, 1e-9)
    a, b = _theta(1.0, [0.2]), _theta(1.0, [0.9])
    by_post = log_posterior(a, ds, flat) > log_posterior(b, ds, flat)
    by_lik = log_marginal_likelihood(ds, a) > log_marginal_likelihood(ds, b)
    assert by_post == by_lik


def test_stretch_recovers_gaussian_moments():
    rng = np.random.default_rng(1)
    p0 = rng.normal(size=(32, 2))
    chain, _, acc = stretch_sample(lambda x: -0.5 * float(x @ x), p0, 2000, rng)
    s = chain[500:].reshape(-1, 2)
    assert np.all(np.abs(s.mean(axis=0)) < 0.05)
    assert np.all(np.abs(s.var(axis=0) - 1.0) < 0.1)
    assert 0.1 < acc < 0.9


@pytest.fixture(scope="module")
def dataset():
    rng = np.random.default_rng(5)
    X = rng.random((8, 1))
    return Dataset.from_raw(X, np.sin(6 * X[:, 0]))


def test_sampler_deterministic(dataset):
    s = McmcSettings.default(1, warm=True, seed=3, n_steps=120)
    a = sample_posterior(dataset, PriorSpec(), s)
    b = sample_posterior(dataset, PriorSpec(), s)
    assert np.array_equal(a.log_samples, b.log_samples)
    assert np.array_equal(a.last_walker_state, b.last_walker_state)


def test_warm_start_short_burn_in(dataset):
    cold = sample_posterior(dataset, PriorSpec(), McmcSettings.default(1, seed=0))
    warm = sample_posterior(dataset, PriorSpec(), McmcSettings.default(1, warm=True, seed=1),
                            warm_start=cold.last_walker_state)
    assert 0.1 <= warm.acceptance_rate <= 0.9
    # warm and cold posteriors agree on the median lengthscale
    med = lambda e: np.median(e.log_samples[:, 1])
    assert abs(med(warm) - med(cold)) < 0.3


def test_default_settings_sample_count():
    for d in (1, 3, 5):
        s = McmcSettings.default(d)
        n_kept = len(range(s.burn_in, s.n_steps, s.thin)) * s.n_walkers
        assert s.n_walkers >= 2 * (d + 1) and s.n_walkers % 2 == 0
        assert 90 <= n_kept <= 130


@pytest.mark.parametrize("kwargs", [dict(n_walkers=3), dict(n_walkers=4, burn_in=600),
                                    dict(n_walkers=4, thin=0), dict(n_walkers=4, stretch_a=1.0)])
def test_settings_validation(kwargs):
    with pytest.raises(ValueError):
        McmcSettings(**kwargs)


def test_bad_warm_start_shape(dataset):
    with pytest.raises(ValueError):
        sample_posterior(dataset, PriorSpec(), McmcSettings.default(1), warm_start=np.zeros((3, 2)))


def test_too_few_walkers(dataset):
    with pytest.raises(ValueError):
        sample_posterior(dataset, PriorSpec(), McmcSettings(2, 10, 5))


def test_stuck_walkers_raise(dataset):
    # walkers far outside the admissible region never move
    p0 = np.full((6, 2), 60.0) + np.arange(12).reshape(6, 2)
    with pytest.raises(DegenerateSamplingError) as exc:
        sample_posterior(dataset, PriorSpec(), McmcSettings(6, 20, 10), warm_start=p0)
    assert exc.value.acceptance_rate < 0.01
