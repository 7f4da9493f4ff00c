"""Fully Bayesian treatment of the kernel hyper-parameters.

The signal variance and lengthscales are sampled with an affine-invariant
ensemble sampler (stretch move) in log-parameter space. The noise variance
is held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .gp import (DEFAULT_NOISE_VAR, Dataset, HyperSample, KernelParams, SingularCovarianceError, condition,
                 lml_from_dists, sq_dists, state_log_likelihood)


class DegenerateSamplingError(RuntimeError):
    def __init__(self, message: str, acceptance_rate: float):
        super().__init__(f"{message} (acceptance rate {acceptance_rate:.4f})")
        self.acceptance_rate = acceptance_rate


@dataclass(frozen=True)
class PriorSpec:
    lengthscale_rate: float = 1.0
    s2_shape: float = 2.0
    s2_rate: float = 1.0

    def __post_init__(self):
        if min(self.lengthscale_rate, self.s2_shape, self.s2_rate) <= 0:
            raise ValueError("prior hyper-values must be positive")


@dataclass(frozen=True)
class McmcSettings:
    n_walkers: int
    n_steps: int = 500
    burn_in: int = 250
    thin: int = 1
    stretch_a: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n_walkers < 2 or self.n_walkers % 2:
            raise ValueError("n_walkers must be even and at least 2")
        if not self.n_steps > self.burn_in >= 0:
            raise ValueError("n_steps must exceed burn_in")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not self.stretch_a > 1:
            raise ValueError("stretch_a must exceed 1")

    @classmethod
    def default(cls, d: int, *, warm: bool = False, seed: int = 0,
                n_steps: int = 500, target_samples: int = 100) -> "McmcSettings":
        """Defaults for a ``d``-dimensional input space (``d + 1`` hyper-parameters)."""
        n_walkers = max(6, 2 * (d + 1))
        n_walkers += n_walkers % 2
        burn_in = 50 if warm else 250
        thin = max(1, ((n_steps - burn_in) * n_walkers) // target_samples)
        return cls(n_walkers, n_steps, burn_in, thin, 2.0, seed)


@dataclass(frozen=True)
class ThetaEnsemble:
    samples: list
    last_walker_state: np.ndarray
    acceptance_rate: float
    log_samples: np.ndarray

    def __len__(self):
        return len(self.samples)


def _to_log(theta: HyperSample) -> np.ndarray:
    return np.concatenate([[math.log(theta.kernel.s2)], np.log(theta.kernel.lengthscales)])


def _from_log(phi: np.ndarray, noise_var: float) -> HyperSample:
    e = np.exp(phi)
    return HyperSample(KernelParams(e[0], e[1:]), noise_var)


def log_prior(theta: HyperSample, prior: PriorSpec) -> float:
    """Exponential prior on each lengthscale, Gamma(shape, rate) on the signal variance."""
    s2 = theta.kernel.s2
    ell = theta.kernel.lengthscales
    if not (s2 > 0 and np.all(ell > 0)):
        return -np.inf
    lp = ell.size * math.log(prior.lengthscale_rate) - prior.lengthscale_rate * float(np.sum(ell))
    lp += (prior.s2_shape * math.log(prior.s2_rate) - gammaln(prior.s2_shape)
           + (prior.s2_shape - 1.0) * math.log(s2) - prior.s2_rate * s2)
    return float(lp)


def log_posterior(theta: HyperSample, dataset: Dataset, prior: PriorSpec) -> float:
    lp = log_prior(theta, prior)
    if not np.isfinite(lp):
        return -np.inf
    try:
        ll = state_log_likelihood(condition(dataset, theta))
    except (SingularCovarianceError, ValueError):
        return -np.inf
    if not np.isfinite(ll):
        return -np.inf
    return lp + ll


class _LogTarget:
    """Log density of the log-parameters: posterior times the exp() Jacobian."""

    def __init__(self, dataset: Dataset, prior: PriorSpec, noise_var: float):
        self.D = sq_dists(dataset.X)
        self.Y = dataset.Y
        self.prior = prior
        self.noise_var = noise_var
        self.d = dataset.dim

    def __call__(self, phi: np.ndarray) -> float:
        if not np.all(np.isfinite(phi)) or np.any(np.abs(phi) > 50):
            return -np.inf
        e = np.exp(phi)
        s2, ell = e[0], e[1:]
        p = self.prior
        lp = (self.d * math.log(p.lengthscale_rate) - p.lengthscale_rate * float(np.sum(ell))
              + p.s2_shape * math.log(p.s2_rate) - gammaln(p.s2_shape)
              + (p.s2_shape - 1.0) * phi[0] - p.s2_rate * s2)
        try:
            ll = lml_from_dists(self.D, self.Y, s2, ell, self.noise_var)
        except SingularCovarianceError:
            return -np.inf
        if not np.isfinite(ll):
            return -np.inf
        return float(lp + ll + np.sum(phi))


def stretch_sample(log_prob: Callable[[np.ndarray], float], p0: np.ndarray, n_steps: int,
                   rng: np.random.Generator, a: float = 2.0):
    """Run the affine-invariant stretch move.

    Parameters
    ----------
    log_prob : callable
        Unnormalized log density of a single walker position.
    p0 : ndarray, shape (n_walkers, D)
        Initial walker positions.
    n_steps : int
    rng : numpy Generator
    a : float
        Stretch scale; proposals use ``z ~ g(z) ∝ 1/sqrt(z)`` on ``[1/a, a]``.

    Returns
    -------
    chain : ndarray, shape (n_steps, n_walkers, D)
    log_probs : ndarray, shape (n_steps, n_walkers)
    acceptance_rate : float
    """
    walkers = np.array(p0, dtype=float, copy=True)
    n_walkers, D = walkers.shape
    half = n_walkers // 2
    lp = np.array([log_prob(w) for w in walkers])
    chain = np.empty((n_steps, n_walkers, D))
    lps = np.empty((n_steps, n_walkers))
    accepted = 0
    halves = (np.arange(half), np.arange(half, n_walkers))
    for step in range(n_steps):
        for k in (0, 1):
            active, other = halves[k], halves[1 - k]
            m = active.size
            z = ((a - 1.0) * rng.random(m) + 1.0) ** 2 / a
            partners = walkers[other[rng.integers(0, other.size, size=m)]]
            proposals = partners + z[:, None] * (walkers[active] - partners)
            log_u = np.log(rng.random(m))
            for i in range(m):
                w = active[i]
                new_lp = log_prob(proposals[i])
                if new_lp == -np.inf:
                    continue
                log_ratio = (D - 1) * math.log(z[i]) + new_lp - lp[w]
                if log_u[i] < log_ratio:
                    walkers[w] = proposals[i]
                    lp[w] = new_lp
                    accepted += 1
        chain[step] = walkers
        lps[step] = lp
    return chain, lps, accepted / float(n_steps * n_walkers)


def initial_walkers(d: int, n_walkers: int, prior: PriorSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw walker starting points from the prior, in log-parameter space."""
    s2 = rng.gamma(prior.s2_shape, 1.0 / prior.s2_rate, size=n_walkers)
    ell = rng.exponential(1.0 / prior.lengthscale_rate, size=(n_walkers, d))
    return np.log(np.column_stack([s2, ell]))


def sample_posterior(dataset: Dataset, prior: PriorSpec, settings: McmcSettings,
                     warm_start: Optional[np.ndarray] = None,
                     noise_var: float = DEFAULT_NOISE_VAR) -> ThetaEnsemble:
    """Sample the hyper-parameter posterior for ``dataset``.

    ``warm_start`` is the ``last_walker_state`` of a previous ensemble.
    """
    d = dataset.dim
    D = d + 1
    if settings.n_walkers < 2 * D:
        raise ValueError(f"need at least {2 * D} walkers for {D} hyper-parameters")
    rng = np.random.default_rng(settings.seed)
    if warm_start is None:
        p0 = initial_walkers(d, settings.n_walkers, prior, rng)
    else:
        p0 = np.asarray(warm_start, dtype=float)
        if p0.shape != (settings.n_walkers, D):
            raise ValueError(f"warm start has shape {p0.shape}, expected {(settings.n_walkers, D)}")

    target = _LogTarget(dataset, prior, noise_var)
    chain, _, acc = stretch_sample(target, p0, settings.n_steps, rng, settings.stretch_a)
    if acc < 0.01:
        raise DegenerateSamplingError("all walkers stuck", acc)
    kept = chain[settings.burn_in::settings.thin].reshape(-1, D)
    samples = [_from_log(phi, noise_var) for phi in kept]
    return ThetaEnsemble(samples, chain[-1].copy(), acc, kept)
