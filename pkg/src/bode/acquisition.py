"""Inner-loop maximization of the EKLD surface and the uncertainty-sampling
baseline.

The EKLD is maximized by Bayesian global optimization: a maximum-likelihood
GP is fitted to the EKLD values seen so far and the next EKLD evaluation is
placed at the Latin-hypercube candidate with the largest augmented expected
improvement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .gp import (Dataset, GPState, HyperSample, KernelParams, SingularCovarianceError, condition,
                 lml_from_dists, predict, sq_dists, state_log_likelihood)

log = logging.getLogger(__name__)

LENGTHSCALE_BOUNDS = (0.01, 3.0)
S2_BOUNDS = (1e-10, 1e2)
NOISE_BOUNDS = (1e-8, 1.0)


class DegenerateFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class BgoSettings:
    t_init: int
    t_max: int = 20
    n_candidates: int = 200
    tol: float = 1e-4
    seed: int = 0
    n_restarts: int = 5

    def __post_init__(self):
        if self.t_init < 2 or self.t_max < self.t_init:
            raise ValueError("need 2 <= t_init <= t_max")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    @classmethod
    def default(cls, d: int, seed: int = 0) -> "BgoSettings":
        return cls(max(5, 2 * d), 20, 200 * d, 1e-4, seed)


def lhs(n: int, d: int, seed) -> np.ndarray:
    """Latin hypercube sample of ``n`` points in ``[0, 1]^d``.

    Each column holds exactly one point per stratum ``[k/n, (k+1)/n)``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    u = rng.random((n, d))
    perms = np.column_stack([rng.permutation(n) for _ in range(d)])
    return (perms + u) / n


@dataclass
class InnerSurrogate:
    """Maximum-likelihood GP fitted to EKLD evaluations.

    Values are standardized internally; predictions and ``noise_sd`` are in
    the original units.
    """

    state: GPState
    y_mean: float
    y_scale: float
    log_likelihood: float = float("nan")

    @property
    def designs(self) -> np.ndarray:
        return self.state.dataset.X

    @property
    def values(self) -> np.ndarray:
        return self.state.dataset.Y * self.y_scale + self.y_mean

    @property
    def noise_sd(self) -> float:
        return self.y_scale * float(np.sqrt(self.state.noise_var))

    def predict(self, X):
        m, v = predict(self.state, np.atleast_2d(X))
        return m * self.y_scale + self.y_mean, v * self.y_scale ** 2

    @classmethod
    def from_params(cls, designs, values, s2, lengthscales, noise_var) -> "InnerSurrogate":
        designs = np.atleast_2d(np.asarray(designs, dtype=float))
        values = np.asarray(values, dtype=float)
        mean, scale = _standardizer(values)
        ds = Dataset(designs, (values - mean) / scale)
        st = condition(ds, HyperSample(KernelParams(s2, lengthscales), noise_var))
        return cls(st, mean, scale, state_log_likelihood(st))


def _standardizer(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    scale = float(np.std(values))
    if not scale > 0:
        # flat data: shrink the scale so the surrogate is pinned to the constant
        scale = 1e-6 * max(abs(mean), 1.0)
    return mean, scale


def fit_inner_surrogate(designs, values, seed=0, n_restarts: int = 5) -> InnerSurrogate:
    """Fit signal variance, lengthscales and noise by maximum marginal likelihood.

    Multistart L-BFGS-B in log-parameter space from log-uniform draws; the best
    of the restarts is returned.
    """
    designs = np.atleast_2d(np.asarray(designs, dtype=float))
    values = np.asarray(values, dtype=float)
    t, d = designs.shape
    if t < 2:
        raise ValueError("need at least two evaluations to fit")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    mean, scale = _standardizer(values)
    ds = Dataset(designs, (values - mean) / scale)

    bounds = ([np.log(S2_BOUNDS)] + [np.log(LENGTHSCALE_BOUNDS)] * d + [np.log(NOISE_BOUNDS)])
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def unpack(z):
        return HyperSample(KernelParams(np.exp(z[0]), np.exp(z[1:d + 1])), float(np.exp(z[-1])))

    D = sq_dists(ds.X)

    def objective(z):
        e = np.exp(z)
        try:
            val, grad = lml_from_dists(D, ds.Y, e[0], e[1:d + 1], e[-1], grad=True)
        except SingularCovarianceError:
            return 1e25, np.zeros_like(z)
        return -val, -grad

    rng = np.random.default_rng(seed)
    best_z, best_f = None, np.inf
    for _ in range(n_restarts):
        z0 = rng.uniform(lo, hi)
        # start from a moderate noise level so restarts do not all sit on the floor
        z0[-1] = rng.uniform(np.log(1e-6), np.log(1e-2))
        res = minimize(objective, z0, jac=True, method="L-BFGS-B", bounds=bounds)
        if np.isfinite(res.fun) and res.fun < best_f and res.fun < 1e25:
            best_z, best_f = res.x, res.fun
    if best_z is None:
        raise DegenerateFitError("every restart failed to factorize the inner covariance")
    st = condition(ds, unpack(best_z))
    return InnerSurrogate(st, mean, scale, -best_f)


def expected_improvement(mean, sd, best):
    """Classic EI for maximization; ``sd == 0`` gives ``max(mean - best, 0)``."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    diff = mean - best
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(sd > 0, diff / sd, 0.0)
        ei = np.where(sd > 0, diff * norm.cdf(z) + sd * norm.pdf(z), np.maximum(diff, 0.0))
    return np.maximum(ei, 0.0)


def aei(surrogate: InnerSurrogate, candidates) -> np.ndarray:
    """Augmented expected improvement at ``candidates`` (maximization)."""
    m_obs, v_obs = surrogate.predict(surrogate.designs)
    j = int(np.argmax(m_obs - np.sqrt(v_obs)))
    best = m_obs[j]
    m, v = surrogate.predict(candidates)
    sd = np.sqrt(v)
    noise_sd = surrogate.noise_sd
    ei = expected_improvement(m, sd, best)
    total = np.sqrt(v + noise_sd ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(total > 0, 1.0 - noise_sd / total, 0.0)
    return ei * factor


@dataclass
class BgoResult:
    x: np.ndarray
    value: float
    designs: np.ndarray
    values: np.ndarray
    early_stop: bool = False
    fallback: bool = False
    surrogate: Optional[InnerSurrogate] = field(default=None, repr=False)


def maximize_ekld(ekld_fn: Callable[[np.ndarray], float], d: int, settings: BgoSettings) -> BgoResult:
    """Maximize ``ekld_fn`` over ``[0, 1]^d`` with AEI-driven BGO.

    ``ekld_fn`` maps one point to a float (or an object with ``mean_gain``).
    The best *evaluated* design is returned.
    """
    rng = np.random.default_rng(settings.seed)

    def g(x):
        v = ekld_fn(x)
        return float(getattr(v, "mean_gain", v))

    X = rng.random((settings.t_init, d))
    G = [g(x) for x in X]
    X = list(X)
    t = settings.t_init
    early, fallback, sur = False, False, None
    while t < settings.t_max:
        cand_seed = rng.integers(2 ** 63)
        if not fallback:
            try:
                sur = fit_inner_surrogate(np.array(X), np.array(G), seed=rng.integers(2 ** 63),
                                          n_restarts=settings.n_restarts)
            except DegenerateFitError:
                log.warning("inner surrogate fit failed; switching to random search")
                fallback = True
        if fallback:
            x_new = rng.random(d)
        else:
            cands = lhs(settings.n_candidates, d, cand_seed)
            scores = aei(sur, cands)
            j = int(np.argmax(scores))
            gamma = settings.tol * (max(G) + 1e-12)
            if scores[j] < gamma:
                early = True
                break
            x_new = cands[j]
        X.append(x_new)
        G.append(g(x_new))
        t += 1
    G = np.array(G)
    j = int(np.argmax(G))
    return BgoResult(np.array(X[j]), float(G[j]), np.array(X), G, early, fallback, sur)


def mean_predictive_variance(states: Sequence[GPState], X) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.mean([predict(s, X)[1] for s in states], axis=0)


def us_next(states: Sequence[GPState], n_candidates: int, seed) -> np.ndarray:
    """Candidate with the largest ensemble-averaged predictive variance."""
    if len(states) < 1:
        raise ValueError("need at least one state")
    d = states[0].dataset.dim
    cands = lhs(n_candidates, d, seed)
    return cands[int(np.argmax(mean_predictive_variance(states, cands)))]
