"""Closed-form beliefs about the expectation of f under the uniform density on
the unit hypercube, and the expected KL-divergence (EKLD) acquisition.

All quantities are in the standardized output space of the ``GPState``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import erf

from .gp import GPState, KernelParams, cross_kernel, predict, solve

_SQRT2 = math.sqrt(2.0)
_SQRTPI = math.sqrt(math.pi)


@dataclass(frozen=True)
class QoiBelief:
    mu1: float
    sigma1_sq: float


@dataclass(frozen=True)
class HypotheticalMoments:
    mu2: float
    sigma2_sq: float
    nu: float
    denom: float


@dataclass(frozen=True)
class EkldValue:
    mean_gain: float
    per_theta: Optional[np.ndarray] = None


def epsilon_at(x, params: KernelParams):
    """Integral of ``k(x, x')`` over ``x'`` in the unit hypercube.

    Accepts one point or a batch of points.
    """
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    ell = params.lengthscales
    if X.shape[-1] != ell.size:
        raise ValueError("point dimension does not match kernel dimension")
    b = _SQRT2 * ell
    factors = ell * (erf((1.0 - X) / b) - erf(-X / b))
    out = params.s2 * (math.pi / 2.0) ** (ell.size / 2.0) * np.prod(factors, axis=-1)
    return float(out[0]) if x.ndim == 1 else out


def sigma0_sq(params: KernelParams) -> float:
    """Double integral of the prior kernel over the unit hypercube."""
    ell = params.lengthscales
    c = 1.0 / (_SQRT2 * ell)
    brace = -1.0 / _SQRTPI + np.exp(-0.5 / ell ** 2) / _SQRTPI + c * erf(c)
    return float(params.s2 * np.prod(2.0 * ell ** 2 * _SQRTPI * brace))


def _cache(state: GPState) -> dict:
    """Per-state QoI quantities reused by every candidate point."""
    c = state.cache
    if "eps_n" not in c:
        eps_n = epsilon_at(state.dataset.X, state.params)
        w = solve(state, eps_n)
        s0 = sigma0_sq(state.params)
        s1 = s0 - float(eps_n @ w)
        if s1 < 0:
            c["sigma1_clamps"] = c.get("sigma1_clamps", 0) + 1
            s1 = 0.0
        c.update(eps_n=eps_n, w=w, sigma0_sq=s0, mu1=float(eps_n @ state.alpha), sigma1_sq=s1,
                 floor=max(1e-12 * s0, 1e-300))
    return c


def qoi_prior_moments(state: GPState) -> QoiBelief:
    c = _cache(state)
    return QoiBelief(c["mu1"], c["sigma1_sq"])


def nu_at(state: GPState, x):
    """Posterior covariance between the QoI and f at ``x``."""
    c = _cache(state)
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    kx = cross_kernel(X, state.dataset.X, state.params)
    nu = epsilon_at(X, state.params) - kx @ c["w"]
    return float(nu[0]) if x.ndim == 1 else nu


def _nu_and_var(state: GPState, X: np.ndarray):
    c = _cache(state)
    kx = cross_kernel(X, state.dataset.X, state.params)
    nu = epsilon_at(X, state.params) - kx @ c["w"]
    V = solve_triangular(state.chol, kx.T, lower=True, check_finite=False)
    var = np.maximum(state.params.s2 - np.sum(V * V, axis=0), 0.0)
    return nu, var


def hypothetical_moments(state: GPState, x, y_hyp: float) -> HypotheticalMoments:
    """QoI moments after a hypothetical observation ``y_hyp`` at ``x``."""
    c = _cache(state)
    x = np.asarray(x, dtype=float)
    m, var = predict(state, x)
    nu = nu_at(state, x)
    denom = var + state.noise_var
    if not denom > 0:
        raise ValueError("predictive variance plus noise must be positive")
    mu2 = c["mu1"] + nu * (y_hyp - m) / denom
    s2 = max(c["sigma1_sq"] - nu * nu / denom, c["floor"])
    if s2 == c["floor"]:
        c["sigma2_clamps"] = c.get("sigma2_clamps", 0) + 1
    return HypotheticalMoments(mu2, s2, nu, denom)


def kld_gaussian(mu1: float, sigma1_sq: float, mu2: float, sigma2_sq: float) -> float:
    """KL( N(mu2, sigma2_sq) || N(mu1, sigma1_sq) )."""
    if not (sigma1_sq > 0 and sigma2_sq > 0):
        raise ValueError("variances must be positive")
    return (0.5 * math.log(sigma1_sq / sigma2_sq) + sigma2_sq / (2.0 * sigma1_sq)
            + (mu2 - mu1) ** 2 / (2.0 * sigma1_sq) - 0.5)


def ekld_given_theta(state: GPState, x):
    """Expected information gain about the QoI for one hyper-parameter sample,
    with the hypothetical outcome integrated out analytically.

    Returns a float for one point, an array for a batch. A state whose QoI
    variance is already at the floor yields zero and sets
    ``state.cache['belief_saturated']``.
    """
    c = _cache(state)
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    s1 = c["sigma1_sq"]
    if s1 <= c["floor"]:
        c["belief_saturated"] = True
        g = np.zeros(X.shape[0])
    else:
        nu, var = _nu_and_var(state, X)
        denom = var + state.noise_var
        s2 = s1 - nu * nu / denom
        low = s2 < c["floor"]
        if np.any(low):
            c["sigma2_clamps"] = c.get("sigma2_clamps", 0) + int(low.sum())
            s2 = np.where(low, c["floor"], s2)
        g = (0.5 * np.log(s1 / s2) + 0.5 * s2 / s1 - 0.5
             + 0.5 * nu * nu / (s1 * denom))
        g = np.maximum(g, 0.0)
    return float(g[0]) if x.ndim == 1 else g


def ekld(states: Sequence[GPState], x, per_theta: bool = False):
    """Hyper-parameter averaged EKLD at ``x``.

    For a single point returns an ``EkldValue``; for a batch ``(m, d)`` returns
    an array of mean gains (``per_theta`` is then ignored).
    """
    if len(states) < 1:
        raise ValueError("need at least one state")
    x = np.asarray(x, dtype=float)
    vals = np.array([ekld_given_theta(s, x) for s in states])
    if x.ndim == 1:
        return EkldValue(float(np.mean(vals)), vals if per_theta else None)
    return vals.mean(axis=0)
