"""Zero-mean Gaussian process with a squared-exponential kernel.

Inputs live in unit-hypercube coordinates. Every function here accepts a
single point of shape ``(d,)`` or a batch of shape ``(m, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

DEFAULT_NOISE_VAR = 1e-6
JITTER_LADDER = tuple(10.0 ** -k for k in range(10, 3, -1))  # 1e-10 .. 1e-4


class SingularCovarianceError(LinAlgError):
    """Covariance matrix could not be factorized even at maximum jitter."""


@dataclass(frozen=True)
class KernelParams:
    s2: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ell = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ell)
        object.__setattr__(self, "s2", float(self.s2))

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def is_valid(self) -> bool:
        return bool(self.s2 > 0 and np.all(self.lengthscales > 0)
                    and np.isfinite(self.s2) and np.all(np.isfinite(self.lengthscales)))


@dataclass(frozen=True)
class HyperSample:
    kernel: KernelParams
    noise_var: float = DEFAULT_NOISE_VAR

    @property
    def dim(self) -> int:
        return self.kernel.dim


@dataclass(frozen=True)
class Dataset:
    """Observed designs ``X`` (unit coordinates) and standardized outputs ``Y``.

    ``y_mean`` and ``y_scale`` map standardized values back to raw units via
    ``raw = Y * y_scale + y_mean``.
    """

    X: np.ndarray
    Y: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_1d(np.asarray(self.Y, dtype=float))
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if not self.y_scale > 0:
            raise ValueError("y_scale must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_raw(cls, X, y_raw) -> "Dataset":
        """Standardize raw outputs to zero mean and unit variance."""
        y_raw = np.atleast_1d(np.asarray(y_raw, dtype=float))
        mean = float(np.mean(y_raw))
        scale = float(np.std(y_raw))
        if not scale > 0:
            scale = 1.0
        return cls(X, (y_raw - mean) / scale, mean, scale)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def y_raw(self) -> np.ndarray:
        return self.Y * self.y_scale + self.y_mean


@dataclass(frozen=True)
class GPState:
    """A dataset conditioned on one hyper-parameter sample.

    ``cache`` holds derived quantities (QoI integrals and so on) that other
    modules attach lazily; it never changes the posterior itself.
    """

    dataset: Dataset
    theta: HyperSample
    chol: np.ndarray
    alpha: np.ndarray
    jitter_used: float = 0.0
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def params(self) -> KernelParams:
        return self.theta.kernel

    @property
    def noise_var(self) -> float:
        return self.theta.noise_var


def _check_dim(X: np.ndarray, params: KernelParams) -> None:
    if X.shape[-1] != params.dim:
        raise ValueError(f"point dimension {X.shape[-1]} does not match kernel dimension {params.dim}")


def cross_kernel(X1, X2, params: KernelParams) -> np.ndarray:
    """Covariance matrix between two batches of points, shape ``(m1, m2)``."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    _check_dim(X1, params)
    _check_dim(X2, params)
    A = X1 / params.lengthscales
    B = X2 / params.lengthscales
    sq = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
    return params.s2 * np.exp(-0.5 * sq)


def kernel_eval(x, x2, params: KernelParams) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.ndim != 1 or x2.ndim != 1:
        raise ValueError("kernel_eval expects two single points")
    return float(cross_kernel(x, x2, params)[0, 0])


def kernel_matrix(X, params: KernelParams) -> np.ndarray:
    K = cross_kernel(X, X, params)
    # exact symmetry and exact s2 diagonal
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, params.s2)
    return K


def _factorize(A: np.ndarray, s2: float) -> tuple[np.ndarray, float]:
    try:
        return cholesky(A, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    idx = np.diag_indices_from(A)
    for rel in JITTER_LADDER:
        jitter = rel * s2
        B = A.copy()
        B[idx] += jitter
        try:
            return cholesky(B, lower=True, check_finite=False), jitter
        except LinAlgError:
            continue
    raise SingularCovarianceError(
        "covariance factorization failed at maximum jitter "
        "(duplicate designs with incompatible outputs or degenerate hyper-parameters)")


def condition(dataset: Dataset, theta: HyperSample) -> GPState:
    params = theta.kernel
    if not params.is_valid() or theta.noise_var < 0:
        raise ValueError(f"invalid hyper-parameters: {theta}")
    _check_dim(dataset.X, params)
    A = kernel_matrix(dataset.X, params)
    A[np.diag_indices_from(A)] += theta.noise_var
    L, jitter = _factorize(A, params.s2)
    alpha = cho_solve((L, True), dataset.Y, check_finite=False)
    return GPState(dataset, theta, L, alpha, jitter)


def solve(state: GPState, b: np.ndarray) -> np.ndarray:
    """Apply ``(K + noise I)^{-1}`` to a vector or to the columns of a matrix."""
    return cho_solve((state.chol, True), b, check_finite=False)


def predict(state: GPState, x):
    """Posterior mean and variance at ``x``.

    Returns floats for a single point and arrays for a batch. Variances that
    come out negative through cancellation are clamped to zero; the count is
    kept in ``state.cache['variance_clamps']``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xs = np.atleast_2d(x)
    Kxn = cross_kernel(Xs, state.dataset.X, state.params)
    mean = Kxn @ state.alpha
    V = solve_triangular(state.chol, Kxn.T, lower=True, check_finite=False)
    var = state.params.s2 - np.sum(V * V, axis=0)
    neg = var < 0
    if np.any(neg):
        state.cache["variance_clamps"] = state.cache.get("variance_clamps", 0) + int(neg.sum())
        var = np.where(neg, 0.0, var)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def posterior_cross_cov(state: GPState, x, x2) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.array_equal(x, x2):
        return predict(state, x)[1]
    X = state.dataset.X
    k1 = cross_kernel(x, X, state.params)[0]
    k2 = cross_kernel(x2, X, state.params)[0]
    v1 = solve_triangular(state.chol, k1, lower=True, check_finite=False)
    v2 = solve_triangular(state.chol, k2, lower=True, check_finite=False)
    return kernel_eval(x, x2, state.params) - float(v1 @ v2)


def log_marginal_likelihood(dataset: Dataset, theta: HyperSample) -> float:
    state = condition(dataset, theta)
    return state_log_likelihood(state)


def state_log_likelihood(state: GPState) -> float:
    n = state.dataset.n
    return float(-0.5 * state.dataset.Y @ state.alpha
                 - np.sum(np.log(np.diag(state.chol)))
                 - 0.5 * n * np.log(2.0 * np.pi))


def sq_dists(X) -> np.ndarray:
    """Per-dimension squared differences, shape ``(d, n, n)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return (X.T[:, :, None] - X.T[:, None, :]) ** 2


def lml_from_dists(D: np.ndarray, Y: np.ndarray, s2: float, lengthscales, noise_var: float,
                   grad: bool = False):
    """Log marginal likelihood from precomputed ``sq_dists``.

    With ``grad=True`` also returns the gradient with respect to
    ``(log s2, log lengthscales..., log noise_var)``. Raises
    ``SingularCovarianceError`` like ``condition``.
    """
    ell = np.asarray(lengthscales, dtype=float)
    n = Y.shape[0]
    scaled = D / (ell ** 2)[:, None, None]
    K = s2 * np.exp(-0.5 * scaled.sum(axis=0))
    A = K.copy()
    A[np.diag_indices(n)] += noise_var
    L, _ = _factorize(A, s2)
    alpha = cho_solve((L, True), Y, check_finite=False)
    val = float(-0.5 * Y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2.0 * np.pi))
    if not grad:
        return val
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n), check_finite=False)
    g = np.empty(ell.size + 2)
    g[0] = 0.5 * np.sum(W * K)
    WK = W * K
    g[1:-1] = 0.5 * np.einsum("ij,kij->k", WK, scaled)
    g[-1] = 0.5 * noise_var * np.trace(W)
    return val, g
