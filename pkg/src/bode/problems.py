"""Benchmark problems, the external black-box adapter and reference integrals."""

from __future__ import annotations

import math
import shlex
import subprocess
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .acquisition import lhs

REPORTED_PROVENANCE = "reported, standardization unknown"


class EvaluationError(RuntimeError):
    """Base class for black-box evaluation failures."""


class EvaluationTimeout(EvaluationError):
    pass


class SpawnError(EvaluationError):
    pass


class ParseError(EvaluationError):
    pass


class ExitStatusError(EvaluationError):
    pass


def f1(x):
    """4 (1 - sin(6x + 8 exp(6x - 7))) on [0, 1]."""
    x = np.asarray(x, dtype=float)
    return 4.0 * (1.0 - np.sin(6.0 * x + 8.0 * np.exp(6.0 * x - 7.0)))


def f2(x):
    """Sum of two normal densities, N(0.2, 0.05^2) + N(0.8, 0.05^2)."""
    x = np.asarray(x, dtype=float)
    s = 0.05
    c = 1.0 / (math.sqrt(2.0 * math.pi) * s)
    return c * np.exp(-0.5 * ((x - 0.2) / s) ** 2) + c * np.exp(-0.5 * ((x - 0.8) / s) ** 2)


def f3(x):
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    if np.any(x3 < -1.0):
        raise ValueError("f3 requires x3 >= -1")
    return (4.0 * (x1 + 8.0 * x2 - 8.0 * x2 ** 2 - 2.0) ** 2 + (3.0 - 4.0 * x2) ** 2
            + 16.0 * np.sqrt(x3 + 1.0) * (2.0 * x3 - 1.0) ** 2)


def f3_clipped(x):
    """f3 with x3 clipped to -1 + 1e-9, for the [-2, 6]^3 domain variant."""
    x = np.array(x, dtype=float, copy=True)
    x[..., 2] = np.maximum(x[..., 2], -1.0 + 1e-9)
    return f3(x)


def f4(x):
    x = np.asarray(x, dtype=float)
    return (10.0 * np.sin(np.pi * x[..., 0] * x[..., 1]) + 20.0 * (x[..., 2] - 5.0) ** 2
            + 10.0 * x[..., 3] + 5.0 * x[..., 4])


@dataclass
class ExternalCommand:
    """A black box run as a child process, one request per invocation.

    The child reads one line of space-separated coordinates from stdin and
    writes one decimal number to stdout.
    """

    argv: list
    timeout: float = 3600.0

    def __post_init__(self):
        if isinstance(self.argv, str):
            self.argv = shlex.split(self.argv)
        self.argv = [str(a) for a in self.argv]

    def __call__(self, x) -> float:
        return external_blackbox(self, x)


def format_point(x) -> str:
    return " ".join(repr(float(v)) for v in np.atleast_1d(x)) + "\n"


def external_blackbox(command: ExternalCommand, x) -> float:
    try:
        proc = subprocess.run(command.argv, input=format_point(x), capture_output=True,
                              text=True, timeout=command.timeout)
    except subprocess.TimeoutExpired as exc:
        raise EvaluationTimeout(f"black box exceeded {command.timeout} s") from exc
    except OSError as exc:
        raise SpawnError(f"could not start {command.argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise ExitStatusError(f"black box exited with status {proc.returncode}: {proc.stderr.strip()}")
    tokens = proc.stdout.split()
    if len(tokens) != 1:
        raise ParseError(f"expected exactly one number on stdout, got {proc.stdout!r}")
    try:
        value = float(tokens[0])
    except ValueError as exc:
        raise ParseError(f"unparsable black-box output {tokens[0]!r}") from exc
    if not math.isfinite(value):
        raise ParseError(f"non-finite black-box output {tokens[0]!r}")
    return value


@dataclass
class Problem:
    """A black box on a box domain with the uniform input density.

    ``func`` is either a vectorized built-in taking raw coordinates of shape
    ``(..., d)`` or an ``ExternalCommand``.
    """

    name: str
    func: Union[Callable, ExternalCommand]
    domain: np.ndarray
    n_initial: int = 3
    n_max: int = 28
    reference_qoi: Optional[float] = None
    reference_provenance: Optional[str] = None
    builtin: Optional[str] = None

    def __post_init__(self):
        self.domain = np.atleast_2d(np.asarray(self.domain, dtype=float))
        if self.domain.shape[1] != 2 or np.any(self.domain[:, 0] >= self.domain[:, 1]):
            raise ValueError("domain must be a list of (lower, upper) pairs with lower < upper")

    @property
    def dim(self) -> int:
        return self.domain.shape[0]

    def to_raw(self, u):
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        return lo + np.asarray(u, dtype=float) * (hi - lo)

    def to_unit(self, x):
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def evaluate(self, x_raw) -> float:
        """Evaluate one raw-domain point."""
        x_raw = np.asarray(x_raw, dtype=float).reshape(1, self.dim)
        if isinstance(self.func, ExternalCommand):
            return self.func(x_raw[0])
        return float(np.asarray(self._call_builtin(x_raw)).reshape(-1)[0])

    def evaluate_batch(self, X_raw) -> np.ndarray:
        X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
        if isinstance(self.func, ExternalCommand):
            return np.array([self.func(x) for x in X_raw])
        return np.asarray(self._call_builtin(X_raw), dtype=float).reshape(-1)

    def _call_builtin(self, X_raw):
        # one-dimensional built-ins take scalars along the last axis
        if self.dim == 1 and self.builtin in ("f1", "f2"):
            return self.func(X_raw[..., 0])
        return self.func(X_raw)


BUILTIN_FUNCS = {"f1": f1, "f2": f2, "f3": f3, "f3-wide": f3_clipped, "f4": f4}

_BUILTINS = {
    # name: (func, domain, n_initial, n_max, reported value)
    "f1": ("f1", [[0.0, 1.0]], 3, 28, -1.3599),
    "f2": ("f2", [[0.0, 1.0]], 3, 28, 2.0),
    "f3": ("f3", [[0.0, 1.0]] * 3, 2, 32, -0.7864),
    "f3-wide": ("f3-wide", [[-2.0, 6.0]] * 3, 2, 32, -0.7864),
    "f4": ("f4", [[0.0, 1.0]] * 5, 20, 65, 0.3883),
}


def get_problem(name: str) -> Problem:
    if name not in _BUILTINS:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(_BUILTINS)}")
    key, domain, n_i, n_max, ref = _BUILTINS[name]
    if name == "f3-wide":
        warnings.warn("f3 on [-2, 6]^3 clips x3 at -1 + 1e-9 to keep sqrt(x3 + 1) real", stacklevel=2)
    return Problem(name, BUILTIN_FUNCS[key], domain, n_i, n_max, ref, REPORTED_PROVENANCE, builtin=key)


def builtin_names() -> list:
    return list(_BUILTINS)


@dataclass
class OracleResult:
    value: float
    error: float
    method: str
    n_evals: int
    converged: bool = True


def _composite_gl(n_panels: int, order: int = 8):
    t, w = leggauss(order)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    return ((a + b) / 2 + (b - a) / 2 * t).ravel(), ((b - a) / 2 * w).ravel()


def _tensor_quadrature(problem: Problem, n_panels: int):
    x, w = _composite_gl(n_panels)
    d = problem.dim
    grids = np.meshgrid(*([x] * d), indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.ones(U.shape[0])
    for wg in np.meshgrid(*([w] * d), indexing="ij"):
        W = W * wg.ravel()
    vals = problem.evaluate_batch(problem.to_raw(U))
    # centred sum: exact for constants, less cancellation otherwise
    c = vals[0]
    return float(c + W @ (vals - c) / W.sum()), U.shape[0]


def true_qoi_oracle(problem: Problem, max_evals: int = 2 ** 22, rtol: float = 1e-8,
                    n_lhs: int = 2 ** 16, seed: int = 0) -> OracleResult:
    """Reference value of the expectation of ``problem`` under the uniform density.

    ``d <= 3``: composite Gauss-Legendre (order 8 per panel) with the panel
    count doubled until successive levels agree to ``rtol``.
    ``d > 3``: Latin-hypercube average with a standard-error estimate.
    """
    if problem.dim <= 3:
        panels = 1
        prev, used = _tensor_quadrature(problem, panels)
        while True:
            panels *= 2
            if used + (8 * panels) ** problem.dim > max_evals:
                return OracleResult(prev, float("nan"), "gauss-legendre", used, converged=False)
            cur, n = _tensor_quadrature(problem, panels)
            used += n
            err = abs(cur - prev)
            if err <= rtol * max(abs(cur), 1e-300) or err == 0.0:
                return OracleResult(cur, err, "gauss-legendre", used)
            prev = cur
    n = min(n_lhs, max_evals)
    U = lhs(n, problem.dim, seed)
    vals = problem.evaluate_batch(problem.to_raw(U))
    return OracleResult(_centred_mean(vals), float(np.std(vals, ddof=1) / math.sqrt(n)),
                        "lhs-average", n, converged=n >= n_lhs)


def _centred_mean(vals: np.ndarray) -> float:
    c = vals[0]
    return float(c + np.mean(vals - c))


def lhs_average_oracle(problem: Problem, n: int = 2 ** 16, seed: int = 0) -> OracleResult:
    U = lhs(n, problem.dim, seed)
    vals = problem.evaluate_batch(problem.to_raw(U))
    return OracleResult(_centred_mean(vals), float(np.std(vals, ddof=1) / math.sqrt(n)), "lhs-average", n)
