"""Sequential design loop: infer hyper-parameters, pick the next design, evaluate,
repeat until the budget is spent or the information gain falls below a
threshold.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .acquisition import BgoSettings, lhs, maximize_ekld, us_next
from .gp import DEFAULT_NOISE_VAR, Dataset, condition
from .hyper import DegenerateSamplingError, McmcSettings, PriorSpec, sample_posterior
from .problems import EvaluationError, Problem
from .qoi import QoiBelief, ekld, qoi_prior_moments

log = logging.getLogger(__name__)

ACQUISITIONS = ("ekld", "us", "random")

# seed stream identifiers
_MCMC, _BGO, _LHS, _PERTURB, _RANDOM, _INITIAL = range(6)


def component_seed(master_seed: int, iteration: int, component: int, attempt: int = 0) -> int:
    """Deterministic per-component seed derived from the master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(iteration), int(component), int(attempt)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class EngineConfig:
    acquisition: str = "ekld"
    n_initial: int = 3
    n_max: int = 28
    ekld_stop_threshold: Optional[float] = None
    master_seed: int = 0
    prior: PriorSpec = field(default_factory=PriorSpec)
    noise_var: float = DEFAULT_NOISE_VAR
    # MCMC: None means the dimension-dependent default
    n_walkers: Optional[int] = None
    mcmc_steps: int = 500
    burn_in_cold: int = 250
    burn_in_warm: int = 50
    n_theta: int = 100
    stretch_a: float = 2.0
    # BGO: None means the dimension-dependent default
    bgo_t_init: Optional[int] = None
    bgo_t_max: int = 20
    bgo_n_candidates: Optional[int] = None
    bgo_tol: float = 1e-4
    us_n_candidates: Optional[int] = None

    def __post_init__(self):
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
        if not 1 <= self.n_initial < self.n_max:
            raise ValueError("need 1 <= n_initial < n_max")
        if isinstance(self.prior, dict):
            self.prior = PriorSpec(**self.prior)

    def mcmc_settings(self, d: int, warm: bool, seed: int) -> McmcSettings:
        n_walkers = self.n_walkers or max(6, 2 * (d + 1))
        n_walkers += n_walkers % 2
        burn = self.burn_in_warm if warm else self.burn_in_cold
        thin = max(1, ((self.mcmc_steps - burn) * n_walkers) // self.n_theta)
        return McmcSettings(n_walkers, self.mcmc_steps, burn, thin, self.stretch_a, seed)

    def bgo_settings(self, d: int, seed: int) -> BgoSettings:
        t_init = self.bgo_t_init or max(5, 2 * d)
        return BgoSettings(t_init, max(self.bgo_t_max, t_init), self.bgo_n_candidates or 200 * d,
                           self.bgo_tol, seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown engine config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class IterationRecord:
    iteration: int
    x_unit: np.ndarray
    x_raw: np.ndarray
    y_raw: float
    qoi_mean: float
    qoi_variance: float
    max_mean_ekld: float
    acceptance_rate: float
    elapsed_s: float
    n_theta: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def qoi_sd(self) -> float:
        return math.sqrt(max(self.qoi_variance, 0.0))


@dataclass
class RunRecord:
    config: EngineConfig
    problem_name: str
    initial_X: np.ndarray
    initial_y: np.ndarray
    iterations: list = field(default_factory=list)
    X: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    final_qoi_mean: float = float("nan")
    final_qoi_variance: float = float("nan")
    termination: str = ""
    error: Optional[str] = None

    @property
    def final_qoi_sd(self) -> float:
        return math.sqrt(max(self.final_qoi_variance, 0.0))


def initial_design(n_initial: int, d: int, seed) -> np.ndarray:
    if n_initial < 1:
        raise ValueError("n_initial must be >= 1")
    return lhs(n_initial, d, seed)


def marginal_qoi_belief(beliefs: Sequence[QoiBelief]) -> tuple[float, float]:
    """Mean and variance of the equally weighted Gaussian mixture of beliefs."""
    if len(beliefs) < 1:
        raise ValueError("need at least one belief")
    mu = np.array([b.mu1 for b in beliefs])
    var = np.array([b.sigma1_sq for b in beliefs])
    mean = float(mu.mean())
    return mean, float(var.mean() + np.mean((mu - mean) ** 2))


def stopping_check(n: int, last_max_ekld: Optional[float], config: EngineConfig) -> Optional[str]:
    """Return a stop reason or ``None`` to continue."""
    if n >= config.n_max:
        return "budget"
    thr = config.ekld_stop_threshold
    if thr is not None and last_max_ekld is not None and thr > last_max_ekld:
        return "ekld_threshold"
    return None


def _infer(dataset: Dataset, config: EngineConfig, iteration: int, warm):
    d = dataset.dim
    for attempt in (0, 1):
        seed = component_seed(config.master_seed, iteration, _MCMC, attempt)
        use_warm = warm if attempt == 0 else None
        settings = config.mcmc_settings(d, use_warm is not None, seed)
        try:
            ens = sample_posterior(dataset, config.prior, settings, use_warm, config.noise_var)
        except DegenerateSamplingError:
            if attempt == 1:
                raise
            log.warning("degenerate MCMC at iteration %d; retrying with a fresh cold start", iteration)
            continue
        states = [condition(dataset, th) for th in ens.samples]
        return ens, states


def _belief(states, dataset: Dataset) -> tuple[float, float]:
    mean, var = marginal_qoi_belief([qoi_prior_moments(s) for s in states])
    return mean * dataset.y_scale + dataset.y_mean, var * dataset.y_scale ** 2


def _diagnostics(states) -> dict:
    keys = ("variance_clamps", "sigma1_clamps", "sigma2_clamps")
    out = {k: int(sum(s.cache.get(k, 0) for s in states)) for k in keys}
    out["belief_saturated"] = int(sum(bool(s.cache.get("belief_saturated")) for s in states))
    out["jittered_states"] = int(sum(s.jitter_used > 0 for s in states))
    return out


def run(problem: Problem, config: EngineConfig, progress=None) -> RunRecord:
    """Run the sequential design on ``problem``.

    Each iteration records the belief about the expectation given the data so
    far, the design chosen next and its observed output. The belief after the
    last observation is stored in ``final_qoi_mean`` / ``final_qoi_variance``.
    QoI moments are in raw output units.
    """
    d = problem.dim
    U = initial_design(config.n_initial, d, component_seed(config.master_seed, 0, _INITIAL))
    record = RunRecord(config, problem.name, problem.to_raw(U), np.array([]))
    try:
        y = np.array([problem.evaluate(problem.to_raw(u)) for u in U])
    except EvaluationError as exc:
        record.termination, record.error = "error", f"{type(exc).__name__}: {exc}"
        return record
    record.initial_y = y.copy()
    warm = None
    iteration = 0
    while True:
        iteration += 1
        t0 = time.perf_counter()
        dataset = Dataset.from_raw(U, y)
        try:
            ens, states = _infer(dataset, config, iteration, warm)
        except DegenerateSamplingError as exc:
            record.termination, record.error = "error", f"DegenerateSamplingError: {exc}"
            break
        warm = ens.last_walker_state
        q_mean, q_var = _belief(states, dataset)
        reason = stopping_check(len(y), None, config)
        if reason:
            record.final_qoi_mean, record.final_qoi_variance = q_mean, q_var
            record.termination = reason
            break

        if config.acquisition == "ekld":
            res = maximize_ekld(lambda x: ekld(states, x), d,
                                config.bgo_settings(d, component_seed(config.master_seed, iteration, _BGO)))
            u_next, g_next = res.x, res.value
        else:
            if config.acquisition == "us":
                n_c = config.us_n_candidates or 200 * d
                u_next = us_next(states, n_c, component_seed(config.master_seed, iteration, _LHS))
            else:
                u_next = np.random.default_rng(component_seed(config.master_seed, iteration, _RANDOM)).random(d)
            g_next = ekld(states, u_next).mean_gain

        reason = stopping_check(len(y), g_next, config)
        if reason:
            record.final_qoi_mean, record.final_qoi_variance = q_mean, q_var
            record.termination = reason
            break

        diag = _diagnostics(states)
        if np.any(np.all(U == u_next, axis=1)):
            rng = np.random.default_rng(component_seed(config.master_seed, iteration, _PERTURB))
            step = rng.standard_normal(d)
            u_next = np.clip(u_next + 1e-6 * step / np.linalg.norm(step), 0.0, 1.0)
            diag["perturbed_duplicate"] = 1
            log.info("iteration %d: perturbed a duplicate design", iteration)

        x_raw = problem.to_raw(u_next)
        try:
            y_next = problem.evaluate(x_raw)
        except EvaluationError as exc:
            record.final_qoi_mean, record.final_qoi_variance = q_mean, q_var
            record.termination, record.error = "error", f"{type(exc).__name__}: {exc}"
            break
        rec = IterationRecord(iteration, u_next.copy(), x_raw, y_next, q_mean, q_var, g_next,
                              ens.acceptance_rate, time.perf_counter() - t0, len(states), diag)
        record.iterations.append(rec)
        if progress is not None:
            progress(rec)
        U = np.vstack([U, u_next])
        y = np.append(y, y_next)

    record.X = problem.to_raw(U)
    record.y = y
    return record
