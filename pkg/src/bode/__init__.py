"""Sequential Bayesian design of experiments for the expectation of a black-box
function, driven by the expected KL divergence of the belief about it."""

from .engine import EngineConfig, RunRecord, run
from .gp import Dataset, GPState, HyperSample, KernelParams, condition, predict
from .problems import Problem, get_problem, true_qoi_oracle
from .qoi import ekld, qoi_prior_moments

__all__ = [
    "Dataset", "EngineConfig", "GPState", "HyperSample", "KernelParams", "Problem", "RunRecord",
    "condition", "ekld", "get_problem", "predict", "qoi_prior_moments", "run", "true_qoi_oracle",
]
