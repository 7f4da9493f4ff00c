"""Run configuration files and plot-ready outputs (CSV traces, JSON summaries)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import EngineConfig, RunRecord
from .problems import ExternalCommand, Problem, get_problem


class ConfigError(ValueError):
    pass


def trace_columns(d: int) -> list:
    return (["iteration"] + [f"x_{j + 1}" for j in range(d)]
            + ["y_raw", "qoi_mean", "qoi_sd", "max_mean_ekld", "acceptance_rate", "elapsed_s"])


def problem_from_spec(spec, timeout: Optional[float] = None) -> Problem:
    """Build a problem from a built-in name or an external-command mapping.

    External form::

        {"name": "wire", "command": ["./sim"], "domain": [[0, 1], [2, 5]],
         "n_initial": 20, "n_max": 100, "timeout": 3600}
    """
    if isinstance(spec, str):
        try:
            return get_problem(spec)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    if not isinstance(spec, dict):
        raise ConfigError("problem must be a built-in name or a mapping")
    if "builtin" in spec:
        prob = problem_from_spec(spec["builtin"])
        if "domain" in spec:
            prob.domain = np.asarray(spec["domain"], dtype=float)
        return prob
    try:
        cmd = ExternalCommand(spec["command"], float(timeout or spec.get("timeout", 3600.0)))
        return Problem(spec.get("name", "external"), cmd, spec["domain"],
                       int(spec.get("n_initial", 3)), int(spec.get("n_max", 28)),
                       spec.get("reference_qoi"), spec.get("reference_provenance"))
    except KeyError as exc:
        raise ConfigError(f"external problem is missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "problem" not in data:
        raise ConfigError("config must be a JSON object with a 'problem' entry")
    check_density(data)
    return data


def check_density(data: dict) -> None:
    """Only the uniform input density has closed-form QoI integrals."""
    dens = data.get("density", "uniform")
    if isinstance(data.get("problem"), dict):
        dens = data["problem"].get("density", dens)
    if dens != "uniform":
        raise ConfigError(f"input density {dens!r} is not supported; only 'uniform' is")


def engine_config_from(data: dict, problem: Problem) -> EngineConfig:
    eng = dict(data.get("engine", {}))
    eng.setdefault("n_initial", problem.n_initial)
    eng.setdefault("n_max", problem.n_max)
    try:
        return EngineConfig.from_dict(eng)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _num(v: float) -> str:
    return repr(float(v))


def write_trace(record: RunRecord, path, record_timing: bool = False) -> None:
    """One row per iteration. ``elapsed_s`` is ``nan`` unless ``record_timing``
    so that repeated runs produce identical files."""
    d = record.initial_X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_columns(d))
        for it in record.iterations:
            w.writerow([it.iteration] + [_num(v) for v in it.x_raw]
                       + [_num(it.y_raw), _num(it.qoi_mean), _num(it.qoi_sd), _num(it.max_mean_ekld),
                          _num(it.acceptance_rate), _num(it.elapsed_s if record_timing else float("nan"))])


def read_trace(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _clean(v):
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def summary_dict(record: RunRecord, oracle: Optional[float] = None) -> dict:
    out = {
        "problem": record.problem_name,
        "termination": record.termination,
        "error": record.error,
        "n_iterations": len(record.iterations),
        "final_qoi_mean": record.final_qoi_mean,
        "final_qoi_sd": record.final_qoi_sd,
        "final_qoi_variance": record.final_qoi_variance,
        "initial_X": record.initial_X,
        "initial_y": record.initial_y,
        "X": record.X,
        "y": record.y,
        "diagnostics": [it.diagnostics for it in record.iterations],
        "elapsed_s": [it.elapsed_s for it in record.iterations],
    }
    if oracle is not None:
        out["oracle_qoi"] = oracle
    return _clean(out)


def write_summary(record: RunRecord, path, oracle: Optional[float] = None) -> None:
    with open(path, "w") as fh:
        json.dump(summary_dict(record, oracle), fh, indent=2)


def write_config_echo(data: dict, config: EngineConfig, path) -> None:
    echo = {"problem": data["problem"], "engine": _clean(config.to_dict())}
    with open(path, "w") as fh:
        json.dump(echo, fh, indent=2)


def write_run(record: RunRecord, data: dict, out_dir, record_timing: bool = False,
              oracle: Optional[float] = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(record, out / "trace.csv", record_timing)
    write_summary(record, out / "summary.json", oracle)
    write_config_echo(data, record.config, out / "config.json")
    return out
