"""Command-line entry point.

Subcommands: ``run``, ``oracle``, ``compare``, ``bench`` and ``eval`` (the
child side of the external black-box protocol for built-in problems).

Exit status: 0 on success, 1 on a configuration error, 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .engine import ACQUISITIONS, EngineConfig, RunRecord, run
from .problems import EvaluationError, builtin_names, get_problem, true_qoi_oracle

log = logging.getLogger("bode")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# reference budgets: (n_initial, n_max)
BENCH_BUDGETS = {"f1": (3, 28), "f2": (3, 28), "f3": (2, 32), "f4": (20, 65)}


def _parse_seeds(text: str) -> list:
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _resolve(args) -> tuple:
    """Merge a config file with command-line overrides."""
    if args.config:
        data = io.load_config(args.config)
    elif getattr(args, "problem", None):
        data = {"problem": args.problem}
    else:
        raise io.ConfigError("either --config or --problem is required")
    if getattr(args, "problem", None) and args.config:
        data["problem"] = args.problem
    engine = dict(data.get("engine", {}))
    if getattr(args, "seed", None) is not None:
        engine["master_seed"] = args.seed
    if getattr(args, "acquisition", None):
        engine["acquisition"] = args.acquisition
    if getattr(args, "budget", None) is not None:
        engine["n_max"] = args.budget
    data["engine"] = engine
    problem = io.problem_from_spec(data["problem"], getattr(args, "timeout", None))
    config = io.engine_config_from(data, problem)
    return data, problem, config


def _progress(rec):
    log.info("iter %3d  y=%.6g  Q=%.6g +- %.3g  max EKLD=%.3g  (%.2fs)",
             rec.iteration, rec.y_raw, rec.qoi_mean, rec.qoi_sd, rec.max_mean_ekld, rec.elapsed_s)


def cmd_run(args) -> int:
    data, problem, config = _resolve(args)
    record = run(problem, config, progress=_progress)
    out = io.write_run(record, data, args.out, record_timing=args.record_timing)
    print(f"{problem.name}: Q = {record.final_qoi_mean:.8g} +- {record.final_qoi_sd:.3g} "
          f"({record.termination}, {len(record.iterations)} iterations) -> {out}")
    if record.termination == "error":
        print(f"error: {record.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.config:
        problem = io.problem_from_spec(io.load_config(args.config)["problem"], args.timeout)
    elif args.problem:
        problem = io.problem_from_spec(args.problem, args.timeout)
    else:
        raise io.ConfigError("either --config or --problem is required")
    res = true_qoi_oracle(problem, max_evals=args.max_evals)
    print(f"{res.value!r}")
    ref = f", reported value {problem.reference_qoi} ({problem.reference_provenance})" \
        if problem.reference_qoi is not None else ""
    print(f"# {problem.name}: {res.method}, error estimate {res.error:.3g}, "
          f"{res.n_evals} evaluations{ref}", file=sys.stderr)
    return EXIT_OK if res.converged else EXIT_RUNTIME


def belief_path(record: RunRecord) -> list:
    """(n_samples, qoi_mean, qoi_sd) for every belief in a run, including the final one."""
    n0 = record.config.n_initial
    rows = [(n0 + k, it.qoi_mean, it.qoi_sd) for k, it in enumerate(record.iterations)]
    if np.isfinite(record.final_qoi_mean):
        rows.append((n0 + len(record.iterations), record.final_qoi_mean, record.final_qoi_sd))
    return rows


def aggregate(records_by_acq: dict, q_star: float) -> list:
    """Per-sample-count mean absolute error and mean QoI sd across seeds."""
    rows = []
    for acq, records in records_by_acq.items():
        table = {}
        for rec in records:
            for n, m, sd in belief_path(rec):
                table.setdefault(n, []).append((abs(m - q_star), sd))
        for n in sorted(table):
            vals = np.array(table[n])
            rows.append({"acquisition": acq, "n_samples": n, "n_runs": len(vals),
                         "mean_abs_error": float(vals[:, 0].mean()),
                         "sd_abs_error": float(vals[:, 0].std(ddof=1)) if len(vals) > 1 else 0.0,
                         "mean_qoi_sd": float(vals[:, 1].mean())})
    return rows


def cmd_compare(args) -> int:
    data, problem, base = _resolve(args)
    seeds = _parse_seeds(args.seeds)
    q_star = true_qoi_oracle(problem).value
    out = Path(args.out)
    records = {}
    for acq in args.acquisitions.split(","):
        records[acq] = []
        for seed in seeds:
            cfg = EngineConfig.from_dict({**base.to_dict(), "acquisition": acq, "master_seed": seed})
            rec = run(problem, cfg, progress=_progress)
            if rec.termination == "error":
                print(f"error: {acq} seed {seed}: {rec.error}", file=sys.stderr)
                return EXIT_RUNTIME
            io.write_run(rec, {**data, "engine": cfg.to_dict()}, out / f"{acq}_seed{seed}")
            records[acq].append(rec)
    rows = aggregate(records, q_star)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    last = {}
    for r in rows:
        last[r["acquisition"]] = r
    for acq, r in last.items():
        print(f"{acq}: n={r['n_samples']} mean |Q - Q*| = {r['mean_abs_error']:.6g} "
              f"(Q* = {q_star:.10g}, {r['n_runs']} runs)")
    return EXIT_OK


def cmd_bench(args) -> int:
    out = Path(args.out)
    results = {}
    status = EXIT_OK
    names = args.problems.split(",") if args.problems else list(BENCH_BUDGETS)
    for name in names:
        problem = get_problem(name)
        n_i, n_max = BENCH_BUDGETS.get(name, (problem.n_initial, problem.n_max))
        cfg = EngineConfig(acquisition=args.acquisition or "ekld", n_initial=n_i, n_max=n_max,
                           master_seed=args.seed if args.seed is not None else 0)
        q_star = true_qoi_oracle(problem).value
        rec = run(problem, cfg, progress=_progress)
        io.write_run(rec, {"problem": name, "engine": cfg.to_dict()}, out / name, oracle=q_star)
        if rec.termination == "error":
            status = EXIT_RUNTIME
        results[name] = {"oracle": q_star, "final_qoi_mean": rec.final_qoi_mean,
                         "final_qoi_sd": rec.final_qoi_sd, "reported_value": problem.reference_qoi,
                         "reported_provenance": problem.reference_provenance,
                         "termination": rec.termination}
        print(f"{name}: Q = {rec.final_qoi_mean:.6g} +- {rec.final_qoi_sd:.3g}, oracle {q_star:.6g}")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench_summary.json", "w") as fh:
        json.dump(io._clean(results), fh, indent=2)
    return status


def cmd_eval(args) -> int:
    problem = io.problem_from_spec(args.problem)
    line = sys.stdin.readline()
    x = np.array([float(t) for t in line.split()])
    if x.size != problem.dim:
        print(f"expected {problem.dim} coordinates, got {x.size}", file=sys.stderr)
        return EXIT_CONFIG
    print(repr(problem.evaluate(x)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bode", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", type=Path)
        sp.add_argument("--problem", help=f"built-in problem: {', '.join(builtin_names())}")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--acquisition", choices=ACQUISITIONS)
        sp.add_argument("--budget", type=int, help="total number of evaluations N")
        sp.add_argument("--timeout", type=float, help="external black-box timeout in seconds")
        if out:
            sp.add_argument("--out", type=Path, default=Path("runs"))

    sp = sub.add_parser("run", help="execute one sequential design run")
    common(sp)
    sp.add_argument("--record-timing", action="store_true",
                    help="write wall-clock seconds into the trace (makes traces non-reproducible)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("oracle", help="reference value of the expectation")
    sp.add_argument("--config", type=Path)
    sp.add_argument("--problem")
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--max-evals", type=int, default=2 ** 22)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("compare", help="EKLD against uncertainty sampling over several seeds")
    common(sp)
    sp.add_argument("--seeds", default="0-4")
    sp.add_argument("--acquisitions", default="ekld,us")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("bench", help="all built-in problems with their reference budgets")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--acquisition", choices=ACQUISITIONS)
    sp.add_argument("--problems", help="comma-separated subset")
    sp.add_argument("--out", type=Path, default=Path("bench"))
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("eval", help="evaluate a built-in on one stdin line (black-box protocol)")
    sp.add_argument("--problem", required=True)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except io.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
