"""Command-line interface: reproducible geodesic/controller experiments.

Subcommands
    geodesic         adaptive geodesic solve with repeat timing (JSON summary)
    simulate         closed-loop run, trajectory CSV + verdict JSON
    validate-metric  pointwise contraction LMI check over a state grid
    bench            endpoint sweep, node-surplus sweep, shooting baseline

Exit codes: 0 success, 1 usage/parse error, 2 numerical failure. The metric
file may also be supplied through the CCM_METRIC_PATH environment variable.
All outputs are deterministic for a fixed config and seed except wall-clock
timing fields.
"""
import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .basis import basis_table, chebyshev_grid
from .controller import (CcmControlSession, CcmController,
                         GeodesicConvergenceError, lqr_design)
from .geodesic import (SolverConfig, shooting_baseline, solve_adaptive,
                       solve_continuation)
from .metric import (MetricFormatError, SingularMetricError, load_metric,
                     validate_lmi)
from .simulator import case_study_system, simulate, stability_verdict

__all__ = ["ExperimentConfig", "main", "cmd_geodesic", "cmd_simulate",
           "cmd_validate_metric", "cmd_bench"]

ENV_METRIC = "CCM_METRIC_PATH"


class UsageError(Exception):
    """Bad flags, unreadable files, malformed vectors: exit code 1."""


class NumericalError(Exception):
    """Solver/validation failure on well-formed input: exit code 2."""


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    metric_path: str = None
    system: str = "case_study"
    controller: str = "ccm"
    x0: np.ndarray = None
    target: np.ndarray = None
    horizon: float = 15.0
    dt_ctrl: float = 1e-3
    dt_int: float = 1e-4
    solver: SolverConfig = None
    out: str = None
    repeats: int = 50
    seed: int = 0
    shooting: bool = False
    segments: tuple = (100,)
    grid_min: float = -10.0
    grid_max: float = 10.0
    grid_step: float = 1.0


_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)} | {"metric"}


def _parse_vector(text, name):
    try:
        vec = np.array([float(p) for p in str(text).split(",")])
    except ValueError:
        raise UsageError("%s must be a comma-separated number list, got %r"
                         % (name, text))
    if vec.size == 0:
        raise UsageError("%s is empty" % name)
    return vec


def _load_config_file(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError("cannot read config file: %s" % exc)
    except json.JSONDecodeError as exc:
        raise UsageError("config file is not valid JSON: %s" % exc)
    if not isinstance(doc, dict):
        raise UsageError("config file must contain a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise UsageError("unknown config keys: %s"
                         % ", ".join(sorted(unknown)))
    return doc


def _build_config(args):
    doc = _load_config_file(args.config) if args.config else {}
    cfg = {}
    cfg["metric_path"] = (args.metric or doc.get("metric")
                          or doc.get("metric_path")
                          or os.environ.get(ENV_METRIC))
    for key in ("system", "controller", "horizon", "dt_ctrl", "dt_int",
                "repeats", "seed", "shooting", "grid_min", "grid_max",
                "grid_step"):
        if key in doc:
            cfg[key] = doc[key]
    if "segments" in doc:
        cfg["segments"] = tuple(int(s) for s in doc["segments"])
    if "out" in doc:
        cfg["out"] = doc["out"]
    if "x0" in doc:
        cfg["x0"] = np.asarray(doc["x0"], dtype=float)
    if "target" in doc:
        cfg["target"] = np.asarray(doc["target"], dtype=float)
    solver_doc = doc.get("solver", {})
    if not isinstance(solver_doc, dict):
        raise UsageError("config key 'solver' must be an object")
    try:
        cfg["solver"] = SolverConfig(**solver_doc)
    except TypeError as exc:
        raise UsageError("bad solver config: %s" % exc)
    # flags override the config file
    if getattr(args, "x0", None) is not None:
        cfg["x0"] = _parse_vector(args.x0, "--x0")
    if getattr(args, "target", None) is not None:
        cfg["target"] = _parse_vector(args.target, "--target")
    for key in ("controller", "out", "repeats", "seed", "horizon",
                "dt_ctrl", "dt_int"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "shooting", False):
        cfg["shooting"] = True
    if getattr(args, "segments", None) is not None:
        try:
            cfg["segments"] = tuple(
                int(s) for s in str(args.segments).split(","))
        except ValueError:
            raise UsageError("--segments expects comma-separated integers, "
                             "got %r" % args.segments)
    config = ExperimentConfig(**cfg)
    if config.controller not in ("ccm", "lqr"):
        raise UsageError("controller must be 'ccm' or 'lqr', got %r"
                         % config.controller)
    if config.system != "case_study":
        raise UsageError("unknown system %r (only 'case_study' is shipped)"
                         % config.system)
    return config


def _require_metric(config):
    if not config.metric_path:
        raise UsageError("no metric file: pass --metric, set it in the "
                         "config, or export %s" % ENV_METRIC)
    try:
        return load_metric(config.metric_path)
    except OSError as exc:
        raise UsageError("cannot read metric file: %s" % exc)


def _emit(doc):
    print(json.dumps(doc, indent=2))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_geodesic(config):
    """Adaptive solve from --target (gamma(0)) to --x0 (gamma(1)), repeated
    for timing; prints a JSON summary, optionally writes the curve CSV."""
    met = _require_metric(config)
    if config.x0 is None:
        raise UsageError("geodesic needs --x0")
    x_end = config.x0
    x_start = (config.target if config.target is not None
               else np.zeros(met.n))
    if x_end.shape != (met.n,) or x_start.shape != (met.n,):
        raise UsageError("endpoints must have dimension %d" % met.n)
    repeats = max(1, int(config.repeats))
    times = []
    sol = None
    for _ in range(repeats):
        sol = solve_adaptive(met, x_start, x_end, config.solver)
        times.append(sol.solve_time)
    summary = {
        "x_start": list(x_start),
        "x_end": list(x_end),
        "accepted_D": sol.D,
        "N": sol.N,
        "energy": sol.energy,
        "uniformity_error": sol.uniformity_error,
        "iterations": sol.iterations,
        "converged": bool(sol.converged),
        "repeats": repeats,
        "solve_time_mean_s": float(np.mean(times)),
        "solve_time_min_s": float(np.min(times)),
    }
    _emit(summary)
    if config.out:
        s = np.linspace(0.0, 1.0, 201)
        V = np.polynomial.chebyshev.chebvander(2.0 * s - 1.0, sol.D)
        G = V @ sol.coefficients.T
        with open(config.out, "w") as fh:
            fh.write("s," + ",".join("x%d" % (i + 1)
                                     for i in range(met.n)) + "\n")
            for k in range(len(s)):
                fh.write(",".join("%.17g" % v
                                  for v in [s[k], *G[k]]) + "\n")
    if not sol.converged:
        raise NumericalError("adaptive solve rejected: best uniformity "
                             "error %.3e" % sol.uniformity_error)
    return 0


def cmd_simulate(config):
    """Closed-loop run; writes the trajectory CSV when --out is given and
    prints the verdict summary."""
    system = case_study_system()
    if config.x0 is None:
        raise UsageError("simulate needs --x0")
    if config.x0.shape != (system.n,):
        raise UsageError("--x0 must have dimension %d" % system.n)
    if config.controller == "ccm":
        met = _require_metric(config)
        try:
            ctl = CcmController(met, system, config=config.solver)
        except ValueError as exc:
            raise NumericalError(str(exc))
        loop = CcmControlSession(ctl)
    else:
        A0 = system.A(np.zeros(system.n), 0.0)
        B0 = system.B(np.zeros(system.n), 0.0)
        try:
            loop = lqr_design(A0, B0, np.eye(system.n), np.eye(system.m))
        except RuntimeError as exc:
            raise NumericalError(str(exc))
    traj = simulate(system, loop, config.x0, horizon=config.horizon,
                    dt_ctrl=config.dt_ctrl, dt_int=config.dt_int)
    if config.out:
        traj.to_csv(config.out)
    verdict = stability_verdict(traj)
    summary = {
        "controller": config.controller,
        "x0": list(config.x0),
        "horizon": config.horizon,
        "dt_ctrl": config.dt_ctrl,
        "dt_int": config.dt_int,
        "steps": int(len(traj.times)),
        "status": traj.status,
        "verdict": verdict,
        "final_state": [float(v) for v in traj.states[-1]]
                       if len(traj.states) else None,
        "mean_solve_time_s": float(np.mean(traj.solve_times))
                             if len(traj.solve_times) else None,
    }
    _emit(summary)
    if traj.status == "controller-failed":
        raise NumericalError("controller failed during the run")
    return 0


def cmd_validate_metric(config):
    """Contraction LMI check on a box grid; exit code mirrors the verdict."""
    met = _require_metric(config)
    system = case_study_system()
    if met.n != system.n:
        raise UsageError("metric dimension %d does not match the system (%d)"
                         % (met.n, system.n))
    axis = np.arange(config.grid_min, config.grid_max + 0.5 * config.grid_step,
                     config.grid_step)
    mesh = np.meshgrid(*([axis] * met.n))
    grid = np.stack([g.ravel() for g in mesh], axis=1)
    report = validate_lmi(met, system, grid)
    _emit({
        "grid": report.grid_description,
        "lambda": met.lam,
        "worst_eigenvalue": report.worst_eigenvalue,
        "worst_point": [float(v) for v in report.worst_point],
        "passed": bool(report.passed),
    })
    if not report.passed:
        raise NumericalError("metric failed the contraction check (worst "
                             "eigenvalue %.3e)" % report.worst_eigenvalue)
    return 0


def _bench_rows(met, config):
    rows = []
    zeros = np.zeros(met.n)
    repeats = max(1, int(config.repeats))
    D_accepted = None
    for m in (1, 3, 5, 7, 9):
        x = float(m) * np.ones(met.n)
        times = []
        sol = None
        for _ in range(repeats):
            sol = solve_adaptive(met, zeros, x, config.solver)
            times.append(sol.solve_time)
        if m == 9:
            D_accepted = sol.D
        rows.append(["endpoint", "%g,%g,%g" % tuple(x), sol.D, sol.N,
                     sol.energy, sol.uniformity_error,
                     float(np.mean(times)), float(np.min(times)),
                     bool(sol.converged)])
    # node-surplus sweep at the degree the adaptive solve accepted: each a
    # is warm-continued up to that same D so the rows differ only in
    # quadrature resolution, not in how far the optimizer got
    x9 = 9.0 * np.ones(met.n)
    base = config.solver if config.solver is not None else SolverConfig()
    for a in (2, 4, 6, 8):
        cfg_a = replace(base, a=a)
        times = []
        sol = None
        for _ in range(repeats):
            sol = solve_continuation(met, zeros, x9, D_accepted, cfg_a)
            times.append(sol.solve_time)
        rows.append(["a-sweep", "a=%d" % a, sol.D, sol.N, sol.energy,
                     sol.uniformity_error, float(np.mean(times)),
                     float(np.min(times)), bool(sol.converged)])
    if config.shooting:
        x1 = np.ones(met.n)
        for S in config.segments:
            res = shooting_baseline(met, zeros, x1, S, config.solver)
            rows.append(["shooting", "segments=%d" % S, "", "",
                         res.energy, res.uniformity_error, res.time,
                         res.time, bool(res.converged)])
        times = []
        sol = None
        for _ in range(repeats):
            sol = solve_adaptive(met, zeros, x1, config.solver)
            times.append(sol.solve_time)
        rows.append(["shooting-ref", "pseudospectral", sol.D, sol.N,
                     sol.energy, sol.uniformity_error,
                     float(np.mean(times)), float(np.min(times)),
                     bool(sol.converged)])
    return rows


def cmd_bench(config):
    """Endpoint sweep {1,3,5,7,9}*(1,..,1), node-surplus sweep a in
    {2,4,6,8} at (9,..,9), and the shooting baseline when requested.
    Non-converged cells are emitted with converged=False, not dropped."""
    met = _require_metric(config)
    rows = _bench_rows(met, config)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sweep", "label", "D", "N", "energy",
                     "uniformity_error", "mean_time_s", "min_time_s",
                     "converged"])
    for row in rows:
        writer.writerow([("%.17g" % v) if isinstance(v, float) else str(v)
                         for v in row])
    text = buf.getvalue()
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing / entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the exit-code contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


def _add_common(sub):
    sub.add_argument("--metric", help="metric JSON file (default: $%s)"
                     % ENV_METRIC)
    sub.add_argument("--config", help="experiment config JSON file")
    sub.add_argument("--out", help="output file path")
    sub.add_argument("--seed", type=int, help="RNG seed recorded for "
                     "randomized sweeps")


def build_parser():
    parser = _Parser(prog="ccmgeo",
                     description="Geodesic CCM controller toolbox")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("geodesic", parents=[], help="adaptive geodesic solve")
    _add_common(p)
    p.add_argument("--x0", help="current state a,b,c (gamma(1))")
    p.add_argument("--target", help="reference state a,b,c (gamma(0), "
                   "default origin)")
    p.add_argument("--repeats", type=int, help="timing repetitions "
                   "(default 50)")

    p = subs.add_parser("simulate", help="closed-loop simulation")
    _add_common(p)
    p.add_argument("--x0", help="initial state a,b,c")
    p.add_argument("--controller", choices=("ccm", "lqr"))
    p.add_argument("--horizon", type=float, help="simulation horizon [s]")
    p.add_argument("--dt-ctrl", dest="dt_ctrl", type=float,
                   help="control period [s]")
    p.add_argument("--dt-int", dest="dt_int", type=float,
                   help="integrator substep [s]")

    p = subs.add_parser("validate-metric", help="contraction LMI grid check")
    _add_common(p)

    p = subs.add_parser("bench", help="solver benchmark sweeps")
    _add_common(p)
    p.add_argument("--repeats", type=int, help="timing repetitions "
                   "(default 50)")
    p.add_argument("--shooting", action="store_true",
                   help="include the shooting baseline")
    p.add_argument("--segments", help="comma-separated shooting segment "
                   "counts (default 100)")
    return parser


_COMMANDS = {
    "geodesic": cmd_geodesic,
    "simulate": cmd_simulate,
    "validate-metric": cmd_validate_metric,
    "bench": cmd_bench,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        config = _build_config(args)
        return _COMMANDS[args.command](config)
    except (UsageError, MetricFormatError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (NumericalError, SingularMetricError,
            GeodesicConvergenceError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
