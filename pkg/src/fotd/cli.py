"""Command-line front end: config parsing, experiment runs, CSV/JSON output.

Subcommands:

* ``solve``  -- one solve per initialization; writes ``run_<i>.csv``
  convergence histories and a ``summary.json``.
* ``sweep``  -- Cartesian product over overlap sizes and terminal penalties;
  per-cell run CSVs plus a ``sweep_summary.csv`` table (per-cell KKT
  residual and time averaged over converged runs).
* ``diag``   -- closed-form diagnostic constants and two self-checks on a
  small instance (one-Newton-step equivalence, direction-error decay in b).

Configs are YAML with three blocks (``problem``, ``solver``, ``run``) and an
optional ``sweep`` block; parsing fills every default so that parse(emit(.))
is the identity on canonical form.  Exit codes: 0 all runs converged,
1 solver failure or non-convergence, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
import yaml

from .benchmarks import (PlateSpec, ToySpec, make_initializations,
                         make_plate_problem, make_toy_problem,
                         toy_case_params)
from .decomposition import make_plan
from .driver import SolveReport, SolverConfig, direction_error_ratio, solve
from .newton import (assemble_newton_data, solve_full_newton, theory_gamma_G,
                     theory_mu_bar)
from .decomposition import approximate_direction
from .problem import DualTrajectory, PenaltyParams, ProblemDef, Trajectory
from .schwarz import one_newton_schwarz_step, schwarz_solve

CSV_HEADER = "iter,kkt_residual,merit,stepsize,gamma,dir_err_ratio,wall_ms"
MODES = ("fotd", "schwarz", "centralized")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_PROBLEM_DEFAULTS_TOY = {"type": "toy", "case": None, "N": None,
                         "C1": None, "C2": None, "d": None}
_PROBLEM_DEFAULTS_PLATE = {
    "type": "plate", "m": 4, "N": 5000, "h_c": 1.0, "kappa_c": 400.0,
    "eps_c": 0.5, "sigma_c": 5.67e-8, "T_c": 300.0, "t_c": 0.01,
    "desired": {"kind": "sin_time"},
}
_SOLVER_DEFAULTS = {
    "mode": "fotd", "mu": 25.0, "eta1": 10.0, "eta2": 0.1, "beta": 0.1,
    "backtrack_factor": 0.9, "M": 10, "b": 5, "kkt_tol": 1e-6,
    "step_tol": 1e-6, "max_iters": 40, "c": None, "adaptivity": False,
    "nu": 2.0, "rho_hat": 0.5, "workers": 1, "gamma_step": 2.0,
    "schwarz_budget": 30,
}
_RUN_DEFAULTS = {"inits": 5, "seed": 0, "out_dir": "out",
                 "diagnostics": False, "assert_level": "on", "timing": True}


def _merge_block(name: str, given: dict, defaults: dict) -> dict:
    out = dict(defaults)
    for key, val in (given or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{name}.{key}'")
        out[key] = val
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Canonical parsed configuration (all defaults materialized)."""

    problem: dict
    mode: str
    solver: SolverConfig
    schwarz_budget: int
    inits: int
    seed: int
    out_dir: str
    diagnostics: bool
    assert_level: str
    timing: bool
    sweep_b: Optional[List[int]] = None
    sweep_mu: Optional[List[float]] = None

    def to_dict(self) -> dict:
        solver = {
            "mode": self.mode, "mu": self.solver.mu,
            "eta1": self.solver.eta.eta1, "eta2": self.solver.eta.eta2,
            "beta": self.solver.beta,
            "backtrack_factor": self.solver.backtrack_factor,
            "M": self.solver.M, "b": self.solver.b,
            "kkt_tol": self.solver.kkt_tol, "step_tol": self.solver.step_tol,
            "max_iters": self.solver.max_iters, "c": self.solver.c,
            "adaptivity": self.solver.adaptivity, "nu": self.solver.nu,
            "rho_hat": self.solver.rho_hat, "workers": self.solver.workers,
            "gamma_step": self.solver.gamma_step,
            "schwarz_budget": self.schwarz_budget,
        }
        run = {"inits": self.inits, "seed": self.seed, "out_dir": self.out_dir,
               "diagnostics": self.diagnostics,
               "assert_level": self.assert_level, "timing": self.timing}
        out = {"problem": dict(self.problem), "solver": solver, "run": run}
        if self.sweep_b is not None or self.sweep_mu is not None:
            out["sweep"] = {"b": self.sweep_b, "mu": self.sweep_mu}
        return out


def _as_assert_level(val) -> str:
    # YAML 1.1 reads bare on/off as booleans; accept both spellings
    if isinstance(val, bool):
        return "on" if val else "off"
    if val in ("on", "off"):
        return val
    raise ConfigError(f"run.assert_level must be 'on' or 'off', got {val!r}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for key in raw:
        if key not in ("problem", "solver", "run", "sweep"):
            raise ConfigError(f"unknown key '{key}'")
    prob_raw = raw.get("problem") or {}
    ptype = prob_raw.get("type")
    if ptype == "toy":
        problem = _merge_block("problem", prob_raw, _PROBLEM_DEFAULTS_TOY)
        if problem["case"] is None and (problem["C1"] is None
                                        or problem["C2"] is None
                                        or problem["d"] is None
                                        or problem["N"] is None):
            raise ConfigError(
                "problem: a toy problem needs either 'case' or explicit "
                "'N', 'C1', 'C2' and 'd'")
    elif ptype == "plate":
        problem = _merge_block("problem", prob_raw, _PROBLEM_DEFAULTS_PLATE)
    else:
        raise ConfigError(f"problem.type must be 'toy' or 'plate', got {ptype!r}")

    s = _merge_block("solver", raw.get("solver"), _SOLVER_DEFAULTS)
    if s["mode"] not in MODES:
        raise ConfigError(f"solver.mode must be one of {MODES}, got {s['mode']!r}")
    run = _merge_block("run", raw.get("run"), _RUN_DEFAULTS)
    sweep = raw.get("sweep") or {}
    for key in sweep:
        if key not in ("b", "mu"):
            raise ConfigError(f"unknown key 'sweep.{key}'")
    try:
        solver = SolverConfig(
            mu=float(s["mu"]),
            eta=PenaltyParams(float(s["eta1"]), float(s["eta2"])),
            beta=float(s["beta"]),
            backtrack_factor=float(s["backtrack_factor"]),
            M=int(s["M"]), b=int(s["b"]),
            kkt_tol=float(s["kkt_tol"]), step_tol=float(s["step_tol"]),
            max_iters=int(s["max_iters"]),
            c=None if s["c"] is None else float(s["c"]),
            adaptivity=bool(s["adaptivity"]), nu=float(s["nu"]),
            rho_hat=float(s["rho_hat"]), workers=int(s["workers"]),
            assert_descent=_as_assert_level(run["assert_level"]) == "on",
            diagnostics=bool(run["diagnostics"]),
            gamma_step=float(s["gamma_step"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"solver: {exc}") from exc
    return ExperimentConfig(
        problem=problem, mode=s["mode"], solver=solver,
        schwarz_budget=int(s["schwarz_budget"]),
        inits=int(run["inits"]), seed=int(run["seed"]),
        out_dir=str(run["out_dir"]),
        diagnostics=bool(run["diagnostics"]),
        assert_level=_as_assert_level(run["assert_level"]),
        timing=bool(run["timing"]),
        sweep_b=None if sweep.get("b") is None else [int(v) for v in sweep["b"]],
        sweep_mu=None if sweep.get("mu") is None else [float(v) for v in sweep["mu"]],
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return config_from_dict(raw)


def dump_config(cfg: ExperimentConfig, path: str):
    _atomic_write(path, yaml.safe_dump(cfg.to_dict(), sort_keys=True))


def build_problem(problem: dict) -> ProblemDef:
    """Instantiate the benchmark named by a canonical problem block."""
    if problem["type"] == "toy":
        if problem.get("case") is not None:
            spec, _ = toy_case_params(int(problem["case"]), N=problem.get("N"))
            return make_toy_problem(spec)
        d = problem["d"]
        kind, scale = d.get("kind"), float(d.get("scale", 1.0))
        if kind == "constant":
            fn = lambda k: scale
        elif kind == "sin":
            fn = lambda k: scale * math.sin(k)
        elif kind == "sin2":
            fn = lambda k: scale * math.sin(k) ** 2
        elif kind == "zero":
            fn = lambda k: 0.0
        else:
            raise ConfigError(f"problem.d.kind must be constant/sin/sin2/zero, "
                              f"got {kind!r}")
        return make_toy_problem(ToySpec(N=int(problem["N"]),
                                        C1=float(problem["C1"]),
                                        C2=float(problem["C2"]), d=fn))
    desired = problem.get("desired") or {"kind": "sin_time"}
    kind = desired.get("kind", "sin_time")
    if kind == "sin_time":
        fn = lambda node, t: math.sin(t)
    elif kind == "zero":
        fn = lambda node, t: 0.0
    else:
        raise ConfigError(f"problem.desired.kind must be sin_time/zero, got {kind!r}")
    spec = PlateSpec(m=int(problem["m"]), N=int(problem["N"]),
                     h_c=float(problem["h_c"]), kappa_c=float(problem["kappa_c"]),
                     eps_c=float(problem["eps_c"]), sigma_c=float(problem["sigma_c"]),
                     T_c=float(problem["T_c"]), t_c=float(problem["t_c"]),
                     desired=fn)
    return make_plate_problem(spec)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path)) or "."
    tmp = tempfile.NamedTemporaryFile("w", dir=d, delete=False, newline="")
    try:
        tmp.write(text)
        tmp.close()
        os.replace(tmp.name, path)
    except BaseException:
        tmp.close()
        os.unlink(tmp.name)
        raise


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.17g}"


def report_to_csv(report: SolveReport, timing: bool = True) -> str:
    lines = [CSV_HEADER]
    for r in report.records:
        wall = r.wall_ms if timing else 0.0
        lines.append(",".join([
            str(r.iteration), _fmt(r.kkt_residual), _fmt(r.merit),
            _fmt(r.stepsize), _fmt(r.gamma), _fmt(r.dir_err_ratio), _fmt(wall),
        ]))
    return "\n".join(lines) + "\n"


def _sig6(v):
    if v is None or isinstance(v, (str, bool, int)):
        return v
    return float(f"{float(v):.6g}")


def _run_one(p: ProblemDef, cfg: ExperimentConfig, mode: str, init) -> SolveReport:
    if mode == "schwarz":
        return schwarz_solve(p, cfg.solver, init, budget=cfg.schwarz_budget)
    return solve(p, cfg.solver, init, mode=mode)


def _summarize(report: SolveReport, mode: str, init_idx: int, csv_name: str) -> dict:
    return {
        "init": init_idx, "mode": mode, "status": report.status,
        "final_kkt": _sig6(report.final_kkt),
        "iterations": report.iterations,
        "total_ms": _sig6(report.total_ms),
        "csv": csv_name,
        **({"error": report.error} if report.error else {}),
    }


def cmd_solve(config_path: str, overrides: Optional[dict] = None) -> int:
    """Run one solve per initialization; 0 iff every run converged."""
    try:
        cfg = _apply_overrides(load_config(config_path), overrides or {})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    modes = (overrides or {}).get("modes") or [cfg.mode]
    os.makedirs(cfg.out_dir, exist_ok=True)
    p = build_problem(cfg.problem)
    inits = make_initializations(p, cfg.inits, cfg.seed)
    runs, comparisons = [], []
    all_ok, had_error = True, False
    finals = {}
    for i, init in enumerate(inits):
        for mode in modes:
            name = f"run_{i}.csv" if len(modes) == 1 else f"run_{i}_{mode}.csv"
            report = _run_one(p, cfg, mode, init)
            _atomic_write(os.path.join(cfg.out_dir, name),
                          report_to_csv(report, timing=cfg.timing))
            runs.append(_summarize(report, mode, i, name))
            finals[(i, mode)] = report
            all_ok &= report.converged
            had_error |= report.status == "error"
        if len(modes) > 1:
            za = finals[(i, modes[0])]
            for mode in modes[1:]:
                zb = finals[(i, mode)]
                diff = max(float(np.max(np.abs(za.z.x - zb.z.x))),
                           float(np.max(np.abs(za.z.u - zb.z.u))))
                comparisons.append({"init": i, "modes": [modes[0], mode],
                                    "final_iterate_max_diff": _sig6(diff)})
    summary = {"runs": runs, "all_converged": all_ok}
    if comparisons:
        summary["comparisons"] = comparisons
    _atomic_write(os.path.join(cfg.out_dir, "summary.json"),
                  json.dumps(summary, indent=2) + "\n")
    return 0 if all_ok else 1


def cmd_sweep(config_path: str, sweep: Optional[dict] = None,
              overrides: Optional[dict] = None) -> int:
    """Cartesian (b, mu) sweep; per-cell CSVs plus an averaged summary table."""
    try:
        cfg = _apply_overrides(load_config(config_path), overrides or {})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    sweep = sweep or {}
    bs = sweep.get("b") or cfg.sweep_b or [cfg.solver.b]
    mus = sweep.get("mu") or cfg.sweep_mu or [cfg.solver.mu]
    os.makedirs(cfg.out_dir, exist_ok=True)
    p = build_problem(cfg.problem)
    inits = make_initializations(p, cfg.inits, cfg.seed)
    rows = []
    all_ok = True
    for b in bs:
        for mu in mus:
            cell_dir = os.path.join(cfg.out_dir, f"b{b}_mu{mu:g}")
            os.makedirs(cell_dir, exist_ok=True)
            cell_cfg = replace(cfg.solver, b=int(b), mu=float(mu))
            kkts, times, ratios, n_conv = [], [], [], 0
            for i, init in enumerate(inits):
                if cfg.mode == "schwarz":
                    report = schwarz_solve(p, cell_cfg, init,
                                           budget=cfg.schwarz_budget)
                else:
                    report = solve(p, cell_cfg, init, mode=cfg.mode)
                _atomic_write(os.path.join(cell_dir, f"run_{i}.csv"),
                              report_to_csv(report, timing=cfg.timing))
                if report.converged:
                    n_conv += 1
                    kkts.append(report.final_kkt)
                    times.append(report.total_ms)
                    ratios.extend(r.dir_err_ratio for r in report.records
                                  if r.dir_err_ratio is not None)
                all_ok &= report.converged
            rows.append({
                "b": b, "mu": mu, "runs": len(inits), "converged": n_conv,
                "mean_kkt_residual": _sig6(float(np.mean(kkts))) if kkts else "",
                "mean_total_ms": _sig6(float(np.mean(times))) if times else "",
                "mean_dir_err_ratio": (_sig6(float(np.mean(ratios)))
                                       if ratios else ""),
            })
    header = ("b,mu,runs,converged,mean_kkt_residual,mean_total_ms,"
              "mean_dir_err_ratio")
    lines = [header] + [",".join(str(row[k]) for k in header.split(","))
                        for row in rows]
    _atomic_write(os.path.join(cfg.out_dir, "sweep_summary.csv"),
                  "\n".join(lines) + "\n")
    _atomic_write(os.path.join(cfg.out_dir, "sweep_summary.json"),
                  json.dumps({"cells": rows, "all_converged": all_ok},
                             indent=2) + "\n")
    return 0 if all_ok else 1


def cmd_diag(config_path: str, gamma_c: float = 1.0, t: float = 1.0,
             upsilon: float = 2.0) -> int:
    """Print diagnostic constants and run two small-instance self-checks."""
    try:
        load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"gamma_G(gamma_C={gamma_c:g}, t={t:g}, upsilon={upsilon:g}) = "
          f"{theory_gamma_G(gamma_c, t, upsilon):.6g}")
    print(f"mu_bar(gamma_C={gamma_c:g}, t={t:g}, upsilon={upsilon:g}) = "
          f"{theory_mu_bar(gamma_c, t, upsilon):.6g}")

    spec, _ = toy_case_params(1, N=120)
    p = make_toy_problem(spec)
    rng = np.random.default_rng(7)
    z = Trajectory(rng.uniform(-2, 2, (p.N + 1, 1)), rng.uniform(-2, 2, (p.N, 1)))
    z.x[0] = p.x0
    lam = DualTrajectory(rng.uniform(-2, 2, (p.N + 1, 1)))
    mu = 25.0

    plan = make_plan(p.N, 6, 2)
    nd = assemble_newton_data(p, z, lam)
    z_s, lam_s = one_newton_schwarz_step(p, z, lam, plan, mu)
    d = approximate_direction(nd, plan, mu)
    dx, du, dl = d.stage_arrays(p.N, p.n_x, p.n_u)
    diff = max(float(np.max(np.abs(z_s.x - (z.x + dx)))),
               float(np.max(np.abs(z_s.u - (z.u + du)))),
               float(np.max(np.abs(lam_s.lam - (lam.lam + dl)))))
    ok7 = diff <= 1e-9
    print(f"one_newton_equivalence: max_diff={diff:.3e} tol=1e-09 "
          f"{'PASS' if ok7 else 'FAIL'}")

    exact = solve_full_newton(nd)
    ratios = []
    for b in (1, 2, 4, 8):
        approx = approximate_direction(nd, make_plan(p.N, 6, b), mu)
        ratios.append(direction_error_ratio(exact, approx))
    logs = np.log(ratios)
    slope = float(np.polyfit([1, 2, 4, 8], logs, 1)[0])
    ok_decay = slope < 0 and all(b > a for a, b in zip(logs[1:], logs[:-1]))
    print("b_decay: ratios=[" + ", ".join(f"{r:.3e}" for r in ratios)
          + f"] slope={slope:.3f} {'PASS' if ok_decay else 'FAIL'}")
    return 0 if (ok7 and ok_decay) else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _apply_overrides(cfg: ExperimentConfig, ov: dict) -> ExperimentConfig:
    solver = cfg.solver
    updates = {}
    if ov.get("out") is not None:
        updates["out_dir"] = ov["out"]
    if ov.get("seed") is not None:
        updates["seed"] = int(ov["seed"])
    if ov.get("workers") is not None:
        solver = replace(solver, workers=int(ov["workers"]))
    if ov.get("assert_level") is not None:
        updates["assert_level"] = ov["assert_level"]
        solver = replace(solver, assert_descent=ov["assert_level"] == "on")
    if ov.get("diagnostics"):
        updates["diagnostics"] = True
        solver = replace(solver, diagnostics=True)
    if ov.get("no_timing"):
        updates["timing"] = False
    modes = ov.get("modes")
    if modes:
        for m in modes:
            if m not in MODES:
                raise ConfigError(f"--mode must be one of {MODES}, got {m!r}")
        updates["mode"] = modes[0]
    return replace(cfg, solver=solver, **updates)


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v]


def _add_common(sp):
    sp.add_argument("--config", required=True, help="YAML experiment config")
    sp.add_argument("--out", help="output directory override")
    sp.add_argument("--mode", action="append",
                    help="solver mode override; repeat for side-by-side runs")
    sp.add_argument("--seed", type=int, help="initialization seed override")
    sp.add_argument("--workers", type=int, help="subproblem worker threads")
    sp.add_argument("--assert-level", choices=["off", "on"], dest="assert_level")
    sp.add_argument("--diagnostics", action="store_true", default=None,
                    help="record per-iteration direction-error ratios")
    sp.add_argument("--no-timing", action="store_true", default=None,
                    help="zero wall_ms columns for byte-stable output")


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fotd",
        description="Temporal-decomposition SQP solver for long-horizon "
                    "nonlinear dynamic programs")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("solve", help="run configured solves"))
    sp = sub.add_parser("sweep", help="sweep overlap size and penalty")
    _add_common(sp)
    sp.add_argument("--b", type=_int_list, help="comma list of overlap sizes")
    sp.add_argument("--mu", type=_float_list, help="comma list of penalties")
    sp = sub.add_parser("diag", help="diagnostic constants and self-checks")
    sp.add_argument("--config", required=True)
    sp.add_argument("--gamma-c", type=float, default=1.0, dest="gamma_c")
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--upsilon", type=float, default=2.0)
    args = parser.parse_args(argv)

    if args.command == "diag":
        return cmd_diag(args.config, gamma_c=args.gamma_c, t=args.t,
                        upsilon=args.upsilon)
    overrides = {"out": args.out, "modes": args.mode, "seed": args.seed,
                 "workers": args.workers, "assert_level": args.assert_level,
                 "diagnostics": args.diagnostics, "no_timing": args.no_timing}
    if args.command == "solve":
        return cmd_solve(args.config, overrides)
    sweep = {"b": args.b, "mu": args.mu}
    return cmd_sweep(args.config, sweep, overrides)


if __name__ == "__main__":
    sys.exit(main())
