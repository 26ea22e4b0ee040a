"""SQP outer loop with decomposed or exact Newton directions.

One iteration: linearize at the current iterate, restore definiteness of the
stage Hessians if needed, compute a search direction (either the exact
full-horizon Newton direction, or the decomposed approximation with zero
boundary values), select a stepsize by Armijo backtracking on the exact
augmented Lagrangian, and update primal and dual variables with the same
stepsize.  Iterations stop when the KKT residual or the iterate displacement
falls below its tolerance.

For the decomposed direction the driver checks the descent inequality

    grad(merit)^T d  <=  -eta2/2 * ||grad L||^2

at every iteration.  A violation either triggers the penalty-adaptivity
rule (eta2 /= nu, eta1 *= nu^2, overlap widened accordingly) or aborts the
run, depending on configuration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .decomposition import approximate_direction, make_plan
from .exceptions import (AdaptivityFailure, LineSearchFailure, NonDescentError,
                         SolverError, UndefinedRatioError)
from .newton import (NewtonDirection, assemble_newton_data, modify_hessian,
                     solve_full_newton)
from .problem import (DualTrajectory, PenaltyParams, ProblemDef, Trajectory,
                      eval_merit, eval_merit_gradient)

STATUS_KKT = "converged_kkt"
STATUS_STEP = "converged_step"
STATUS_MAX_ITERS = "max_iters"
STATUS_ERROR = "error"

ALPHA_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm parameters; defaults follow the reference experiment protocol."""

    mu: float = 25.0
    eta: PenaltyParams = field(default_factory=lambda: PenaltyParams(10.0, 0.1))
    beta: float = 0.1
    backtrack_factor: float = 0.9
    M: int = 10
    b: int = 5
    kkt_tol: float = 1e-6
    step_tol: float = 1e-6
    max_iters: int = 40
    c: Optional[float] = None          # definiteness-test constant override
    adaptivity: bool = False
    nu: float = 2.0
    rho_hat: float = 0.5
    workers: int = 1
    assert_descent: bool = True
    diagnostics: bool = False
    gamma_step: float = 2.0

    def __post_init__(self):
        if not 0 < self.beta < 0.5:
            raise ValueError(f"beta must lie in (0, 1/2), got {self.beta}")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError(
                f"backtrack factor must lie in (0, 1), got {self.backtrack_factor}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.adaptivity and not self.nu > 1:
            raise ValueError(f"nu must exceed 1, got {self.nu}")
        if not 0 < self.rho_hat < 1:
            raise ValueError(f"rho_hat must lie in (0, 1), got {self.rho_hat}")


@dataclass
class IterationRecord:
    """One row of the convergence history."""

    iteration: int
    kkt_residual: float
    merit: float
    stepsize: Optional[float] = None
    gamma: Optional[float] = None
    dir_err_ratio: Optional[float] = None
    wall_ms: float = 0.0
    step_norm: Optional[float] = None  # diagnostic, not serialized


@dataclass
class SolveReport:
    """Iteration history plus final iterate and termination status."""

    records: List[IterationRecord]
    z: Trajectory
    lam: DualTrajectory
    status: str
    descent_violations: int = 0
    error: Optional[str] = None

    @property
    def converged(self) -> bool:
        return self.status in (STATUS_KKT, STATUS_STEP)

    @property
    def iterations(self) -> int:
        return sum(1 for r in self.records if r.stepsize is not None)

    @property
    def final_kkt(self) -> float:
        return self.records[-1].kkt_residual

    @property
    def total_ms(self) -> float:
        return sum(r.wall_ms for r in self.records)


@dataclass
class SolverState:
    """Mutable loop state owned by one solve."""

    z: Trajectory
    lam: DualTrajectory
    tau: int = 0


def adapt_penalties(cfg: SolverConfig, nu: float) -> SolverConfig:
    """Penalty rescaling after a failed descent check.

    eta2 shrinks by nu, eta1 grows by nu^2, and the overlap grows by
    ceil(4 ln(nu) / ln(1/rho_hat)) to shrink the direction error accordingly.
    """
    if not nu > 1:
        raise ValueError(f"nu must exceed 1, got {nu}")
    eta = PenaltyParams(cfg.eta.eta1 * nu * nu, cfg.eta.eta2 / nu)
    db = math.ceil(4.0 * math.log(nu) / math.log(1.0 / cfg.rho_hat))
    return replace(cfg, eta=eta, b=cfg.b + db)


MERIT_NOISE = 10.0 * np.finfo(float).eps


def armijo_backtrack(merit_along: Callable[[float], float], merit0: float,
                     slope: float, beta: float, factor: float,
                     alpha_floor: float = ALPHA_FLOOR) -> Tuple[float, float]:
    """Largest alpha in {1, factor, factor^2, ...} passing the Armijo test.

    ``merit_along(alpha)`` evaluates the merit at the trial point;
    ``slope`` is the directional derivative at alpha = 0 and must be
    negative.  The comparison carries an absolute allowance of a few ulps of
    the merit value: once the predicted decrease drops below floating-point
    resolution the exact test is not evaluable and backtracking further
    would only chase rounding noise.
    """
    if not slope < 0:
        raise NonDescentError(
            f"directional derivative {slope:.6e} is not negative")
    noise = MERIT_NOISE * abs(merit0)
    alpha = 1.0
    while True:
        trial = merit_along(alpha)
        if trial <= merit0 + beta * alpha * slope + noise:
            return alpha, trial
        alpha *= factor
        if alpha < alpha_floor:
            raise LineSearchFailure(
                f"stepsize underflowed below {alpha_floor:g}")


def line_search(p: ProblemDef, z: Trajectory, lam: DualTrajectory,
                direction: NewtonDirection, eta: PenaltyParams, beta: float,
                factor: float, merit0: Optional[float] = None,
                merit_grad=None) -> Tuple[float, float]:
    """Armijo backtracking on the augmented Lagrangian along ``direction``.

    Returns (alpha, merit value at the accepted point).  Raises
    :class:`NonDescentError` when the direction is not a descent direction
    and :class:`LineSearchFailure` when the stepsize underflows.
    """
    if merit_grad is None:
        merit_grad = eval_merit_gradient(p, z, lam, eta)
    mz, ml = merit_grad
    slope = float(mz @ direction.dz + ml @ direction.dlam)
    if merit0 is None:
        merit0 = eval_merit(p, z, lam, eta)
    dx, du, dl = direction.stage_arrays(p.N, p.n_x, p.n_u)

    def merit_along(alpha: float) -> float:
        trial_z = Trajectory(z.x + alpha * dx, z.u + alpha * du)
        trial_lam = DualTrajectory(lam.lam + alpha * dl)
        return eval_merit(p, trial_z, trial_lam, eta)

    return armijo_backtrack(merit_along, merit0, slope, beta, factor)


def direction_error_ratio(exact: NewtonDirection,
                          approx: NewtonDirection) -> float:
    denom = exact.norm()
    if denom == 0.0:
        raise UndefinedRatioError("exact Newton direction is zero")
    ddz = approx.dz - exact.dz
    ddl = approx.dlam - exact.dlam
    return float(np.sqrt(ddz @ ddz + ddl @ ddl)) / denom


def direction_error_diagnostic(p: ProblemDef, z: Trajectory,
                               lam: DualTrajectory, cfg: SolverConfig) -> float:
    """Relative error of the decomposed direction against the exact one."""
    nd = modify_hessian(assemble_newton_data(p, z, lam), c=cfg.c,
                        gamma_step=cfg.gamma_step)
    plan = make_plan(p.N, cfg.M, cfg.b)
    exact = solve_full_newton(nd)
    approx = approximate_direction(nd, plan, cfg.mu, workers=cfg.workers, c=cfg.c)
    return direction_error_ratio(exact, approx)


def _pin_initial_state(p: ProblemDef, z: Trajectory):
    z.x[0] = p.x0


class _StepOutcome:
    __slots__ = ("record", "cfg", "violations")

    def __init__(self, record, cfg, violations):
        self.record = record
        self.cfg = cfg
        self.violations = violations


def _compute_direction(p, nd, plan, cfg, mode):
    if mode == "centralized":
        return solve_full_newton(nd)
    return approximate_direction(nd, plan, cfg.mu, workers=cfg.workers, c=cfg.c)


def _step(p: ProblemDef, state: SolverState, cfg: SolverConfig, mode: str,
          kkt_res: float, merit0: float) -> _StepOutcome:
    """Lines 3-9 of the outer loop: linearize, direct, line-search, update."""
    t0 = time.perf_counter()
    z, lam = state.z, state.lam
    nd = modify_hessian(assemble_newton_data(p, z, lam), c=cfg.c,
                        gamma_step=cfg.gamma_step)
    plan = make_plan(p.N, cfg.M, cfg.b) if mode == "fotd" else None
    violations = 0
    adapts = 0
    while True:
        direction = _compute_direction(p, nd, plan, cfg, mode)
        merit_grad = eval_merit_gradient(p, z, lam, cfg.eta)
        slope = float(merit_grad[0] @ direction.dz
                      + merit_grad[1] @ direction.dlam)
        if mode != "fotd" or slope <= -0.5 * cfg.eta.eta2 * kkt_res ** 2:
            break
        violations += 1
        if cfg.adaptivity:
            adapts += 1
            if adapts > 30:
                raise AdaptivityFailure(
                    "descent inequality still violated after 30 rescalings")
            cfg = adapt_penalties(cfg, cfg.nu)
            cfg = replace(cfg, b=min(cfg.b, p.N - 1))
            plan = make_plan(p.N, cfg.M, cfg.b)
            merit0 = eval_merit(p, z, lam, cfg.eta)
            continue
        if cfg.assert_descent:
            raise NonDescentError(
                f"descent inequality violated: slope {slope:.6e} > "
                f"{-0.5 * cfg.eta.eta2 * kkt_res ** 2:.6e}")
        break

    ratio = None
    if cfg.diagnostics and mode == "fotd":
        ratio = direction_error_ratio(solve_full_newton(nd), direction)

    alpha, _ = line_search(p, z, lam, direction, cfg.eta, cfg.beta,
                           cfg.backtrack_factor, merit0=merit0,
                           merit_grad=merit_grad)
    dx, du, dl = direction.stage_arrays(p.N, p.n_x, p.n_u)
    z.x += alpha * dx
    z.u += alpha * du
    lam.lam += alpha * dl
    _pin_initial_state(p, z)
    record = IterationRecord(
        iteration=state.tau, kkt_residual=kkt_res, merit=merit0,
        stepsize=alpha, gamma=nd.gamma_applied, dir_err_ratio=ratio,
        wall_ms=1e3 * (time.perf_counter() - t0),
        step_norm=alpha * direction.norm(),
    )
    state.tau += 1
    return _StepOutcome(record, cfg, violations)


def fotd_step(p: ProblemDef, state: SolverState, cfg: SolverConfig):
    """One decomposed SQP iteration; returns (record, possibly-adapted cfg).

    ``state`` is updated in place.  The iterate must satisfy x_0 = x0bar on
    entry, which the update preserves.
    """
    from .problem import _merit_terms
    lagr, gz, gl = _merit_terms(p, state.z, state.lam)
    res = float(np.sqrt(gz @ gz + gl @ gl))
    merit = lagr + 0.5 * cfg.eta.eta1 * float(gl @ gl) \
        + 0.5 * cfg.eta.eta2 * float(gz @ gz)
    out = _step(p, state, cfg, "fotd", res, merit)
    return out.record, out.cfg


def solve(p: ProblemDef, cfg: SolverConfig, init, mode: str = "fotd") -> SolveReport:
    """Run the outer loop from ``init = (z0, lam0)`` until a stop condition.

    ``mode`` selects the decomposed direction ("fotd") or the exact one
    ("centralized").  The initial state component of z0 is overwritten with
    the problem's initial state.  Solver failures are reported with
    status "error" and the history intact.
    """
    if mode not in ("fotd", "centralized"):
        raise ValueError(f"unknown mode {mode!r}")
    from .problem import _merit_terms
    z0, lam0 = init
    state = SolverState(z0.copy(), lam0.copy())
    _pin_initial_state(p, state.z)
    records: List[IterationRecord] = []
    violations = 0
    cfg_cur = cfg
    status = STATUS_MAX_ITERS
    error = None
    while True:
        t0 = time.perf_counter()
        lagr, gz, gl = _merit_terms(p, state.z, state.lam)
        res = float(np.sqrt(gz @ gz + gl @ gl))
        merit = lagr + 0.5 * cfg_cur.eta.eta1 * float(gl @ gl) \
            + 0.5 * cfg_cur.eta.eta2 * float(gz @ gz)
        eval_ms = 1e3 * (time.perf_counter() - t0)
        if res <= cfg_cur.kkt_tol:
            records.append(IterationRecord(state.tau, res, merit, wall_ms=eval_ms))
            status = STATUS_KKT
            break
        if state.tau >= cfg_cur.max_iters:
            records.append(IterationRecord(state.tau, res, merit, wall_ms=eval_ms))
            status = STATUS_MAX_ITERS
            break
        try:
            out = _step(p, state, cfg_cur, mode, res, merit)
        except SolverError as exc:
            records.append(IterationRecord(state.tau, res, merit, wall_ms=eval_ms))
            status = STATUS_ERROR
            error = str(exc)
            break
        out.record.wall_ms += eval_ms
        records.append(out.record)
        violations += out.violations
        cfg_cur = out.cfg
        if out.record.step_norm <= cfg_cur.step_tol:
            t1 = time.perf_counter()
            lagr, gz, gl = _merit_terms(p, state.z, state.lam)
            res = float(np.sqrt(gz @ gz + gl @ gl))
            merit = lagr + 0.5 * cfg_cur.eta.eta1 * float(gl @ gl) \
                + 0.5 * cfg_cur.eta.eta2 * float(gz @ gz)
            records.append(IterationRecord(
                state.tau, res, merit, wall_ms=1e3 * (time.perf_counter() - t1)))
            status = STATUS_STEP
            break
    return SolveReport(records, state.z, state.lam, status,
                       descent_violations=violations, error=error)
