"""Overlapping Schwarz baseline: nonlinear subproblems solved to optimality.

Each outer iteration freezes boundary values from the current full-horizon
iterate, solves the nonlinear truncation of the problem on every extended
interval to optimality (inner SQP with warm start), and composes the
exclusive parts into the next iterate.  The truncated problem on [m1, m2]
keeps the original stage costs and dynamics; its initial state is pinned to
the boundary state and, unless the interval reaches the end of the horizon,
its terminal cost is adjusted to

    g_m2(x, ubar) - lambar^T f_m2(x, ubar) + mu/2 ||x - xbar||^2,

where (xbar, ubar, lambar) are the frozen terminal boundary values.

The one-Newton-step variant replaces the inner solve-to-optimality with a
single Newton step of each truncated problem; starting from the same
iterate it reproduces the decomposed SQP update exactly, which is exercised
as an equivalence test.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .decomposition import DecompositionPlan, compose, decompose, make_plan
from .driver import (STATUS_ERROR, STATUS_KKT, STATUS_MAX_ITERS, STATUS_STEP,
                     IterationRecord, SolveReport, SolverConfig, solve)
from .exceptions import SolverError, SubproblemFailure
from .newton import assemble_newton_data, solve_full_newton
from .problem import DualTrajectory, ProblemDef, Trajectory, _merit_terms

SCHWARZ_BUDGET = 30
INNER_TOL = 1e-8
INNER_MAX_ITERS = 50


@dataclass(frozen=True)
class NonlinearSubproblem:
    """Nonlinear truncation of ``parent`` onto [m1, m2] with boundary data.

    ``x_end``, ``u_end`` and ``lam_next`` are the frozen terminal boundary
    values; they are None when the interval reaches the end of the horizon,
    in which case the original terminal cost applies.
    """

    parent: ProblemDef
    m1: int
    m2: int
    mu: float
    x_start: np.ndarray
    x_end: Optional[np.ndarray] = None
    u_end: Optional[np.ndarray] = None
    lam_next: Optional[np.ndarray] = None

    @property
    def has_adjusted_terminal(self) -> bool:
        return self.m2 < self.parent.N


def subproblem_from_iterate(p: ProblemDef, plan: DecompositionPlan, i: int,
                            mu: float, z: Trajectory,
                            lam: DualTrajectory) -> NonlinearSubproblem:
    """Boundary values for interval i taken from the current full iterate."""
    m1, m2 = plan.m1[i], plan.m2[i]
    if m2 == plan.N:
        return NonlinearSubproblem(p, m1, m2, mu, z.x[m1].copy())
    return NonlinearSubproblem(p, m1, m2, mu, z.x[m1].copy(), z.x[m2].copy(),
                               z.u[m2].copy(), lam.lam[m2 + 1].copy())


def truncated_problem(sub: NonlinearSubproblem) -> ProblemDef:
    """Express the nonlinear subproblem as a standalone problem definition."""
    p = sub.parent
    off = sub.m1
    T = sub.m2 - sub.m1
    nx = p.n_x

    if not sub.has_adjusted_terminal:
        def stage_cost(k, x, u=None):
            return p.stage_cost(off + k, x) if k == T else p.stage_cost(off + k, x, u)

        def cost_gradient(k, x, u=None):
            return (p.cost_gradient(off + k, x) if k == T
                    else p.cost_gradient(off + k, x, u))

        def cost_hessian(k, x, u=None):
            return (p.cost_hessian(off + k, x) if k == T
                    else p.cost_hessian(off + k, x, u))
    else:
        m2, mu = sub.m2, sub.mu
        ubar, lbar, xbar = sub.u_end, sub.lam_next, sub.x_end

        def stage_cost(k, x, u=None):
            if k < T:
                return p.stage_cost(off + k, x, u)
            dx = x - xbar
            return (p.stage_cost(m2, x, ubar)
                    - float(lbar @ np.asarray(p.dynamics(m2, x, ubar)))
                    + 0.5 * mu * float(dx @ dx))

        def cost_gradient(k, x, u=None):
            if k < T:
                return p.cost_gradient(off + k, x, u)
            gx, _ = p.cost_gradient(m2, x, ubar)
            A, _ = p.dynamics_jacobians(m2, x, ubar)
            return gx - A.T @ lbar + mu * (x - xbar)

        def cost_hessian(k, x, u=None):
            if k < T:
                return p.cost_hessian(off + k, x, u)
            Qc, _, _ = p.cost_hessian(m2, x, ubar)
            W = np.asarray(p.dynamics_hessian_contraction(m2, x, ubar, lbar))
            return Qc + W[:nx, :nx] + mu * np.eye(nx)

    return ProblemDef(
        N=T, n_x=p.n_x, n_u=p.n_u, x0=sub.x_start,
        stage_cost=stage_cost, cost_gradient=cost_gradient,
        cost_hessian=cost_hessian,
        dynamics=lambda k, x, u: p.dynamics(off + k, x, u),
        dynamics_jacobians=lambda k, x, u: p.dynamics_jacobians(off + k, x, u),
        dynamics_hessian_contraction=(
            lambda k, x, u, lam: p.dynamics_hessian_contraction(off + k, x, u, lam)),
    )


def solve_nonlinear_subproblem(sub: NonlinearSubproblem,
                               warm: Tuple[np.ndarray, np.ndarray, np.ndarray],
                               inner_tol: float = INNER_TOL,
                               inner_max_iters: int = INNER_MAX_ITERS):
    """Solve one subproblem to optimality by an inner centralized SQP.

    ``warm`` is the (x, u, lam) slice of the current full iterate over
    [m1, m2].  Returns the subproblem's (x, u, lam) arrays; raises
    :class:`SubproblemFailure` when the inner loop does not reach
    ``inner_tol`` within its budget.
    """
    trunc = truncated_problem(sub)
    xw, uw, lw = warm
    cfg = SolverConfig(mu=max(sub.mu, 1.0), kkt_tol=inner_tol, step_tol=0.0,
                       max_iters=inner_max_iters, assert_descent=False)
    report = solve(trunc, cfg, (Trajectory(xw.copy(), uw.copy()),
                                DualTrajectory(lw.copy())),
                   mode="centralized")
    if report.status != STATUS_KKT:
        raise SubproblemFailure(
            -1, f"interval [{sub.m1}, {sub.m2}] stopped with "
                f"status={report.status}, residual={report.final_kkt:.3e}")
    return report.z.x, report.z.u, report.lam.lam


def schwarz_solve(p: ProblemDef, cfg: SolverConfig, init,
                  budget: int = SCHWARZ_BUDGET,
                  inner_tol: float = INNER_TOL,
                  inner_max_iters: int = INNER_MAX_ITERS) -> SolveReport:
    """Outer Schwarz iteration: freeze boundaries, solve, compose, repeat.

    Stops on the same KKT/step conditions as the SQP drivers, with a
    (smaller) default iteration budget since every outer iteration solves
    nonlinear subproblems to optimality.
    """
    z0, lam0 = init
    z, lam = z0.copy(), lam0.copy()
    z.x[0] = p.x0
    plan = make_plan(p.N, cfg.M, cfg.b)
    records: List[IterationRecord] = []
    status = STATUS_MAX_ITERS
    error = None
    tau = 0
    while True:
        t0 = time.perf_counter()
        lagr, gz, gl = _merit_terms(p, z, lam)
        res = float(np.sqrt(gz @ gz + gl @ gl))
        merit = lagr + 0.5 * cfg.eta.eta1 * float(gl @ gl) \
            + 0.5 * cfg.eta.eta2 * float(gz @ gz)
        eval_ms = 1e3 * (time.perf_counter() - t0)
        if res <= cfg.kkt_tol:
            records.append(IterationRecord(tau, res, merit, wall_ms=eval_ms))
            status = STATUS_KKT
            break
        if tau >= budget:
            records.append(IterationRecord(tau, res, merit, wall_ms=eval_ms))
            status = STATUS_MAX_ITERS
            break

        t1 = time.perf_counter()
        warms = decompose(z.x, z.u, lam.lam, plan)

        def solve_one(i: int):
            sub = subproblem_from_iterate(p, plan, i, cfg.mu, z, lam)
            try:
                return solve_nonlinear_subproblem(sub, warms[i], inner_tol,
                                                  inner_max_iters)
            except SolverError as exc:
                raise SubproblemFailure(i, str(exc)) from exc

        try:
            if cfg.workers > 1 and plan.M > 1:
                with ThreadPoolExecutor(max_workers=min(cfg.workers, plan.M)) as pool:
                    parts = list(pool.map(solve_one, range(plan.M)))
            else:
                parts = [solve_one(i) for i in range(plan.M)]
        except SolverError as exc:
            records.append(IterationRecord(tau, res, merit, wall_ms=eval_ms))
            status = STATUS_ERROR
            error = str(exc)
            break

        x_new, u_new, lam_new = compose(parts, plan)
        step = float(np.sqrt(np.sum((x_new - z.x) ** 2)
                             + np.sum((u_new - z.u) ** 2)
                             + np.sum((lam_new - lam.lam) ** 2)))
        z = Trajectory(x_new, u_new)
        lam = DualTrajectory(lam_new)
        z.x[0] = p.x0
        records.append(IterationRecord(
            tau, res, merit, stepsize=1.0, gamma=0.0,
            wall_ms=eval_ms + 1e3 * (time.perf_counter() - t1),
            step_norm=step))
        tau += 1
        if step <= cfg.step_tol:
            lagr, gz, gl = _merit_terms(p, z, lam)
            res = float(np.sqrt(gz @ gz + gl @ gl))
            merit = lagr + 0.5 * cfg.eta.eta1 * float(gl @ gl) \
                + 0.5 * cfg.eta.eta2 * float(gz @ gz)
            records.append(IterationRecord(tau, res, merit))
            status = STATUS_STEP
            break
    return SolveReport(records, z, lam, status, error=error)


def one_newton_schwarz_step(p: ProblemDef, z: Trajectory, lam: DualTrajectory,
                            plan: DecompositionPlan, mu: float):
    """One full Newton step of every nonlinear subproblem, then compose.

    Boundary values come from the current iterate and no Hessian
    modification is applied; starting from the same iterate, the result
    coincides with the decomposed SQP update taken with unit stepsize.
    """
    warms = decompose(z.x, z.u, lam.lam, plan)
    parts = []
    for i in range(plan.M):
        sub = subproblem_from_iterate(p, plan, i, mu, z, lam)
        trunc = truncated_problem(sub)
        xw, uw, lw = warms[i]
        nd = assemble_newton_data(trunc, Trajectory(xw, uw), DualTrajectory(lw))
        direction = solve_full_newton(nd)
        dx, du, dl = direction.stage_arrays(trunc.N, trunc.n_x, trunc.n_u)
        parts.append((xw + dx, uw + du, lw + dl))
    x_new, u_new, lam_new = compose(parts, plan)
    return Trajectory(x_new, u_new), DualTrajectory(lam_new)


def boundary_compatibility(p: ProblemDef, parts, plan: DecompositionPlan):
    """Cross-interval compatibility residuals at every interior knot.

    For knot k = n_i the three residuals are the state mismatch
    ||x_i(k) - x_{i-1}(k)|| and the Jacobian-projected multiplier mismatches
    ||A_{k-1}^T (lam_i(k) - lam_{i-1}(k))|| and ||B_{k-1}^T (...)||, with the
    Jacobians evaluated at interval i-1's stage k-1 point.  Composed
    subproblem stationary points form a full-horizon stationary point
    exactly when all residuals vanish.
    """
    out = []
    for i in range(1, plan.M):
        k = plan.knots[i]
        x_prev, u_prev, lam_prev = parts[i - 1]
        x_cur, _, lam_cur = parts[i]
        lo_prev, lo_cur = plan.m1[i - 1], plan.m1[i]
        A, B = p.dynamics_jacobians(k - 1, x_prev[k - 1 - lo_prev],
                                    u_prev[k - 1 - lo_prev])
        dlam = lam_cur[k - lo_cur] - lam_prev[k - lo_prev]
        out.append((
            float(np.linalg.norm(x_cur[k - lo_cur] - x_prev[k - lo_prev])),
            float(np.linalg.norm(A.T @ dlam)),
            float(np.linalg.norm(B.T @ dlam)),
        ))
    return out
