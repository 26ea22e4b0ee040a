import numpy as np
import pytest

from fotd.benchmarks import ToySpec, make_initializations, make_toy_problem
from fotd.decomposition import approximate_direction, decompose, make_plan
from fotd.driver import SolverConfig, solve
from fotd.newton import assemble_newton_data
from fotd.problem import DualTrajectory, Trajectory, kkt_residual
from fotd.schwarz import (boundary_compatibility, one_newton_schwarz_step,
                          schwarz_solve, solve_nonlinear_subproblem,
                          subproblem_from_iterate, truncated_problem)

from oracles import (central_diff, dense_full_newton, make_random_lq,
                     newton_solve_to_kkt, random_point)


def toy(N, C1=8.0, C2=1.0, d=lambda k: 1.0):
    return make_toy_problem(ToySpec(N=N, C1=C1, C2=C2, d=d))


def test_truncated_problem_terminal_derivatives_match_fd():
    p = toy(N=10, d=lambda k: 0.2 * k)
    z, lam = random_point(p, seed=0)
    plan = make_plan(10, 2, 2)
    sub = subproblem_from_iterate(p, plan, 0, 3.0, z, lam)
    trunc = truncated_problem(sub)
    T = sub.m2 - sub.m1
    x = np.array([0.37])
    g = trunc.cost_gradient(T, x)
    fd = central_diff(lambda v: trunc.stage_cost(T, v), x)
    np.testing.assert_allclose(g, fd, atol=1e-6)
    h = trunc.cost_hessian(T, x)
    fdh = central_diff(lambda v: float(trunc.cost_gradient(T, v)[0]), x)
    np.testing.assert_allclose(h.ravel(), fdh, atol=1e-5)


def test_inner_solver_returns_warm_start_at_subproblem_optimum():
    p = toy(N=12)
    z, lam = newton_solve_to_kkt(p, tol=1e-13)
    plan = make_plan(12, 3, 2)
    warms = decompose(z.x, z.u, lam.lam, plan)
    sub = subproblem_from_iterate(p, plan, 1, 25.0, z, lam)
    xs, us, ls = solve_nonlinear_subproblem(sub, warms[1])
    np.testing.assert_array_equal(xs, warms[1][0])
    np.testing.assert_array_equal(us, warms[1][1])
    np.testing.assert_array_equal(ls, warms[1][2])


def test_inner_solver_one_iteration_on_lq_parent():
    p, _ = make_random_lq(12, 2, 1, seed=1)
    z, lam = random_point(p, seed=2)
    plan = make_plan(12, 3, 2)
    warms = decompose(z.x, z.u, lam.lam, plan)
    sub = subproblem_from_iterate(p, plan, 1, 5.0, z, lam)
    trunc = truncated_problem(sub)
    report = solve(trunc, SolverConfig(mu=5.0, kkt_tol=1e-8, step_tol=0.0,
                                       max_iters=50, assert_descent=False),
                   (Trajectory(warms[1][0].copy(), warms[1][1].copy()),
                    DualTrajectory(warms[1][2].copy())), mode="centralized")
    assert report.status == "converged_kkt"
    assert report.iterations == 1


def test_subproblem_with_exact_boundaries_returns_truncated_solution():
    p = toy(N=20)
    zs, ls = newton_solve_to_kkt(p, tol=1e-13)
    plan = make_plan(20, 4, 2)
    # boundary data from the exact full solution; interior interval
    sub = subproblem_from_iterate(p, plan, 1, 25.0, zs, ls)
    warms = decompose(zs.x, zs.u, ls.lam, plan)
    x0w = warms[1][0] + 1e-3  # start slightly off to make the solve do work
    xs, us, lsub = solve_nonlinear_subproblem(
        sub, (x0w, warms[1][1] + 1e-3, warms[1][2] + 1e-3))
    m1, m2 = plan.m1[1], plan.m2[1]
    np.testing.assert_allclose(xs, zs.x[m1:m2 + 1], atol=1e-7)
    np.testing.assert_allclose(us, zs.u[m1:m2], atol=1e-7)
    np.testing.assert_allclose(lsub, ls.lam[m1:m2 + 1], atol=1e-7)


def test_schwarz_fixed_point_at_full_solution():
    p = toy(N=12)
    z, lam = newton_solve_to_kkt(p, tol=1e-13)
    report = schwarz_solve(p, SolverConfig(mu=25.0, M=3, b=2), (z, lam))
    assert report.status == "converged_kkt"
    assert report.iterations <= 1


def test_schwarz_converges_and_reaches_small_residual():
    p = toy(N=100)
    init = make_initializations(p, 2, seed=7)[1]
    cfg = SolverConfig(mu=25.0, M=5, b=25)
    rep_s = schwarz_solve(p, cfg, init)
    rep_f = solve(p, cfg, init, mode="fotd")
    assert rep_s.status == "converged_kkt"
    assert rep_f.converged
    # solving subproblems to optimality tends to land deeper than one
    # Newton step per iteration does
    assert rep_s.final_kkt <= max(rep_f.final_kkt, 1e-8)


def test_schwarz_parallel_workers_match_serial():
    p = toy(N=60)
    init = make_initializations(p, 2, seed=19)[1]
    rep1 = schwarz_solve(p, SolverConfig(mu=25.0, M=3, b=4, workers=1), init)
    rep3 = schwarz_solve(p, SolverConfig(mu=25.0, M=3, b=4, workers=3), init)
    assert rep1.status == rep3.status == "converged_kkt"
    np.testing.assert_array_equal(rep1.z.x, rep3.z.x)
    np.testing.assert_array_equal(rep1.lam.lam, rep3.lam.lam)


def test_schwarz_budget_exhaustion_recorded():
    p = toy(N=100)
    init = make_initializations(p, 2, seed=9)[1]
    report = schwarz_solve(p, SolverConfig(mu=25.0, M=5, b=1), init, budget=1)
    assert report.status == "max_iters"
    assert len(report.records) == 2
    assert report.error is None


def test_schwarz_inner_failure_reported():
    p = toy(N=12)
    init = make_initializations(p, 2, seed=11)[1]
    report = schwarz_solve(p, SolverConfig(mu=25.0, M=3, b=2), init,
                           inner_max_iters=0)
    assert report.status == "error"
    assert "subproblem" in report.error
    assert len(report.records) >= 1


@pytest.mark.parametrize("b", [1, 5])
def test_one_newton_step_equals_decomposed_update(b):
    p = toy(N=100)
    plan = make_plan(100, 5, b)
    for seed in (13, 14):
        z, lam = random_point(p, seed=seed, scale=2.0)
        z.x[0] = p.x0
        nd = assemble_newton_data(p, z, lam)
        d = approximate_direction(nd, plan, 25.0)
        dx, du, dl = d.stage_arrays(100, 1, 1)
        zs, ls = one_newton_schwarz_step(p, z, lam, plan, 25.0)
        assert np.max(np.abs(zs.x - (z.x + dx))) <= 1e-9
        assert np.max(np.abs(zs.u - (z.u + du))) <= 1e-9
        assert np.max(np.abs(ls.lam - (lam.lam + dl))) <= 1e-9


def test_one_newton_step_fixed_at_kkt_point():
    p = toy(N=12)
    z, lam = newton_solve_to_kkt(p, tol=1e-13)
    zs, ls = one_newton_schwarz_step(p, z, lam, make_plan(12, 3, 2), 25.0)
    assert np.max(np.abs(zs.x - z.x)) <= 1e-9
    assert np.max(np.abs(ls.lam - lam.lam)) <= 1e-9


def test_one_newton_step_matches_dense_subproblem_solves():
    p, _ = make_random_lq(8, 2, 1, seed=15)
    z, lam = random_point(p, seed=16)
    plan = make_plan(8, 2, 2)
    zs, ls = one_newton_schwarz_step(p, z, lam, plan, 4.0)
    parts = []
    warms = decompose(z.x, z.u, lam.lam, plan)
    for i in range(2):
        sub = subproblem_from_iterate(p, plan, i, 4.0, z, lam)
        trunc = truncated_problem(sub)
        nd = assemble_newton_data(p=trunc,
                                  z=Trajectory(warms[i][0], warms[i][1]),
                                  lam=DualTrajectory(warms[i][2]))
        pd, qd, zd = dense_full_newton(nd)
        parts.append((warms[i][0] + pd, warms[i][1] + qd, warms[i][2] + zd))
    from fotd.decomposition import compose
    xe, ue, le = compose(parts, plan)
    np.testing.assert_allclose(zs.x, xe, atol=1e-10)
    np.testing.assert_allclose(zs.u, ue, atol=1e-10)
    np.testing.assert_allclose(ls.lam, le, atol=1e-10)


def test_compatibility_conditions_decide_full_stationarity():
    p = toy(N=12)
    zs, ls = newton_solve_to_kkt(p, tol=1e-13)
    plan = make_plan(12, 2, 2)
    warms = decompose(zs.x, zs.u, ls.lam, plan)

    def solve_parts(perturb):
        parts = []
        for i in range(plan.M):
            sub = subproblem_from_iterate(p, plan, i, 25.0, zs, ls)
            if perturb and i == 0:
                sub = subproblem_from_iterate(
                    p, plan, i, 25.0,
                    Trajectory(zs.x + 0.5, zs.u + 0.5),
                    DualTrajectory(ls.lam + 0.5))
            parts.append(solve_nonlinear_subproblem(sub, warms[i]))
        return parts

    # matched boundaries: composed point is a full KKT point and every
    # compatibility residual vanishes
    parts = solve_parts(perturb=False)
    from fotd.decomposition import compose
    x, u, lm = compose(parts, plan)
    assert kkt_residual(p, Trajectory(x, u), DualTrajectory(lm)) <= 1e-7
    for rx, ra, rb in boundary_compatibility(p, parts, plan):
        assert max(rx, ra, rb) <= 1e-7

    # mismatched boundaries: each part is a subproblem KKT point, but the
    # composition is not stationary and the knot residuals are bounded away
    parts = solve_parts(perturb=True)
    x, u, lm = compose(parts, plan)
    assert kkt_residual(p, Trajectory(x, u), DualTrajectory(lm)) >= 1e-3
    residuals = boundary_compatibility(p, parts, plan)
    assert max(max(r) for r in residuals) >= 1e-3
