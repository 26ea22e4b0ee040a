import math

import numpy as np
import pytest

from fotd.benchmarks import (PlateSpec, ToySpec, make_initializations,
                             make_plate_problem, make_toy_problem,
                             toy_case_params)
from fotd.driver import SolverConfig, solve
from fotd.newton import assemble_newton_data
from fotd.problem import DualTrajectory, Trajectory, kkt_residual

from oracles import dense_reduced_hessian_eigmin, random_point


def test_case_table_parameters():
    spec1, M1 = toy_case_params(1)
    assert (spec1.N, M1, spec1.C1, spec1.C2) == (5000, 50, 8.0, 1.0)
    assert spec1.d(7) == 1.0
    spec2, M2 = toy_case_params(2)
    assert (spec2.N, M2, spec2.C1, spec2.C2) == (5000, 100, 15.0, 3.0)
    assert spec2.d(3) == pytest.approx(100.0 * math.sin(3) ** 2)
    spec3, M3 = toy_case_params(3)
    assert (spec3.N, M3, spec3.C1, spec3.C2) == (10000, 100, 12.0, 2.0)
    assert spec3.d(3) == pytest.approx(5.0 * math.sin(3))
    with pytest.raises(ValueError):
        toy_case_params(4)


def test_case_rescaling_overrides():
    spec, M = toy_case_params(2, N=500, M=20)
    assert spec.N == 500 and M == 20
    assert (spec.C1, spec.C2) == (15.0, 3.0)


def test_toy_reduced_hessian_lower_bound():
    # margin (C1 - 2 - 4|C2|)/4 = 0.5 for case-1 coefficients
    spec, _ = toy_case_params(1, N=25)
    p = make_toy_problem(spec)
    for seed in range(20):
        z, lam = random_point(p, seed=seed, scale=4.0)
        nd = assemble_newton_data(p, z, lam)
        eig = dense_reduced_hessian_eigmin(nd.Q, nd.S, nd.R, nd.A, nd.B)
        assert eig >= 0.5 - 1e-8


def test_convexity_margin_warning():
    with pytest.warns(UserWarning):
        ToySpec(N=10, C1=4.0, C2=1.0, d=lambda k: 0.0)


def test_plate_paper_dimensions():
    spec = PlateSpec(m=4, N=5000)
    assert spec.n_interior == 4
    p = make_plate_problem(spec)
    assert p.n_x == p.n_u == 4
    assert p.N == 5000
    np.testing.assert_array_equal(p.x0, np.zeros(4))


def test_plate_zero_target_without_exchange_terms_is_optimal():
    spec = PlateSpec(m=4, N=40, h_c=0.0, eps_c=0.0,
                     desired=lambda node, t: 0.0)
    p = make_plate_problem(spec)
    init = (Trajectory.zeros(p), DualTrajectory.zeros(p))
    assert kkt_residual(p, *init) == 0.0
    report = solve(p, SolverConfig(mu=25.0, M=4, b=2), init, mode="fotd")
    assert report.status == "converged_kkt"
    assert report.iterations == 0


def test_plate_fotd_matches_centralized_small():
    p = make_plate_problem(PlateSpec(m=4, N=50))
    init = (Trajectory.zeros(p), DualTrajectory.zeros(p))
    cfg = SolverConfig(mu=25.0, M=5, b=3, kkt_tol=1e-8, step_tol=1e-14)
    rep_f = solve(p, cfg, init, mode="fotd")
    rep_c = solve(p, cfg, init, mode="centralized")
    assert rep_f.status == rep_c.status == "converged_kkt"
    diff = max(float(np.max(np.abs(rep_f.z.x - rep_c.z.x))),
               float(np.max(np.abs(rep_f.z.u - rep_c.z.u))))
    assert diff <= 1e-6


def test_plate_exchange_terms_vanish_at_ambient_temperature():
    # with the interior held at the ambient temperature, convection and
    # radiation cancel exactly and only the pure diffusion step remains
    spec = PlateSpec(m=4, N=100)
    p = make_plate_problem(spec)
    x = np.full(4, spec.T_c)
    u = np.zeros(4)
    step = np.asarray(p.dynamics(0, x, u)) - u
    from fotd.benchmarks import _interior_laplacian
    L = _interior_laplacian(spec.m, spec.dw)
    np.testing.assert_array_equal(step, x + spec.dt * (L @ x))


def test_plate_stability_warning():
    with pytest.warns(UserWarning):
        make_plate_problem(PlateSpec(m=10, N=10))


def test_initializations_protocol():
    spec, _ = toy_case_params(1, N=30)
    p = make_toy_problem(spec)
    inits = make_initializations(p, 5, seed=42)
    assert len(inits) == 5
    z0, lam0 = inits[0]
    assert np.all(z0.x == 0.0) and np.all(z0.u == 0.0) and np.all(lam0.lam == 0.0)
    for z, lam in inits[1:]:
        np.testing.assert_array_equal(z.x[0], p.x0)
        assert np.max(np.abs(z.x)) <= 1e5 and np.max(np.abs(z.u)) <= 1e5
        assert np.max(np.abs(lam.lam)) <= 1e5
        assert np.max(np.abs(z.u)) > 1e3   # actually spread over the range
    again = make_initializations(p, 5, seed=42)
    for (za, la), (zb, lb) in zip(inits, again):
        np.testing.assert_array_equal(za.x, zb.x)
        np.testing.assert_array_equal(za.u, zb.u)
        np.testing.assert_array_equal(la.lam, lb.lam)
    other = make_initializations(p, 5, seed=43)
    assert not np.array_equal(other[1][0].x, inits[1][0].x)


def test_generated_derivatives_pass_fd_suite():
    # cross-check generator callbacks against finite differences of their
    # own scalar outputs, independently of the solver stack
    from oracles import central_diff
    spec, _ = toy_case_params(3, N=10)
    problems = [make_toy_problem(spec), make_plate_problem(PlateSpec(m=4, N=20))]
    for p in problems:
        rng = np.random.default_rng(1)
        for k in (0, p.N // 2):
            x = rng.uniform(-1, 1, p.n_x)
            u = rng.uniform(-1, 1, p.n_u)
            gx, gu = p.cost_gradient(k, x, u)
            fdx = central_diff(lambda v: p.stage_cost(k, v, u), x)
            fdu = central_diff(lambda v: p.stage_cost(k, x, v), u)
            np.testing.assert_allclose(gx, fdx, rtol=1e-4, atol=1e-6)
            np.testing.assert_allclose(gu, fdu, rtol=1e-4, atol=1e-6)
            A, B = p.dynamics_jacobians(k, x, u)
            for j in range(p.n_x):
                fdA = central_diff(lambda v: float(p.dynamics(k, v, u)[j]), x)
                np.testing.assert_allclose(A[j], fdA, rtol=1e-4, atol=1e-6)
                fdB = central_diff(lambda v: float(p.dynamics(k, x, v)[j]), u)
                np.testing.assert_allclose(B[j], fdB, rtol=1e-4, atol=1e-6)
        gN = p.cost_gradient(p.N, x)
        fdN = central_diff(lambda v: p.stage_cost(p.N, v), x)
        np.testing.assert_allclose(gN, fdN, rtol=1e-4, atol=1e-6)
