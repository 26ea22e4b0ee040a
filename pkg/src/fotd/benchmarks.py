"""Benchmark problem generators and the experiment initialization scheme.

Two problem families are provided:

* A scalar toy problem with a nonconvex stage cost and linear dynamics,

      g_k = 2 cos^2(x_k - d_k) + C1 (x_k - d_k)^2 - C2 (u_k - d_k)^2,
      g_N = C1 x_N^2,        x_{k+1} = x_k + u_k + d_k,      x_0 = 0,

  whose reduced Hessian is bounded below by (C1 - 2 - 4|C2|)/4 whenever
  C1 - 2 > 4 |C2|, so no Hessian modification is ever needed in that regime.
  Three standard parameter cases are exposed by :func:`toy_case_params`.

* A thin-plate temperature control problem: the controlled heat equation
  with convection and radiation terms on the unit square, zero boundary and
  initial temperature, discretized by a 5-point Laplacian on an m x m grid
  (explicit Euler in time) with one heat input per interior node, and a
  quadrature stage cost dt * dw^2 * sum((x - d)^2 + u^2).

Initial iterates follow the benchmark protocol: the first is all zeros, the
remainder draw every coordinate iid Uniform(-1e5, 1e5), and x_0 is always
overwritten with the problem's initial state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .problem import DualTrajectory, ProblemDef, Trajectory

UNIFORM_HALF_WIDTH = 1e5


# ---------------------------------------------------------------------------
# Scalar toy problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToySpec:
    """Scalar benchmark parameters; d is the reference sequence by knot index."""

    N: int
    C1: float
    C2: float
    d: Callable[[int], float]

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"toy horizon must be at least 2, got {self.N}")
        if not self.C1 - 2.0 > 4.0 * abs(self.C2):
            warnings.warn(
                f"C1 - 2 = {self.C1 - 2:g} does not exceed 4|C2| = "
                f"{4 * abs(self.C2):g}; the reduced Hessian may lose "
                "definiteness and trigger Levenberg shifts", stacklevel=2)


TOY_CASES = {
    1: dict(N=5000, M=50, C1=8.0, C2=1.0),
    2: dict(N=5000, M=100, C1=15.0, C2=3.0),
    3: dict(N=10000, M=100, C1=12.0, C2=2.0),
}


def toy_case_d(case: int) -> Callable[[int], float]:
    if case == 1:
        return lambda k: 1.0
    if case == 2:
        return lambda k: 100.0 * math.sin(k) ** 2
    if case == 3:
        return lambda k: 5.0 * math.sin(k)
    raise ValueError(f"unknown toy case {case}")


def toy_case_params(case: int, N: int | None = None, M: int | None = None):
    """Table of standard cases; returns (ToySpec, M), optionally rescaled."""
    if case not in TOY_CASES:
        raise ValueError(f"unknown toy case {case}")
    base = TOY_CASES[case]
    spec = ToySpec(N=N if N is not None else base["N"], C1=base["C1"],
                   C2=base["C2"], d=toy_case_d(case))
    return spec, (M if M is not None else base["M"])


def make_toy_problem(spec: ToySpec) -> ProblemDef:
    """Scalar problem with analytic derivatives; n_x = n_u = 1."""
    C1, C2, N = spec.C1, spec.C2, spec.N
    d = np.array([float(spec.d(k)) for k in range(N)])
    zero22 = np.zeros((2, 2))
    zero22.flags.writeable = False
    A1 = np.ones((1, 1))
    A1.flags.writeable = False

    def stage_cost(k, x, u=None):
        if k == N:
            return C1 * float(x[0]) ** 2
        e = float(x[0]) - d[k]
        return 2.0 * math.cos(e) ** 2 + C1 * e * e - C2 * (float(u[0]) - d[k]) ** 2

    def cost_gradient(k, x, u=None):
        if k == N:
            return np.array([2.0 * C1 * float(x[0])])
        e = float(x[0]) - d[k]
        gx = np.array([-2.0 * math.sin(2.0 * e) + 2.0 * C1 * e])
        gu = np.array([-2.0 * C2 * (float(u[0]) - d[k])])
        return gx, gu

    def cost_hessian(k, x, u=None):
        if k == N:
            return np.array([[2.0 * C1]])
        e = float(x[0]) - d[k]
        Q = np.array([[-4.0 * math.cos(2.0 * e) + 2.0 * C1]])
        return Q, np.zeros((1, 1)), np.array([[-2.0 * C2]])

    return ProblemDef(
        N=N, n_x=1, n_u=1, x0=np.zeros(1),
        stage_cost=stage_cost,
        cost_gradient=cost_gradient,
        cost_hessian=cost_hessian,
        dynamics=lambda k, x, u: np.array([float(x[0]) + float(u[0]) + d[k]]),
        dynamics_jacobians=lambda k, x, u: (A1, A1),
        dynamics_hessian_contraction=lambda k, x, u, lam: zero22,
    )


# ---------------------------------------------------------------------------
# Thin-plate temperature control
# ---------------------------------------------------------------------------

def _sin_of_time(node: int, t: float) -> float:
    return math.sin(t)


@dataclass(frozen=True)
class PlateSpec:
    """Heat-equation benchmark on an m x m grid with (m-2)^2 interior nodes.

    Physical constants: convection coefficient h_c, thermal conductivity
    kappa_c, emissivity eps_c, Stefan-Boltzmann constant sigma_c, ambient
    temperature T_c, plate thickness t_c.  ``desired(node, t)`` gives the
    temperature target of an interior node at physical time t = k / N.
    """

    m: int = 4
    N: int = 5000
    h_c: float = 1.0
    kappa_c: float = 400.0
    eps_c: float = 0.5
    sigma_c: float = 5.67e-8
    T_c: float = 300.0
    t_c: float = 0.01
    desired: Callable[[int, float], float] = field(default=_sin_of_time)

    def __post_init__(self):
        if self.m < 3:
            raise ValueError(f"mesh must have at least one interior node, got m={self.m}")
        if self.N < 2:
            raise ValueError(f"plate horizon must be at least 2, got {self.N}")
        for name in ("h_c", "kappa_c", "eps_c", "sigma_c", "T_c", "t_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def dt(self) -> float:
        return 1.0 / self.N

    @property
    def dw(self) -> float:
        return 1.0 / (self.m - 1)

    @property
    def n_interior(self) -> int:
        return (self.m - 2) ** 2


def _interior_laplacian(m: int, dw: float) -> np.ndarray:
    """5-point stencil with zero Dirichlet boundary folded in."""
    s = m - 2
    L = np.zeros((s * s, s * s))
    for i in range(s):
        for j in range(s):
            a = i * s + j
            L[a, a] = -4.0
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < s and 0 <= jj < s:
                    L[a, ii * s + jj] = 1.0
    return L / dw ** 2


def make_plate_problem(spec: PlateSpec) -> ProblemDef:
    """Explicit-Euler discretization of the controlled heat equation."""
    n = spec.n_interior
    dt, dw = spec.dt, spec.dw
    if dt * 4.0 / dw ** 2 >= 2.0:
        warnings.warn(
            f"explicit Euler stability margin violated: dt*4/dw^2 = "
            f"{dt * 4.0 / dw ** 2:g} >= 2; expect oscillatory dynamics",
            stacklevel=2)
    L = _interior_laplacian(spec.m, dw)
    a_conv = 2.0 * spec.h_c / (spec.kappa_c * spec.t_c)
    a_rad = 2.0 * spec.eps_c * spec.sigma_c / (spec.kappa_c * spec.t_c)
    Tc, Tc4 = spec.T_c, spec.T_c ** 4
    # Explicit Euler on the PDE terms; u is the heat injected per node per
    # step (unit input matrix), which keeps the linearized system uniformly
    # controllable as the time grid is refined.
    M_lin = np.eye(n) + dt * (L - a_conv * np.eye(n))
    B = np.eye(n)
    B.flags.writeable = False
    w_cost = dt * dw ** 2
    d_table = np.array([[spec.desired(i, k * dt) for i in range(n)]
                        for k in range(spec.N)])
    const = dt * (a_conv * Tc + a_rad * Tc4)
    N = spec.N

    def dynamics(k, x, u):
        return M_lin @ x + u + const - dt * a_rad * x ** 4

    def dynamics_jacobians(k, x, u):
        A = M_lin - np.diag(4.0 * dt * a_rad * x ** 3)
        return A, B

    def dynamics_hessian_contraction(k, x, u, lam):
        W = np.zeros((2 * n, 2 * n))
        W[np.arange(n), np.arange(n)] = 12.0 * dt * a_rad * lam * x ** 2
        return W

    def stage_cost(k, x, u=None):
        if k == N:
            return 0.0
        e = x - d_table[k]
        return w_cost * (float(e @ e) + float(u @ u))

    def cost_gradient(k, x, u=None):
        if k == N:
            return np.zeros(n)
        return 2.0 * w_cost * (x - d_table[k]), 2.0 * w_cost * u

    Qs = 2.0 * w_cost * np.eye(n)
    Ss = np.zeros((n, n))
    QN = np.zeros((n, n))
    for arr in (Qs, Ss, QN):
        arr.flags.writeable = False

    def cost_hessian(k, x, u=None):
        if k == N:
            return QN
        return Qs, Ss, Qs

    return ProblemDef(
        N=spec.N, n_x=n, n_u=n, x0=np.zeros(n),
        stage_cost=stage_cost, cost_gradient=cost_gradient,
        cost_hessian=cost_hessian, dynamics=dynamics,
        dynamics_jacobians=dynamics_jacobians,
        dynamics_hessian_contraction=dynamics_hessian_contraction,
    )


# ---------------------------------------------------------------------------
# Initial iterates
# ---------------------------------------------------------------------------

def make_initializations(p: ProblemDef, count: int = 5, seed: int = 0):
    """Zero iterate plus ``count - 1`` iid Uniform(-1e5, 1e5) draws.

    The initial-state row of every draw is overwritten with the problem's
    initial state.  The same seed reproduces the same draws bit for bit.
    """
    rng = np.random.default_rng(seed)
    inits = []
    for i in range(count):
        if i == 0:
            z = Trajectory.zeros(p)
            lam = DualTrajectory.zeros(p)
        else:
            hw = UNIFORM_HALF_WIDTH
            z = Trajectory(rng.uniform(-hw, hw, (p.N + 1, p.n_x)),
                           rng.uniform(-hw, hw, (p.N, p.n_u)))
            lam = DualTrajectory(rng.uniform(-hw, hw, (p.N + 1, p.n_x)))
        z.x[0] = p.x0
        inits.append((z, lam))
    return inits
