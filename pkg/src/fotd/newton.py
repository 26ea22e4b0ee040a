"""Full-horizon Newton system: assembly, Hessian modification, direct solve.

At an iterate (z, lam) the SQP direction solves the saddle-point system

    [ Hhat  G^T ] [ dz   ]     [ grad_z L   ]
    [ G     0   ] [ dlam ] = - [ grad_lam L ],

where Hhat is a structure-preserving modification of the stagewise Lagrangian
Hessian that is positive definite on the null space of the constraint
Jacobian G.  Definiteness is certified by factorizing H + c * G^T G for a
sufficiently large scalar c (the matrix is block tridiagonal, so the test
costs one banded Cholesky); when the test fails, a Levenberg shift
Hhat = H + gamma * I is applied with gamma chosen from a geometric ladder.

The module also evaluates two closed-form constants from the method's
analysis, used purely as diagnostics: a lower bound on G G^T implied by
controllability, and the penalty threshold above which every decomposed
subproblem stays definite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import banded
from .exceptions import ModificationFailure, NumericsError
from .problem import (DualTrajectory, ProblemDef, Trajectory,
                      eval_lagrangian_gradient, split_primal,
                      stack_primal, stage_hessian_blocks)

PIVOT_TOL = banded.PIVOT_TOL
GAMMA_SEED = 1e-4     # ladder start, scaled by (1 + max block norm)
GAMMA_CEILING = 1e8   # ladder abort, same scaling


@dataclass(frozen=True)
class NewtonData:
    """Linearization of the problem at one iterate.

    Holds the (possibly modified) stage Hessian blocks, dynamics Jacobians,
    and the Lagrangian gradient split by stage.  ``glam`` stacks the
    constraint residuals; ``gamma_applied`` records the Levenberg shift.
    Immutable and safe to share across worker threads.
    """

    N: int
    n_x: int
    n_u: int
    Q: np.ndarray      # (N+1, n_x, n_x), terminal block included
    S: np.ndarray      # (N, n_u, n_x)
    R: np.ndarray      # (N, n_u, n_u)
    A: np.ndarray      # (N, n_x, n_x)
    B: np.ndarray      # (N, n_x, n_u)
    gx: np.ndarray     # (N+1, n_x)
    gu: np.ndarray     # (N, n_u)
    glam: np.ndarray   # (N+1, n_x)
    gamma_applied: float = 0.0

    def grad_z(self) -> np.ndarray:
        return stack_primal(self.gx, self.gu)

    def max_block_norm_fro(self) -> float:
        q2 = np.einsum("kij,kij->k", self.Q, self.Q)
        s2 = np.einsum("kij,kij->k", self.S, self.S)
        r2 = np.einsum("kij,kij->k", self.R, self.R)
        blocks = np.sqrt(q2[: self.N] + 2.0 * s2 + r2)
        return float(max(blocks.max(initial=0.0), np.sqrt(q2[self.N])))

    def max_block_norm_2(self) -> float:
        full = np.zeros((self.N, self.n_x + self.n_u, self.n_x + self.n_u))
        full[:, : self.n_x, : self.n_x] = self.Q[: self.N]
        full[:, self.n_x:, : self.n_x] = self.S
        full[:, : self.n_x, self.n_x:] = self.S.transpose(0, 2, 1)
        full[:, self.n_x:, self.n_x:] = self.R
        top = float(np.linalg.norm(np.linalg.svd(full, compute_uv=False), np.inf))
        return max(top, float(np.linalg.norm(self.Q[self.N], 2)))


@dataclass(frozen=True)
class NewtonDirection:
    """Primal/dual search direction, stage-major flat vectors."""

    dz: np.ndarray
    dlam: np.ndarray

    def norm(self) -> float:
        return float(np.sqrt(self.dz @ self.dz + self.dlam @ self.dlam))

    def stage_arrays(self, N: int, n_x: int, n_u: int):
        dx, du = split_primal(self.dz, N, n_x, n_u)
        return dx, du, self.dlam.reshape(N + 1, n_x)


def assemble_newton_data(p: ProblemDef, z: Trajectory, lam: DualTrajectory) -> NewtonData:
    """Evaluate Hessian blocks, Jacobians and gradients at (z, lam).

    Blocks are unmodified (gamma_applied = 0).  Non-finite callback output
    raises :class:`NumericsError` carrying the offending stage.
    """
    Q, S, R, A, B = stage_hessian_blocks(p, z, lam)
    gz, gl = eval_lagrangian_gradient(p, z, lam)
    gx, gu = split_primal(gz, p.N, p.n_x, p.n_u)
    for name, arr in (("Hessian/Jacobian", np.concatenate([Q[: p.N].reshape(p.N, -1),
                                                           S.reshape(p.N, -1),
                                                           R.reshape(p.N, -1),
                                                           A.reshape(p.N, -1),
                                                           B.reshape(p.N, -1)], axis=1)),
                      ("gradient", np.concatenate([gx[: p.N], gu], axis=1))):
        bad = ~np.all(np.isfinite(arr), axis=1)
        if bad.any():
            raise NumericsError(int(np.argmax(bad)), name)
    if not np.all(np.isfinite(Q[p.N])) or not np.all(np.isfinite(gx[p.N])):
        raise NumericsError(p.N, "terminal block")
    return NewtonData(p.N, p.n_x, p.n_u, Q, S, R, A, B, gx, gu,
                      gl.reshape(p.N + 1, p.n_x))


def default_definiteness_constant(nd: NewtonData) -> float:
    """Scalar c for the H + c G^T G test: 10 * max_k ||H_k||_F + 1."""
    return 10.0 * nd.max_block_norm_fro() + 1.0


def check_reduced_hessian(nd: NewtonData, c: float) -> bool:
    """True iff Hhat + c G^T G factors with all pivots >= 1e-10.

    For c large enough this is equivalent to positive definiteness of the
    reduced Hessian Z^T Hhat Z on the constraint null space.
    """
    if not c > 0:
        raise ValueError(f"definiteness constant must be positive, got {c}")
    return banded.definiteness_pivots_ok(nd.Q, nd.S, nd.R, nd.A, nd.B, c,
                                         pivot_tol=PIVOT_TOL)


def _shift(nd: NewtonData, gamma: float) -> NewtonData:
    nx = np.eye(nd.n_x)
    nu = np.eye(nd.n_u)
    return replace(nd, Q=nd.Q + gamma * nx, R=nd.R + gamma * nu,
                   gamma_applied=gamma)


def modify_hessian(nd: NewtonData, c: float | None = None,
                   gamma_step: float = 2.0) -> NewtonData:
    """Levenberg-style modification Hhat = H + gamma * I.

    Returns ``nd`` unchanged when the definiteness test already passes.
    Otherwise the smallest shift from the geometric ladder
    gamma_0 * gamma_step^j that passes is applied, with
    gamma_0 = 1e-4 * (1 + max_k ||H_k||).
    """
    if not gamma_step > 1:
        raise ValueError(f"gamma_step must exceed 1, got {gamma_step}")
    if c is None:
        c = default_definiteness_constant(nd)
    if check_reduced_hessian(nd, c):
        return nd
    scale = 1.0 + nd.max_block_norm_2()
    gamma = GAMMA_SEED * scale
    ceiling = GAMMA_CEILING * scale
    while gamma <= ceiling:
        cand = _shift(nd, gamma)
        if check_reduced_hessian(cand, c):
            return cand
        gamma *= gamma_step
    raise ModificationFailure(
        f"no Levenberg shift up to {ceiling:.3e} restored definiteness")


def solve_full_newton(nd: NewtonData) -> NewtonDirection:
    """Unique solution of the full-horizon Newton system.

    The saddle-point system is solved via the banded factorization of the
    stage-interleaved KKT matrix (bandwidth O(n_x + n_u)); the caller is
    expected to have certified the reduced Hessian first.
    """
    p, q, zeta = banded.solve_lq_kkt(nd.Q, nd.S, nd.R, nd.A, nd.B,
                                     nd.gx, nd.gu, -nd.glam[0], -nd.glam[1:])
    return NewtonDirection(stack_primal(p, q), zeta.ravel())


def direction_kkt_residual(nd: NewtonData, d: NewtonDirection) -> float:
    """Residual of the Newton system at a candidate direction (test hook)."""
    dx, du, dl = d.stage_arrays(nd.N, nd.n_x, nd.n_u)
    return banded.lq_kkt_residual(nd.Q, nd.S, nd.R, nd.A, nd.B, nd.gx, nd.gu,
                                  -nd.glam[0], -nd.glam[1:], dx, du, dl)


def newton_rhs_norm(nd: NewtonData) -> float:
    return banded.lq_rhs_norm(nd.gx, nd.gu, -nd.glam[0], -nd.glam[1:])


# ---------------------------------------------------------------------------
# Closed-form diagnostic constants
# ---------------------------------------------------------------------------

def _check_theory_args(gamma_c: float, t: float, upsilon: float):
    if not gamma_c > 0:
        raise ValueError(f"gamma_c must be positive, got {gamma_c}")
    if not t >= 1:
        raise ValueError(f"t must be at least 1, got {t}")
    if not upsilon > 1:
        raise ValueError(f"upsilon must exceed 1, got {upsilon}")


def theory_gamma_G(gamma_c: float, t: float, upsilon: float) -> float:
    """Lower bound on the singular values of G G^T implied by controllability."""
    _check_theory_args(gamma_c, t, upsilon)
    reach = upsilon ** (t + 1) / (upsilon - 1.0)
    return ((gamma_c / (gamma_c + reach)) ** 2
            * min(1.0, gamma_c) / (1.0 + upsilon) ** (2 * t))


def theory_mu_bar(gamma_c: float, t: float, upsilon: float) -> float:
    """Terminal-penalty threshold guaranteeing definite subproblems."""
    _check_theory_args(gamma_c, t, upsilon)
    return 32.0 * upsilon ** (4 * t + 1) / gamma_c
