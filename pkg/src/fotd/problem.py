"""Nonlinear dynamic program (NLDP) model and pointwise evaluations.

An NLDP is an equality-constrained optimal control problem over a discrete
horizon of ``N`` stages:

    minimize    sum_{k<N} g_k(x_k, u_k) + g_N(x_N)
    subject to  x_{k+1} = f_k(x_k, u_k),   k = 0..N-1,
                x_0 = x0.

This module holds the problem container (:class:`ProblemDef`), the primal and
dual trajectory containers, and the evaluations every solver layer builds on:
objective, constraint residual, Lagrangian gradient (whose norm is the KKT
residual), and the differentiable exact augmented Lagrangian merit function

    merit(z, lam) = L(z, lam) + eta1/2 ||grad_lam L||^2 + eta2/2 ||grad_z L||^2

together with its gradient.

Conventions used across the package:
  * Flattened primal vectors are stage-major: (x_0, u_0, ..., x_{N-1},
    u_{N-1}, x_N), with n_z = (N+1) n_x + N n_u entries.
  * lam_0 is attached to the initial-state constraint, lam_{k+1} to the k-th
    dynamic constraint, and dynamics multipliers enter stage gradients with a
    minus sign (-lam_{k+1}^T f_k).
  * All evaluations are pure functions; :class:`ProblemDef` is immutable and
    safe to share across worker threads.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class ProblemDef:
    """Immutable NLDP definition with user-supplied derivative callbacks.

    Callback signatures (all deterministic and side-effect free):

    - ``stage_cost(k, x, u)`` -> float for k < N; ``stage_cost(N, x)`` -> float.
      The terminal cost depends on the state only.
    - ``cost_gradient(k, x, u)`` -> (gx, gu); ``cost_gradient(N, x)`` -> gx.
    - ``cost_hessian(k, x, u)`` -> (Q, S, R) with S of shape (n_u, n_x);
      ``cost_hessian(N, x)`` -> Q_N.
    - ``dynamics(k, x, u)`` -> next state, shape (n_x,).
    - ``dynamics_jacobians(k, x, u)`` -> (A, B) with A = df/dx, B = df/du.
    - ``dynamics_hessian_contraction(k, x, u, lam_next)`` -> the
      (n_x+n_u) x (n_x+n_u) matrix  -sum_j lam_next[j] * hess(f_j),
      i.e. the dynamics' contribution to the Lagrangian Hessian block.
    """

    N: int
    n_x: int
    n_u: int
    x0: np.ndarray
    stage_cost: Callable
    cost_gradient: Callable
    cost_hessian: Callable
    dynamics: Callable
    dynamics_jacobians: Callable
    dynamics_hessian_contraction: Callable

    def __post_init__(self):
        if self.N < 1 or self.n_x < 1 or self.n_u < 1:
            raise ValueError("N, n_x, n_u must be positive")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.n_x,):
            raise ValueError(f"x0 must have shape ({self.n_x},), got {x0.shape}")
        x0 = x0.copy()
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)

    @property
    def n_z(self) -> int:
        return (self.N + 1) * self.n_x + self.N * self.n_u

    @property
    def n_c(self) -> int:
        """Total number of equality constraints, (N+1)*n_x."""
        return (self.N + 1) * self.n_x


@dataclass
class Trajectory:
    """Full-horizon primal variables: states x (N+1, n_x), controls u (N, n_u)."""

    x: np.ndarray
    u: np.ndarray

    def copy(self) -> "Trajectory":
        return Trajectory(self.x.copy(), self.u.copy())

    @classmethod
    def zeros(cls, p: ProblemDef) -> "Trajectory":
        return cls(np.zeros((p.N + 1, p.n_x)), np.zeros((p.N, p.n_u)))


@dataclass
class DualTrajectory:
    """Multipliers lam (N+1, n_x); lam[0] belongs to the initial-state pin."""

    lam: np.ndarray

    def copy(self) -> "DualTrajectory":
        return DualTrajectory(self.lam.copy())

    @classmethod
    def zeros(cls, p: ProblemDef) -> "DualTrajectory":
        return cls(np.zeros((p.N + 1, p.n_x)))


@dataclass(frozen=True)
class PenaltyParams:
    """Merit penalties: eta1 biases feasibility, eta2 biases optimality."""

    eta1: float
    eta2: float

    def __post_init__(self):
        if not (self.eta1 > 0 and self.eta2 > 0):
            raise ValueError(f"penalty parameters must be positive, got {self}")


def check_point(p: ProblemDef, z: Trajectory, lam: Optional[DualTrajectory] = None):
    """Validate container shapes against ``p``; raises ValueError on mismatch."""
    if z.x.shape != (p.N + 1, p.n_x):
        raise ValueError(f"states must have shape {(p.N + 1, p.n_x)}, got {z.x.shape}")
    if z.u.shape != (p.N, p.n_u):
        raise ValueError(f"controls must have shape {(p.N, p.n_u)}, got {z.u.shape}")
    if lam is not None and lam.lam.shape != (p.N + 1, p.n_x):
        raise ValueError(
            f"multipliers must have shape {(p.N + 1, p.n_x)}, got {lam.lam.shape}"
        )


def stack_primal(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Flatten stage arrays to the stage-major primal vector."""
    N = u.shape[0]
    return np.concatenate([np.hstack([x[:N], u]).ravel(), x[N]])


def split_primal(vec: np.ndarray, N: int, n_x: int, n_u: int):
    """Inverse of :func:`stack_primal`; returns (x, u) stage arrays."""
    m = n_x + n_u
    body = vec[: N * m].reshape(N, m)
    x = np.vstack([body[:, :n_x], vec[N * m :].reshape(1, n_x)])
    return x, body[:, n_x:].copy()


def eval_objective(p: ProblemDef, z: Trajectory) -> float:
    """Total cost sum_{k<N} g_k(x_k, u_k) + g_N(x_N)."""
    check_point(p, z)
    total = 0.0
    for k in range(p.N):
        total += float(p.stage_cost(k, z.x[k], z.u[k]))
    return total + float(p.stage_cost(p.N, z.x[p.N]))


def eval_constraints(p: ProblemDef, z: Trajectory) -> np.ndarray:
    """Equality residual: component 0 is x_0 - x0bar, k+1 is x_{k+1} - f_k."""
    check_point(p, z)
    c = np.empty((p.N + 1, p.n_x))
    c[0] = z.x[0] - p.x0
    for k in range(p.N):
        c[k + 1] = z.x[k + 1] - np.asarray(p.dynamics(k, z.x[k], z.u[k]))
    return c.ravel()


def eval_lagrangian_gradient(p: ProblemDef, z: Trajectory, lam: DualTrajectory):
    """Gradient of L(z, lam) = g(z) + lam^T f(z).

    Returns ``(grad_z, grad_lam)`` as flat stage-major vectors.  The KKT
    residual is the 2-norm of their concatenation.
    """
    check_point(p, z, lam)
    gx = np.empty((p.N + 1, p.n_x))
    gu = np.empty((p.N, p.n_u))
    glam = np.empty((p.N + 1, p.n_x))
    glam[0] = z.x[0] - p.x0
    lm = lam.lam
    for k in range(p.N):
        cgx, cgu = p.cost_gradient(k, z.x[k], z.u[k])
        A, B = p.dynamics_jacobians(k, z.x[k], z.u[k])
        gx[k] = cgx + lm[k] - A.T @ lm[k + 1]
        gu[k] = cgu - B.T @ lm[k + 1]
        glam[k + 1] = z.x[k + 1] - np.asarray(p.dynamics(k, z.x[k], z.u[k]))
    gx[p.N] = p.cost_gradient(p.N, z.x[p.N]) + lm[p.N]
    return stack_primal(gx, gu), glam.ravel()


def kkt_residual(p: ProblemDef, z: Trajectory, lam: DualTrajectory) -> float:
    """Norm of the stacked Lagrangian gradient and constraint violation."""
    gz, gl = eval_lagrangian_gradient(p, z, lam)
    return float(np.sqrt(gz @ gz + gl @ gl))


def _merit_terms(p: ProblemDef, z: Trajectory, lam: DualTrajectory):
    """One fused pass returning (L, grad_z, grad_lam) for merit evaluations."""
    check_point(p, z, lam)
    gx = np.empty((p.N + 1, p.n_x))
    gu = np.empty((p.N, p.n_u))
    glam = np.empty((p.N + 1, p.n_x))
    glam[0] = z.x[0] - p.x0
    lm = lam.lam
    lagr = float(lm[0] @ glam[0])
    for k in range(p.N):
        xk, uk = z.x[k], z.u[k]
        lagr += float(p.stage_cost(k, xk, uk))
        cgx, cgu = p.cost_gradient(k, xk, uk)
        A, B = p.dynamics_jacobians(k, xk, uk)
        gx[k] = cgx + lm[k] - A.T @ lm[k + 1]
        gu[k] = cgu - B.T @ lm[k + 1]
        glam[k + 1] = z.x[k + 1] - np.asarray(p.dynamics(k, xk, uk))
        lagr += float(lm[k + 1] @ glam[k + 1])
    lagr += float(p.stage_cost(p.N, z.x[p.N]))
    gx[p.N] = p.cost_gradient(p.N, z.x[p.N]) + lm[p.N]
    return lagr, stack_primal(gx, gu), glam.ravel()


def eval_merit(p: ProblemDef, z: Trajectory, lam: DualTrajectory,
               eta: PenaltyParams) -> float:
    """Exact augmented Lagrangian L + eta1/2 ||grad_lam L||^2 + eta2/2 ||grad_z L||^2."""
    lagr, gz, gl = _merit_terms(p, z, lam)
    return lagr + 0.5 * eta.eta1 * float(gl @ gl) + 0.5 * eta.eta2 * float(gz @ gz)


def stage_hessian_blocks(p: ProblemDef, z: Trajectory, lam: DualTrajectory):
    """Exact Lagrangian Hessian blocks (Q, S, R) and Jacobians (A, B).

    Q has shape (N+1, n_x, n_x) including the terminal block; S, R, A, B have
    leading dimension N.  Q_k, S_k, R_k include the dynamics curvature
    contracted with lam_{k+1}.
    """
    check_point(p, z, lam)
    nx, nu = p.n_x, p.n_u
    Q = np.empty((p.N + 1, nx, nx))
    S = np.empty((p.N, nu, nx))
    R = np.empty((p.N, nu, nu))
    A = np.empty((p.N, nx, nx))
    B = np.empty((p.N, nx, nu))
    for k in range(p.N):
        Qc, Sc, Rc = p.cost_hessian(k, z.x[k], z.u[k])
        W = np.asarray(p.dynamics_hessian_contraction(k, z.x[k], z.u[k], lam.lam[k + 1]))
        Q[k] = Qc + W[:nx, :nx]
        S[k] = Sc + W[nx:, :nx]
        R[k] = Rc + W[nx:, nx:]
        A[k], B[k] = p.dynamics_jacobians(k, z.x[k], z.u[k])
    Q[p.N] = p.cost_hessian(p.N, z.x[p.N])
    return Q, S, R, A, B


def hessian_vector_product(Q, S, R, vx: np.ndarray, vu: np.ndarray):
    """Stagewise H @ v for block-diagonal H with blocks [[Q, S^T], [S, R]]."""
    N = vu.shape[0]
    hx = np.einsum("kij,kj->ki", Q[:N], vx[:N]) + np.einsum("kji,kj->ki", S, vu)
    hu = np.einsum("kij,kj->ki", S, vx[:N]) + np.einsum("kij,kj->ki", R, vu)
    hxN = Q[N] @ vx[N]
    return np.vstack([hx, hxN[None, :]]), hu


def jacobian_products(A, B, vx, vu, w):
    """Constraint Jacobian products (G v, G^T w) for the staircase structure.

    ``w`` has shape (N+1, n_x).  Returns (Gv with shape (N+1, n_x),
    (GTw_x, GTw_u) stage arrays).
    """
    N = vu.shape[0]
    Gv = np.empty_like(w)
    Gv[0] = vx[0]
    Gv[1:] = vx[1:] - np.einsum("kij,kj->ki", A, vx[:N]) - np.einsum("kij,kj->ki", B, vu)
    GTx = np.empty_like(vx)
    GTx[:N] = w[:N] - np.einsum("kji,kj->ki", A, w[1:])
    GTx[N] = w[N]
    GTu = -np.einsum("kji,kj->ki", B, w[1:])
    return Gv, (GTx, GTu)


def eval_merit_gradient(p: ProblemDef, z: Trajectory, lam: DualTrajectory,
                        eta: PenaltyParams):
    """Gradient of the augmented Lagrangian.

    Computed as the 2x2 block operator applied to the Lagrangian gradient,

        [ I + eta2 H   eta1 G^T ] [ grad_z L ]
        [ eta2 G       I        ] [ grad_lam L ],

    with the exact (unmodified) Lagrangian Hessian H.  Returns flat
    ``(grad_z_merit, grad_lam_merit)``.
    """
    gz, gl = eval_lagrangian_gradient(p, z, lam)
    Q, S, R, A, B = stage_hessian_blocks(p, z, lam)
    vx, vu = split_primal(gz, p.N, p.n_x, p.n_u)
    w = gl.reshape(p.N + 1, p.n_x)
    hx, hu = hessian_vector_product(Q, S, R, vx, vu)
    Gv, (GTx, GTu) = jacobian_products(A, B, vx, vu, w)
    mz = gz + eta.eta2 * stack_primal(hx, hu) + eta.eta1 * stack_primal(GTx, GTu)
    ml = gl + eta.eta2 * Gv.ravel()
    return mz, ml


# ---------------------------------------------------------------------------
# CSV serialization of primal/dual points
# ---------------------------------------------------------------------------

def _atomic_writer(path: str):
    d = os.path.dirname(os.path.abspath(path)) or "."
    return tempfile.NamedTemporaryFile("w", dir=d, delete=False, newline="")


def save_point_csv(path: str, p: ProblemDef, z: Trajectory, lam: DualTrajectory):
    """Write one row per stage; control columns are empty at stage N."""
    check_point(p, z, lam)
    header = (["stage"]
              + [f"x_{i}" for i in range(p.n_x)]
              + [f"u_{i}" for i in range(p.n_u)]
              + [f"lambda_{i}" for i in range(p.n_x)])
    tmp = _atomic_writer(path)
    try:
        w = csv.writer(tmp)
        w.writerow(header)
        for k in range(p.N + 1):
            us = [f"{v:.17g}" for v in z.u[k]] if k < p.N else [""] * p.n_u
            w.writerow([k]
                       + [f"{v:.17g}" for v in z.x[k]]
                       + us
                       + [f"{v:.17g}" for v in lam.lam[k]])
        tmp.close()
        os.replace(tmp.name, path)
    except BaseException:
        tmp.close()
        os.unlink(tmp.name)
        raise


def load_point_csv(path: str):
    """Read a point written by :func:`save_point_csv`; dims come from the header."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n_x = sum(1 for h in header if h.startswith("x_"))
    n_u = sum(1 for h in header if h.startswith("u_"))
    N = len(rows) - 2
    x = np.zeros((N + 1, n_x))
    u = np.zeros((N, n_u))
    lm = np.zeros((N + 1, n_x))
    for row in rows[1:]:
        k = int(row[0])
        x[k] = [float(v) for v in row[1:1 + n_x]]
        if k < N:
            u[k] = [float(v) for v in row[1 + n_x:1 + n_x + n_u]]
        lm[k] = [float(v) for v in row[1 + n_x + n_u:1 + 2 * n_x + n_u]]
    return Trajectory(x, u), DualTrajectory(lm)
