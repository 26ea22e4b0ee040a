"""Structured linear algebra for stagewise linear-quadratic KKT systems.

Every Newton-type solve in this package reduces to one canonical problem:

    minimize    sum_{k<T} { 1/2 (p_k; q_k)^T [[Q_k, S_k^T], [S_k, R_k]] (p_k; q_k)
                            + gx_k^T p_k + gu_k^T q_k }
                + 1/2 p_T^T Q_T p_T + gx_T^T p_T
    subject to  p_0 = c_0,
                p_{k+1} = A_k p_k + B_k q_k + cdyn_k,   k = 0..T-1.

Its saddle-point optimality system is solved by one structured direct method:
the variables and multipliers are interleaved per stage as
(zeta_k, p_k, q_k), which makes the symmetric indefinite KKT matrix banded
with half-bandwidth 2*n_x + n_u - 1, and the band is factorized by LAPACK.

The companion definiteness test factorizes H + c * G^T G (block tridiagonal
in the primal ordering) with a banded Cholesky and inspects the pivots.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import LinearSolverError

PIVOT_TOL = 1e-10


def _add_band(ab: np.ndarray, offset: int, rows: np.ndarray, cols: np.ndarray,
              blocks: np.ndarray, lower_only: bool = False):
    """Accumulate dense blocks into banded storage ab[offset + i - j, j].

    ``rows``/``cols`` hold the absolute indices of each block's rows/columns,
    shaped (batch, r) and (batch, c); ``blocks`` is (batch, r, c).
    """
    shape = np.broadcast_shapes(rows.shape[:-1] + (rows.shape[-1], cols.shape[-1]),
                                blocks.shape)
    I = np.broadcast_to(rows[..., :, None], shape)
    J = np.broadcast_to(cols[..., None, :], shape)
    V = np.broadcast_to(blocks, shape)
    if lower_only:
        m = I >= J
        np.add.at(ab, (offset + I[m] - J[m], J[m]), V[m])
    else:
        np.add.at(ab, (offset + I - J, J), V)


def _stage_index_grid(T: int, stride: int, base: int, width: int) -> np.ndarray:
    """Index arrays (T, width) for a field at offset ``base`` within each stage."""
    return (np.arange(T)[:, None] * stride) + base + np.arange(width)[None, :]


def solve_lq_kkt(Q, S, R, A, B, gx, gu, c0, cdyn):
    """Solve the canonical LQ-DP saddle-point system by banded factorization.

    Returns ``(p, q, zeta)`` with shapes (T+1, n_x), (T, n_u), (T+1, n_x);
    zeta_0 is the multiplier of the initial pin and zeta_{k+1} of dynamics
    row k.  Raises :class:`LinearSolverError` on a singular factorization.
    """
    T, nx, nu = A.shape[0], A.shape[1], B.shape[2]
    s = 2 * nx + nu
    n = T * s + 2 * nx
    bw = s - 1  # worst-case reach: stationarity row of p_k to zeta_{k+1}
    ab = np.zeros((2 * bw + 1, n))

    zr = _stage_index_grid(T, s, 0, nx)        # zeta_k rows/cols, k < T
    pr = _stage_index_grid(T, s, nx, nx)       # p_k, k < T
    qr = _stage_index_grid(T, s, 2 * nx, nu)   # q_k, k < T
    zT = T * s + np.arange(nx)[None, :]
    pT = T * s + nx + np.arange(nx)[None, :]
    zn = np.vstack([zr[1:], zT])               # zeta_{k+1} for k < T

    eye = np.broadcast_to(np.eye(nx), (T, nx, nx))
    _add_band(ab, bw, zr, pr, eye)
    _add_band(ab, bw, pr, zr, eye)
    _add_band(ab, bw, pr, pr, Q[:T])
    _add_band(ab, bw, pr, qr, S.transpose(0, 2, 1))
    _add_band(ab, bw, qr, pr, S)
    _add_band(ab, bw, qr, qr, R)
    _add_band(ab, bw, pr, zn, -A.transpose(0, 2, 1))
    _add_band(ab, bw, qr, zn, -B.transpose(0, 2, 1))
    _add_band(ab, bw, zn, pr, -A)
    _add_band(ab, bw, zn, qr, -B)
    eye1 = np.eye(nx)[None, :, :]
    _add_band(ab, bw, zT, pT, eye1)
    _add_band(ab, bw, pT, zT, eye1)
    _add_band(ab, bw, pT, pT, Q[T][None, :, :])

    rhs = np.empty(n)
    body = rhs[: T * s].reshape(T, s)
    body[:, :nx] = np.vstack([c0[None, :], cdyn[: T - 1]])
    body[:, nx: 2 * nx] = -gx[:T]
    body[:, 2 * nx:] = -gu
    rhs[T * s: T * s + nx] = cdyn[T - 1]
    rhs[T * s + nx:] = -gx[T]

    try:
        sol = scipy.linalg.solve_banded((bw, bw), ab, rhs, check_finite=False)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolverError(f"banded KKT factorization failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise LinearSolverError("banded KKT solve produced non-finite values")

    bodys = sol[: T * s].reshape(T, s)
    zeta = np.vstack([bodys[:, :nx], sol[T * s: T * s + nx][None, :]])
    p = np.vstack([bodys[:, nx: 2 * nx], sol[T * s + nx:][None, :]])
    q = bodys[:, 2 * nx:].copy()
    return p, q, zeta


def lq_kkt_residual(Q, S, R, A, B, gx, gu, c0, cdyn, p, q, zeta) -> float:
    """2-norm of the KKT residual of a candidate (p, q, zeta)."""
    T = A.shape[0]
    rp = np.empty_like(p)
    rp[:T] = (np.einsum("kij,kj->ki", Q[:T], p[:T])
              + np.einsum("kji,kj->ki", S, q) + gx[:T]
              + zeta[:T] - np.einsum("kji,kj->ki", A, zeta[1:]))
    rp[T] = Q[T] @ p[T] + gx[T] + zeta[T]
    rq = (np.einsum("kij,kj->ki", S, p[:T]) + np.einsum("kij,kj->ki", R, q)
          + gu - np.einsum("kji,kj->ki", B, zeta[1:]))
    rc = np.empty_like(p)
    rc[0] = p[0] - c0
    rc[1:] = p[1:] - np.einsum("kij,kj->ki", A, p[:T]) \
        - np.einsum("kij,kj->ki", B, q) - cdyn
    return float(np.sqrt(sum(float(r.ravel() @ r.ravel()) for r in (rp, rq, rc))))


def lq_rhs_norm(gx, gu, c0, cdyn) -> float:
    """Norm of the KKT right-hand side (for relative residual tolerances)."""
    return float(np.sqrt(float(gx.ravel() @ gx.ravel())
                         + float(gu.ravel() @ gu.ravel())
                         + float(c0 @ c0)
                         + float(cdyn.ravel() @ cdyn.ravel())))


def definiteness_pivots_ok(Q, S, R, A, B, c: float,
                           pivot_tol: float = PIVOT_TOL) -> bool:
    """Definiteness test: does H + c * G^T G factor with pivots >= pivot_tol?

    H is the block-diagonal stage Hessian and G the staircase constraint
    Jacobian of the canonical LQ problem.  The sum is block tridiagonal; a
    banded Cholesky provides the pivots (squares of the factor's diagonal).
    Returns False on factorization breakdown.
    """
    T, nx, nu = A.shape[0], A.shape[1], B.shape[2]
    m = nx + nu
    n = T * m + nx
    bw = m + nx - 1
    ab = np.zeros((bw + 1, n))

    xr = _stage_index_grid(T, m, 0, nx)
    ur = _stage_index_grid(T, m, nx, nu)
    xn = np.vstack([xr[1:], T * m + np.arange(nx)[None, :]])

    eye = np.eye(nx)[None, :, :]
    dxx = Q[:T] + c * (eye + np.einsum("kji,kjl->kil", A, A))
    _add_band(ab, 0, xr, xr, dxx, lower_only=True)
    _add_band(ab, 0, ur, xr, S + c * np.einsum("kji,kjl->kil", B, A))
    _add_band(ab, 0, ur, ur, R + c * np.einsum("kji,kjl->kil", B, B),
              lower_only=True)
    _add_band(ab, 0, xn, xr, -c * A)
    _add_band(ab, 0, xn, ur, -c * B)
    _add_band(ab, 0, xn[-1:], xn[-1:], (Q[T] + c * np.eye(nx))[None, :, :],
              lower_only=True)

    try:
        fact = scipy.linalg.cholesky_banded(ab, lower=True, check_finite=False)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
        return False
    pivots = fact[0, :] ** 2
    return bool(np.all(pivots >= pivot_tol))
