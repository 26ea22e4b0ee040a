"""Independent dense reference implementations used as test oracles.

Everything here deliberately avoids the package's structured solve paths:
systems are assembled densely with plain index arithmetic and solved with
numpy, finite differences are central, and Newton iterations for reference
KKT points run without any globalization.
"""

import numpy as np

from fotd.problem import DualTrajectory, ProblemDef, Trajectory


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

FD_STEP = 1e-5


def central_diff(fun, x, h=FD_STEP):
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def central_diff_jacobian(fun, x, h=FD_STEP):
    """Central-difference Jacobian of a vector function of a flat vector."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        J[:, i] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * h)
    return J


# ---------------------------------------------------------------------------
# Dense LQ saddle-point solve
# ---------------------------------------------------------------------------

def dense_lq_solve(Q, S, R, A, B, gx, gu, c0, cdyn):
    """Dense assembly and solve of the canonical LQ optimality system.

    Identical problem statement as the banded path, independent assembly.
    Returns (p, q, zeta) stage arrays.
    """
    T, nx = A.shape[0], A.shape[1]
    nu = B.shape[2]
    m = nx + nu
    nz = T * m + nx
    nc = (T + 1) * nx
    H = np.zeros((nz, nz))
    G = np.zeros((nc, nz))
    g = np.zeros(nz)
    c = np.zeros(nc)
    for k in range(T):
        ix, iu = k * m, k * m + nx
        H[ix:ix + nx, ix:ix + nx] = Q[k]
        H[iu:iu + nu, ix:ix + nx] = S[k]
        H[ix:ix + nx, iu:iu + nu] = S[k].T
        H[iu:iu + nu, iu:iu + nu] = R[k]
        g[ix:ix + nx] = gx[k]
        g[iu:iu + nu] = gu[k]
        row = (k + 1) * nx
        G[row:row + nx, ix:ix + nx] = -A[k]
        G[row:row + nx, iu:iu + nu] = -B[k]
        G[row:row + nx, k * m + m:k * m + m + nx] = np.eye(nx)
        c[row:row + nx] = cdyn[k]
    H[T * m:, T * m:] = Q[T]
    g[T * m:] = gx[T]
    G[:nx, :nx] = np.eye(nx)
    c[:nx] = c0
    K = np.block([[H, G.T], [G, np.zeros((nc, nc))]])
    sol = np.linalg.solve(K, np.concatenate([-g, c]))
    w, zeta = sol[:nz], sol[nz:].reshape(T + 1, nx)
    p = np.vstack([w[:T * m].reshape(T, m)[:, :nx], w[T * m:][None, :]])
    q = w[:T * m].reshape(T, m)[:, nx:].copy()
    return p, q, zeta


def dense_full_newton(nd):
    """Dense solve of a NewtonData system; returns (p, q, zeta)."""
    return dense_lq_solve(nd.Q, nd.S, nd.R, nd.A, nd.B, nd.gx, nd.gu,
                          -nd.glam[0], -nd.glam[1:])


def dense_reduced_hessian_eigmin(Q, S, R, A, B):
    """Smallest eigenvalue of Z^T H Z with Z an orthonormal null-space basis."""
    T, nx = A.shape[0], A.shape[1]
    nu = B.shape[2]
    m = nx + nu
    nz = T * m + nx
    nc = (T + 1) * nx
    H = np.zeros((nz, nz))
    G = np.zeros((nc, nz))
    for k in range(T):
        ix, iu = k * m, k * m + nx
        H[ix:ix + nx, ix:ix + nx] = Q[k]
        H[iu:iu + nu, ix:ix + nx] = S[k]
        H[ix:ix + nx, iu:iu + nu] = S[k].T
        H[iu:iu + nu, iu:iu + nu] = R[k]
        row = (k + 1) * nx
        G[row:row + nx, ix:ix + nx] = -A[k]
        G[row:row + nx, iu:iu + nu] = -B[k]
        G[row:row + nx, k * m + m:k * m + m + nx] = np.eye(nx)
    H[T * m:, T * m:] = Q[T]
    G[:nx, :nx] = np.eye(nx)
    _, sv, vt = np.linalg.svd(G)
    Z = vt[np.sum(sv > 1e-12):].T
    if Z.shape[1] == 0:
        return np.inf
    return float(np.linalg.eigvalsh(Z.T @ H @ Z).min())


# ---------------------------------------------------------------------------
# Dense nonlinear KKT machinery
# ---------------------------------------------------------------------------

def dense_kkt_system(p: ProblemDef, z: Trajectory, lam: DualTrajectory):
    """Dense KKT matrix and residual at an iterate, assembled from callbacks."""
    N, nx, nu = p.N, p.n_x, p.n_u
    m = nx + nu
    nz, nc = N * m + nx, (N + 1) * nx
    H = np.zeros((nz, nz))
    G = np.zeros((nc, nz))
    grad = np.zeros(nz)
    cons = np.zeros(nc)
    cons[:nx] = z.x[0] - p.x0
    for k in range(N):
        ix, iu = k * m, k * m + nx
        Qc, Sc, Rc = p.cost_hessian(k, z.x[k], z.u[k])
        W = np.asarray(p.dynamics_hessian_contraction(k, z.x[k], z.u[k],
                                                      lam.lam[k + 1]))
        blk = np.block([[Qc, Sc.T], [Sc, Rc]]) + W
        H[ix:ix + m, ix:ix + m] = blk
        A, B = p.dynamics_jacobians(k, z.x[k], z.u[k])
        gx, gu = p.cost_gradient(k, z.x[k], z.u[k])
        grad[ix:ix + nx] = gx + lam.lam[k] - A.T @ lam.lam[k + 1]
        grad[iu:iu + nu] = gu - B.T @ lam.lam[k + 1]
        row = (k + 1) * nx
        G[row:row + nx, ix:ix + nx] = -A
        G[row:row + nx, iu:iu + nu] = -B
        G[row:row + nx, ix + m:ix + m + nx] = np.eye(nx)
        cons[row:row + nx] = z.x[k + 1] - np.asarray(p.dynamics(k, z.x[k], z.u[k]))
    H[N * m:, N * m:] = p.cost_hessian(N, z.x[N])
    grad[N * m:] = p.cost_gradient(N, z.x[N]) + lam.lam[N]
    G[:nx, :nx] = np.eye(nx)
    K = np.block([[H, G.T], [G, np.zeros((nc, nc))]])
    return K, np.concatenate([grad, cons])


def newton_solve_to_kkt(p: ProblemDef, z0=None, lam0=None, tol=1e-12,
                        max_iters=100):
    """Plain dense Newton iteration on the KKT system (no globalization)."""
    N, nx, nu = p.N, p.n_x, p.n_u
    m = nx + nu
    z = z0.copy() if z0 is not None else Trajectory.zeros(p)
    lam = lam0.copy() if lam0 is not None else DualTrajectory.zeros(p)
    for _ in range(max_iters):
        K, r = dense_kkt_system(p, z, lam)
        if np.linalg.norm(r) <= tol:
            return z, lam
        d = np.linalg.solve(K, -r)
        w = d[:N * m + nx]
        z.x[:N] += w[:N * m].reshape(N, m)[:, :nx]
        z.u += w[:N * m].reshape(N, m)[:, nx:]
        z.x[N] += w[N * m:]
        lam.lam += d[N * m + nx:].reshape(N + 1, nx)
    raise AssertionError("oracle Newton iteration did not reach a KKT point")


# ---------------------------------------------------------------------------
# Generic linear-quadratic test problem
# ---------------------------------------------------------------------------

def make_random_lq(N, nx, nu, seed=0, definite=True, affine=True):
    """Random LQ problem instance with analytic callbacks.

    Costs are 1/2 w^T H_k w + h_k^T w per stage, dynamics A_k x + B_k u + c_k.
    ``definite=True`` makes every stage block positive definite.
    """
    rng = np.random.default_rng(seed)

    def sym(n):
        M = rng.standard_normal((n, n))
        return M @ M.T + (0.7 * np.eye(n) if definite else -0.2 * np.eye(n))

    Q = np.stack([sym(nx) for _ in range(N + 1)])
    S = 0.2 * rng.standard_normal((N, nu, nx))
    R = np.stack([sym(nu) for _ in range(N)])
    qx = rng.standard_normal((N + 1, nx))
    qu = rng.standard_normal((N, nu))
    A = 0.6 * rng.standard_normal((N, nx, nx))
    B = rng.standard_normal((N, nx, nu))
    cdyn = rng.standard_normal((N, nx)) if affine else np.zeros((N, nx))
    x0 = rng.standard_normal(nx)
    zero = np.zeros((nx + nu, nx + nu))

    def stage_cost(k, x, u=None):
        if k == N:
            return 0.5 * float(x @ Q[N] @ x) + float(qx[N] @ x)
        return (0.5 * float(x @ Q[k] @ x) + float(u @ S[k] @ x)
                + 0.5 * float(u @ R[k] @ u) + float(qx[k] @ x)
                + float(qu[k] @ u))

    def cost_gradient(k, x, u=None):
        if k == N:
            return Q[N] @ x + qx[N]
        return Q[k] @ x + S[k].T @ u + qx[k], S[k] @ x + R[k] @ u + qu[k]

    def cost_hessian(k, x, u=None):
        if k == N:
            return Q[N]
        return Q[k], S[k], R[k]

    prob = ProblemDef(
        N=N, n_x=nx, n_u=nu, x0=x0,
        stage_cost=stage_cost, cost_gradient=cost_gradient,
        cost_hessian=cost_hessian,
        dynamics=lambda k, x, u: A[k] @ x + B[k] @ u + cdyn[k],
        dynamics_jacobians=lambda k, x, u: (A[k], B[k]),
        dynamics_hessian_contraction=lambda k, x, u, lam: zero,
    )
    data = dict(Q=Q, S=S, R=R, qx=qx, qu=qu, A=A, B=B, cdyn=cdyn, x0=x0)
    return prob, data


def random_point(p: ProblemDef, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    z = Trajectory(rng.uniform(-scale, scale, (p.N + 1, p.n_x)),
                   rng.uniform(-scale, scale, (p.N, p.n_u)))
    lam = DualTrajectory(rng.uniform(-scale, scale, (p.N + 1, p.n_x)))
    return z, lam
