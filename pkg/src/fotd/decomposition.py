"""Overlapping temporal decomposition of the horizon and of Newton solves.

The horizon [0, N] is cut at knots n_0 < ... < n_M into M exclusive
intervals, each extended by ``b`` stages on both ends:

    m1_i = max(n_i - b, 0),    m2_i = min(n_{i+1} + b, N).

A decomposition operator slices a full-horizon point onto the extended
intervals; the composition operator rebuilds a full-horizon point by taking
stage k from the unique interval whose exclusive range [n_i, n_{i+1})
contains it (variables on overlap stages are discarded), with stage N coming
from the last interval.

Each subproblem is the truncation of the full linear-quadratic Newton
problem onto [m1, m2], with its initial state pinned to a boundary value and
its terminal cost adjusted: the terminal Hessian block gains a quadratic
proximity penalty mu, and the terminal linear term absorbs the boundary
guesses for the next-stage multiplier and terminal control.  With all
boundary values set to zero, solving the M subproblems in parallel and
composing the exclusive parts yields the approximate search direction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import banded
from .exceptions import MuTooSmallError
from .newton import NewtonData, NewtonDirection, PIVOT_TOL
from .problem import stack_primal


@dataclass(frozen=True)
class DecompositionPlan:
    """Knots and extended-interval boundaries for an overlapping split."""

    N: int
    b: int
    knots: tuple
    m1: tuple
    m2: tuple

    @property
    def M(self) -> int:
        return len(self.knots) - 1


def make_plan(N: int, M: Optional[int] = None, b: int = 1,
              knots: Optional[Sequence[int]] = None) -> DecompositionPlan:
    """Build a plan from evenly spaced knots, or from explicit ones.

    Even spacing requires M to divide N and b >= 1.  Explicit knots may be
    uneven and tolerate b = 0, which expresses plain (non-overlapping)
    truncations.
    """
    if knots is None:
        if M is None:
            raise ValueError("either M or explicit knots are required")
        if M < 1 or M > N:
            raise ValueError(f"M must be in [1, {N}], got {M}")
        if N % M != 0:
            raise ValueError(f"M={M} must divide N={N} for even spacing "
                             "(pass explicit knots otherwise)")
        if b < 1:
            raise ValueError(f"overlap b must be at least 1, got {b}")
        knots = tuple(i * (N // M) for i in range(M + 1))
    else:
        knots = tuple(int(k) for k in knots)
        if knots[0] != 0 or knots[-1] != N:
            raise ValueError(f"knots must run from 0 to {N}, got {knots}")
        if any(a >= c for a, c in zip(knots, knots[1:])):
            raise ValueError(f"knots must be strictly increasing, got {knots}")
        if b < 0:
            raise ValueError(f"overlap b must be nonnegative, got {b}")
    if b >= N:
        raise ValueError(f"overlap b={b} must be smaller than the horizon N={N}")
    m1 = tuple(max(k - b, 0) for k in knots[:-1])
    m2 = tuple(min(k + b, N) for k in knots[1:])
    return DecompositionPlan(N, b, knots, m1, m2)


@dataclass(frozen=True)
class BoundaryVars:
    """Boundary data handed to one subproblem.

    ``d1`` pins the initial state; ``d2``/``d3``/``d4`` are the terminal
    state, terminal control, and next-stage multiplier guesses.  The last
    subproblem (terminal boundary at N) carries only d1.
    """

    d1: np.ndarray
    d2: Optional[np.ndarray] = None
    d3: Optional[np.ndarray] = None
    d4: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, n_x: int, n_u: int, terminal: bool) -> "BoundaryVars":
        if terminal:
            return cls(np.zeros(n_x))
        return cls(np.zeros(n_x), np.zeros(n_x), np.zeros(n_u), np.zeros(n_x))


def decompose(x: np.ndarray, u: np.ndarray, lam: np.ndarray,
              plan: DecompositionPlan):
    """Slice a full-horizon point onto every extended interval.

    Returns a list of (x_i, u_i, lam_i) with states/multipliers over
    [m1, m2] and controls over [m1, m2).
    """
    return [(x[m1:m2 + 1].copy(), u[m1:m2].copy(), lam[m1:m2 + 1].copy())
            for m1, m2 in zip(plan.m1, plan.m2)]


def compose(parts: Sequence, plan: DecompositionPlan):
    """Rebuild a full-horizon point from per-interval parts.

    Stage k is taken from the unique interval with k in [n_i, n_{i+1});
    stage N from the last interval.  Overlap stages outside the exclusive
    ranges are discarded.  Raises ValueError when parts are missing or
    mis-sized.
    """
    if len(parts) != plan.M:
        raise ValueError(f"expected {plan.M} subproblem parts, got {len(parts)}")
    xi0, ui0, li0 = parts[0]
    n_x, n_u = xi0.shape[1], ui0.shape[1]
    x = np.empty((plan.N + 1, n_x))
    u = np.empty((plan.N, n_u))
    lam = np.empty((plan.N + 1, n_x))
    for i, (xi, ui, li) in enumerate(parts):
        m1, m2 = plan.m1[i], plan.m2[i]
        if xi.shape[0] != m2 - m1 + 1 or ui.shape[0] != m2 - m1:
            raise ValueError(f"part {i} does not match interval [{m1}, {m2}]")
        lo, hi = plan.knots[i], plan.knots[i + 1]
        x[lo:hi] = xi[lo - m1:hi - m1]
        u[lo:hi] = ui[lo - m1:hi - m1]
        lam[lo:hi] = li[lo - m1:hi - m1]
    xi, ui, li = parts[-1]
    x[plan.N] = xi[plan.N - plan.m1[-1]]
    lam[plan.N] = li[plan.N - plan.m1[-1]]
    return x, u, lam


@dataclass(frozen=True)
class SubproblemData:
    """Canonical LQ data of one decomposed Newton subproblem."""

    index: int
    m1: int
    m2: int
    mu: float
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    A: np.ndarray
    B: np.ndarray
    gx: np.ndarray
    gu: np.ndarray
    c0: np.ndarray
    cdyn: np.ndarray


@dataclass(frozen=True)
class SubproblemSolution:
    """Primal (p over [m1, m2], q over [m1, m2)) and dual zeta over [m1, m2]."""

    index: int
    p: np.ndarray
    q: np.ndarray
    zeta: np.ndarray


def assemble_subproblem(nd: NewtonData, plan: DecompositionPlan, i: int,
                        mu: float, d: BoundaryVars) -> SubproblemData:
    """Truncate the Newton problem onto extended interval i.

    For a terminal boundary short of N the terminal quadratic block becomes
    Q_{m2} + mu * I and the linear term
    gx_{m2} - A_{m2}^T d4 + S_{m2}^T d3 - mu * d2; when m2 = N the original
    terminal cost is restored and only d1 applies.
    """
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    m1, m2 = plan.m1[i], plan.m2[i]
    T = m2 - m1
    Q = nd.Q[m1:m2 + 1].copy()
    gx = nd.gx[m1:m2 + 1].copy()
    if m2 == plan.N:
        if d.d2 is not None or d.d3 is not None or d.d4 is not None:
            raise ValueError("terminal boundary values are not used when the "
                             "interval reaches the end of the horizon")
    else:
        Q[T] = Q[T] + mu * np.eye(nd.n_x)
        gx[T] = gx[T] - nd.A[m2].T @ d.d4 + nd.S[m2].T @ d.d3 - mu * d.d2
    return SubproblemData(
        index=i, m1=m1, m2=m2, mu=mu,
        Q=Q, S=nd.S[m1:m2], R=nd.R[m1:m2], A=nd.A[m1:m2], B=nd.B[m1:m2],
        gx=gx, gu=nd.gu[m1:m2],
        c0=d.d1.copy(), cdyn=-nd.glam[m1 + 1:m2 + 1],
    )


def _subproblem_definite(sub: SubproblemData, c: Optional[float]) -> bool:
    if c is None:
        q2 = np.einsum("kij,kij->k", sub.Q, sub.Q)
        s2 = np.einsum("kij,kij->k", sub.S, sub.S)
        r2 = np.einsum("kij,kij->k", sub.R, sub.R)
        T = sub.A.shape[0]
        blocks = np.sqrt(q2[:T] + 2.0 * s2 + r2)
        c = 10.0 * float(max(blocks.max(initial=0.0), np.sqrt(q2[T]))) + 1.0
    return banded.definiteness_pivots_ok(sub.Q, sub.S, sub.R, sub.A, sub.B, c,
                                         pivot_tol=PIVOT_TOL)


def solve_subproblem(sub: SubproblemData, c: Optional[float] = None) -> SubproblemSolution:
    """Unique KKT solution of one subproblem via the banded factorization.

    The same H + c G^T G definiteness test used on the full problem is run
    at subproblem scope first; failure raises :class:`MuTooSmallError`.
    """
    if not _subproblem_definite(sub, c):
        raise MuTooSmallError(sub.index, sub.mu)
    p, q, zeta = banded.solve_lq_kkt(sub.Q, sub.S, sub.R, sub.A, sub.B,
                                     sub.gx, sub.gu, sub.c0, sub.cdyn)
    return SubproblemSolution(sub.index, p, q, zeta)


def approximate_direction(nd: NewtonData, plan: DecompositionPlan, mu: float,
                          workers: int = 1,
                          c: Optional[float] = None) -> NewtonDirection:
    """Decomposed Newton direction: solve all subproblems with zero boundaries.

    Subproblem solves are independent and may run on a thread pool; results
    land in slots indexed by subproblem, so the composed direction does not
    depend on scheduling.
    """
    def solve_one(i: int) -> SubproblemSolution:
        d = BoundaryVars.zeros(nd.n_x, nd.n_u, terminal=plan.m2[i] == plan.N)
        return solve_subproblem(assemble_subproblem(nd, plan, i, mu, d), c=c)

    if workers > 1 and plan.M > 1:
        with ThreadPoolExecutor(max_workers=min(workers, plan.M)) as pool:
            sols = list(pool.map(solve_one, range(plan.M)))
    else:
        sols = [solve_one(i) for i in range(plan.M)]
    dx, du, dlam = compose([(s.p, s.q, s.zeta) for s in sols], plan)
    return NewtonDirection(stack_primal(dx, du), dlam.ravel())


def subproblem_kkt_residual(sub: SubproblemData, sol: SubproblemSolution) -> float:
    """Residual of the subproblem KKT system at a candidate solution."""
    return banded.lq_kkt_residual(sub.Q, sub.S, sub.R, sub.A, sub.B,
                                  sub.gx, sub.gu, sub.c0, sub.cdyn,
                                  sol.p, sol.q, sol.zeta)
