"""Exception hierarchy for solver failures.

``ValueError`` is used for invalid arguments (dimension mismatches, bad
parameters); everything that can go wrong *during* a solve derives from
:class:`SolverError` so drivers can catch one type and preserve the
iteration history.
"""


class SolverError(RuntimeError):
    """Base class for runtime solver failures."""


class NumericsError(SolverError):
    """A callback returned non-finite values; carries the stage index."""

    def __init__(self, stage: int, what: str):
        self.stage = stage
        super().__init__(f"non-finite {what} at stage {stage}")


class LinearSolverError(SolverError):
    """The structured KKT factorization broke down (singular system)."""


class ModificationFailure(SolverError):
    """The Levenberg ladder was exhausted without restoring definiteness."""


class MuTooSmallError(SolverError):
    """A decomposed subproblem failed its definiteness test; carries the index."""

    def __init__(self, index: int, mu: float):
        self.index = index
        self.mu = mu
        super().__init__(
            f"subproblem {index} is not positive definite on its constraint "
            f"null space with mu={mu!r}; increase the terminal penalty"
        )


class NonDescentError(SolverError):
    """The search direction is not a descent direction of the merit function."""


class LineSearchFailure(SolverError):
    """Backtracking underflowed without satisfying the Armijo condition."""


class AdaptivityFailure(SolverError):
    """Penalty rescaling failed to restore the descent inequality."""


class SubproblemFailure(SolverError):
    """An inner nonlinear subproblem solve did not converge; carries the index."""

    def __init__(self, index: int, detail: str = ""):
        self.index = index
        msg = f"nonlinear subproblem {index} did not converge"
        super().__init__(msg + (f": {detail}" if detail else ""))


class UndefinedRatioError(SolverError):
    """Direction-error ratio is undefined because the exact direction is zero."""
