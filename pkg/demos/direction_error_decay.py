"""Exponential decay of the direction approximation error in the overlap.

At a fixed iterate, the decomposed search direction differs from the exact
full-horizon Newton direction only through the zeroed boundary values of
each subproblem.  Because boundary perturbations decay geometrically away
from the interval ends, the relative error shrinks like rho^b; this script
measures the ratio over a range of overlaps and fits the log-slope.
"""

import numpy as np

from fotd import (DualTrajectory, Trajectory, approximate_direction,
                  assemble_newton_data, make_plan, make_toy_problem,
                  solve_full_newton, toy_case_params)


def main():
    spec, _ = toy_case_params(1, N=200)
    problem = make_toy_problem(spec)
    rng = np.random.default_rng(3)
    z = Trajectory(rng.uniform(-2, 2, (201, 1)), rng.uniform(-2, 2, (200, 1)))
    z.x[0] = problem.x0
    lam = DualTrajectory(rng.uniform(-2, 2, (201, 1)))

    nd = assemble_newton_data(problem, z, lam)
    exact = solve_full_newton(nd)

    overlaps = (1, 2, 3, 4, 6, 8, 10)
    ratios = []
    print(f"{'b':>4} {'relative error':>16}")
    for b in overlaps:
        approx = approximate_direction(nd, make_plan(200, 10, b), mu=25.0)
        err = np.linalg.norm(np.concatenate([approx.dz - exact.dz,
                                             approx.dlam - exact.dlam]))
        ratios.append(err / exact.norm())
        print(f"{b:>4} {ratios[-1]:>16.3e}")

    slope = np.polyfit(overlaps, np.log(ratios), 1)[0]
    print(f"\nfitted log-linear slope: {slope:.3f} "
          f"(error ~ rho^b with rho ~ {np.exp(slope):.3f})")


if __name__ == "__main__":
    main()
