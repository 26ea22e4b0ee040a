"""Head-to-head: decomposed SQP, Schwarz, and the centralized baseline.

All three methods solve the same scalar benchmark instance from the same
random initialization.  The Schwarz baseline solves nonlinear subproblems
to optimality every outer iteration, so it needs very few iterations but
each one is expensive; the decomposed SQP performs a single Newton step per
subproblem instead, and the centralized baseline factors the full-horizon
system without decomposition.
"""

import time

from fotd import (SolverConfig, make_initializations, make_toy_problem,
                  schwarz_solve, solve, toy_case_params)


def main():
    spec, _ = toy_case_params(1, N=500)
    problem = make_toy_problem(spec)
    init = make_initializations(problem, count=2, seed=7)[1]
    cfg = SolverConfig(mu=25.0, M=10, b=5)

    rows = []
    for name in ("fotd", "centralized", "schwarz"):
        t0 = time.perf_counter()
        if name == "schwarz":
            report = schwarz_solve(problem, cfg, init)
        else:
            report = solve(problem, cfg, init, mode=name)
        rows.append((name, report.status, report.iterations,
                     report.final_kkt, time.perf_counter() - t0))

    print(f"{'method':>12} {'status':>14} {'iters':>6} {'final KKT':>11} "
          f"{'wall [s]':>9}")
    for name, status, iters, kkt, wall in rows:
        print(f"{name:>12} {status:>14} {iters:>6d} {kkt:>11.2e} {wall:>9.2f}")


if __name__ == "__main__":
    main()
