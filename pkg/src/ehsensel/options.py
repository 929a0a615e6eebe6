"""Solver options shared by every iterative routine in the package."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass
class SolverOptions:
    """Step sizes, tolerances and iteration caps.

    A single options object is threaded through all solvers; each routine
    reads only the fields it needs.
    """

    # primal-dual allocation solver
    step: float = 1e-2           # base step size
    step_decay: bool = False     # 1/sqrt(k) decay once k > decay_after
    decay_after: int = 1000
    tol: float = 1e-6
    max_iter: int = 200_000
    check_every: int = 25        # residual evaluation cadence

    # majorize-minimize outer loop
    mm_tol: float = 1e-6         # relative objective change
    mm_max_iter: int = 100
    mm_patience: int = 3         # consecutive small changes before stopping
    record_iterates: bool = False

    # augmented-Lagrangian surrogate solver
    inner_max_iter: int = 4000   # projected-gradient budget per subproblem
    outer_max_iter: int = 40     # multiplier updates per surrogate solve
    penalty_init: float = 10.0

    seed: int = 0                # reproducibility for randomized pieces

    def updated(self, **kw) -> "SolverOptions":
        return replace(self, **kw)
