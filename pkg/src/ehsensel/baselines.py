"""Reference policies: energy-oblivious selection and the relaxation bound.

``joshi_boyd_select`` picks one sensor subset from the measurement geometry
alone (convex relaxation of the single-slot selection problem, cropped to the
K largest weights).  ``solve_ss`` applies that fixed subset on every slot and
allocates power for it.  ``lower_bound`` drops the cardinality constraint
entirely, so its distortion lower-bounds every admissible policy.
"""

from __future__ import annotations

import time

import numpy as np

from .model import RunResult, Scenario, top_k_mask
from .numerics import (distortion_and_sensitivity, project_capped_simplex,
                       slot_information_matrices)
from .options import SolverOptions
from .sseh import SelectionSets, power_allocation

__all__ = ["joshi_boyd_select", "solve_ss", "lower_bound"]


def _single_slot_distortion(sc: Scenario, z: np.ndarray) -> float:
    X = slot_information_matrices(sc.A, sc.sigma_w2, sc.sigma_x_inv, z[:, None])
    return float(np.trace(np.linalg.inv(X[0])))


def joshi_boyd_select(sc: Scenario,
                      opts: SolverOptions | None = None) -> tuple[np.ndarray, set]:
    """Energy-oblivious K-subset from the relaxed single-slot problem.

    Projected gradient on the capped simplex {0 <= z <= 1, sum z = K}.
    Returns the relaxed length-M weight vector together with the index set of
    its K largest entries (ties toward the lowest index).
    """
    opts = opts or SolverOptions()
    z = np.full(sc.M, sc.K / sc.M)
    f_cur = _single_slot_distortion(sc, z)
    step = 1.0
    for it in range(5000):
        _, g = distortion_and_sensitivity(sc.A, sc.sigma_w2, sc.sigma_x_inv, z[:, None])
        grad = -g[:, 0]
        moved = False
        for _bt in range(40):
            zt = project_capped_simplex(z - step * grad, sc.K)
            dist2 = float(np.sum((zt - z) ** 2))
            if dist2 == 0.0:
                break
            f_new = _single_slot_distortion(sc, zt)
            if f_new <= f_cur - 1e-4 * dist2 / step:
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        z, f_cur = zt, f_new
        step = min(step * 1.25, 1e3)
        probe = project_capped_simplex(z - grad, sc.K)
        if np.max(np.abs(z - probe)) <= opts.tol:
            break
    chosen = top_k_mask(z[:, None], sc.K)[:, 0]
    return z, set(int(i) for i in np.flatnonzero(chosen))


def solve_ss(sc: Scenario, opts: SolverOptions | None = None) -> RunResult:
    """Fixed geometry-based subset on every slot, power allocated for it."""
    t0 = time.perf_counter()
    _, chosen = joshi_boyd_select(sc, opts)
    t_select = time.perf_counter() - t0
    mask = np.zeros(sc.M, dtype=bool)
    mask[sorted(chosen)] = True
    sets = SelectionSets(np.repeat(mask[:, None], sc.T, axis=1))
    res = power_allocation(sc, sets, opts)
    res.wall_time += t_select
    return res


def lower_bound(sc: Scenario, opts: SolverOptions | None = None) -> RunResult:
    """All sensors active on every slot (cardinality constraint dropped)."""
    sets = SelectionSets.all_sensors(sc.M, sc.T)
    return power_allocation(sc, sets, opts, cardinality_target=sc.M)
