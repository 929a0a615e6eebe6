"""Exact per-sensor directional waterfilling over a finite horizon.

Given nonnegative slot weights ``lam``, half-saturation constants ``xi`` and
harvested energies ``energy``, solves

    maximize   sum_t lam[t] * p[t] / (p[t] + xi[t])
    subject to Ts * sum_{l<=t} p[l] <= sum_{l<=t} energy[l]   for every t,
               p >= 0.

The optimal power has the closed form ``p[t] = W[t] * max(0, nu[t] - H[t])``
with width ``W[t] = sqrt(xi*lam/Ts)``, height ``H[t] = sqrt(xi*Ts/lam)`` and a
nondecreasing water level ``nu``.  Energy arrivals act as right-permeable
walls: unused water flows forward in time, never backward.  The construction
is exact: slots are partitioned into epochs at arrival slots, each epoch's
common level is found by an exact scan of the piecewise-linear spend function,
and adjacent groups are merged (backward, stack-wise) whenever an earlier
group's level exceeds a later one's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

__all__ = [
    "WaterfillProblem",
    "WaterfillSolution",
    "directional_waterfill",
    "waterfill_plan",
    "waterfill_core",
    "kkt_residual",
]


@dataclass(frozen=True)
class WaterfillProblem:
    """One sensor's allocation subproblem."""

    lam: np.ndarray      # slot weights, >= 0
    xi: np.ndarray       # half-saturation constants, > 0
    energy: np.ndarray   # harvested energy per slot, >= 0
    Ts: float = 1.0

    def __post_init__(self):
        for name in ("lam", "xi", "energy"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        T = self.lam.shape[0]
        if self.xi.shape != (T,) or self.energy.shape != (T,):
            raise ShapeMismatch("lam, xi and energy must share one length")


@dataclass(frozen=True)
class WaterfillSolution:
    """Optimal powers with the dual certificate pieces."""

    p: np.ndarray        # optimal power per slot
    levels: np.ndarray   # nondecreasing water levels (inf where unconstrained)
    beta: np.ndarray     # causality multipliers, nonnegative
    objective: float


def waterfill_plan(xi, energy, Ts):
    """Weight-independent structure for repeated solves on one sensor.

    Epoch starts and per-epoch budgets depend only on the arrival pattern,
    so solvers that call the waterfilling once per iteration with fresh
    weights can compute this once.  Returns an opaque tuple for
    :func:`waterfill_core`'s ``plan`` argument.
    """
    T = len(xi)
    starts = [0] + [t for t in range(1, T) if energy[t] > 0.0]
    bounds = starts + [T]
    epochs = tuple(
        (list(range(bounds[g], bounds[g + 1])), float(energy[bounds[g]]))
        for g in range(len(starts))
    )
    return (T, [float(x) / Ts for x in xi], epochs)


def waterfill_core(lam, xi, energy, Ts, plan=None, duals=True):
    """Plain-list core of the waterfilling construction.

    Accepts python sequences (hot path: called once per sensor per solver
    iteration).  Returns ``(p, levels, beta)`` as lists.  Passing the
    matching :func:`waterfill_plan` output skips the epoch scan;
    ``duals=False`` skips the level/multiplier reporting and returns
    ``(p, None, None)``.
    """
    if plan is None:
        plan = waterfill_plan(xi, energy, Ts)
    T, xi_over_ts, epochs = plan
    inf = math.inf
    if max(lam) <= 0.0:
        # degenerate: no slot carries weight, nothing is spent
        if not duals:
            return [0.0] * T, None, None
        return [0.0] * T, [0.0] * T, [0.0] * T

    W = [0.0] * T
    H = [inf] * T
    for t in range(T):
        lt = lam[t]
        if lt > 0.0:
            W[t] = math.sqrt(xi_over_ts[t] * lt)
            H[t] = xi[t] / W[t]

    def group_level(slots, budget):
        # level of a group spending `budget` joules across `slots`;
        # returns (level, cap) with cap = lowest rectangle top (for reporting)
        act = sorted((H[t], W[t]) for t in slots if W[t] > 0.0)
        cap = act[0][0] if act else inf
        if budget <= 0.0:
            return -inf, cap
        if not act:
            return inf, cap
        target = budget / Ts
        sw = 0.0
        swh = 0.0
        n = len(act)
        for j in range(n):
            h, w = act[j]
            sw += w
            swh += w * h
            nxt = act[j + 1][0] if j + 1 < n else inf
            if j + 1 == n or sw * nxt - swh >= target:
                return (target + swh) / sw, cap
        raise AssertionError("unreachable")

    # epochs start at slot 0 and at every arrival slot
    groups = []  # entries [slots, budget, level, cap]
    for ep_slots, ep_budget in epochs:
        slots = list(ep_slots)
        budget = ep_budget
        level, cap = group_level(slots, budget)
        # merge backward while an earlier group would sit above this one
        while groups and groups[-1][2] > level:
            prev = groups.pop()
            slots = prev[0] + slots
            budget += prev[1]
            level, cap = group_level(slots, budget)
        groups.append([slots, budget, level, cap])

    p = [0.0] * T
    for slots, _budget, level, _cap in groups:
        if level != inf and level != -inf:
            for t in slots:
                if W[t] > 0.0:
                    r = level - H[t]
                    if r > 0.0:
                        p[t] = W[t] * r
    if not duals:
        return p, None, None

    # reported levels: pinned for spending groups; zero-budget groups take the
    # largest dual-consistent value below both their own caps and the next level
    rep = [0.0] * len(groups)
    nxt = inf
    for gi in range(len(groups) - 1, -1, -1):
        level, cap = groups[gi][2], groups[gi][3]
        rep[gi] = min(cap, nxt) if level == -inf else level
        nxt = rep[gi]

    levels = [0.0] * T
    beta = [0.0] * T
    for gi, (slots, _b, _lv, _cap) in enumerate(groups):
        lv = rep[gi]
        b_here = 0.0 if lv == inf else 1.0 / (lv * lv)
        b_next = 0.0
        if gi + 1 < len(groups):
            nlv = rep[gi + 1]
            b_next = 0.0 if nlv == inf else 1.0 / (nlv * nlv)
        for t in slots:
            levels[t] = lv
        # the causality multiplier is the level-step at the group boundary
        beta[slots[-1]] = max(0.0, b_here - b_next)
    return p, levels, beta


def directional_waterfill(prob: WaterfillProblem, tol: float = 1e-12) -> WaterfillSolution:
    """Solve one sensor's power subproblem exactly."""
    if np.any(prob.lam < 0) or np.any(prob.xi <= 0) or np.any(prob.energy < 0):
        raise ShapeMismatch("lam and energy must be nonnegative, xi positive")
    p, levels, beta = waterfill_core(prob.lam.tolist(), prob.xi.tolist(),
                                     prob.energy.tolist(), prob.Ts)
    p = np.asarray(p)
    obj = float(np.sum(prob.lam * p / (p + prob.xi)))
    return WaterfillSolution(p, np.asarray(levels), np.asarray(beta), obj)


def kkt_residual(prob: WaterfillProblem, sol: WaterfillSolution) -> float:
    """Stationarity/feasibility certificate for a waterfilling solution.

    Maximum over: the stationarity gap of every slot, the causality
    violation, negative-dual magnitudes and complementary-slackness products.
    Zero (to rounding) certifies optimality.
    """
    lam, xi, Ts = prob.lam, prob.xi, prob.Ts
    p, beta = sol.p, sol.beta
    # B[t] = sum of causality multipliers from t onward
    B = np.cumsum(beta[::-1])[::-1]
    marginal = lam * xi / (p + xi) ** 2
    active = p > 1e-12 * max(1.0, float(np.max(p, initial=0.0)))
    stat = np.where(active, np.abs(marginal - Ts * B),
                    np.maximum(0.0, marginal - Ts * B))
    slack = np.cumsum(prob.energy) - Ts * np.cumsum(p)
    res = max(
        float(np.max(stat)),
        float(max(0.0, np.max(-slack))),
        float(max(0.0, np.max(-beta))),
        float(np.max(np.abs(beta * slack))),
    )
    return res
