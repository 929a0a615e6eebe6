"""Joint selection and power allocation by majorize-minimize.

The relaxed joint problem couples selection, power and effective weight
through the bilinear inequality ``s*(p + xi) - p*z <= 0``.  Each outer
iteration majorizes that constraint at the current anchor -- the difference-of
-convex split adds the proximal terms
``0.5*(s - s_k)^2 + 0.5*(p - p_k)^2 + 0.5*((z + p) - (z_k + p_k))^2``
to the bilinear form, yielding a convex quadratic constraint that is tight at
the anchor and upper-bounds the original everywhere.  The resulting convex
subproblem is solved with an augmented Lagrangian on the quadratic and energy
constraints, with projected-gradient inner iterations (capped-simplex
projection for the selection columns).  The final relaxed selection is
cropped to the K largest entries per slot.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleAnchor, InvalidParams, NonConvergence
from .model import (Allocation, ResidualSummary, RunResult, Scenario, audit,
                    compute_xi, effective_s, top_k_mask)
from .numerics import (distortion_and_sensitivity, distortion_kernel,
                       project_capped_simplex_cols, slot_information_matrices)
from .options import SolverOptions
from .sseh import solve_sseh

__all__ = ["MMAnchor", "feasible_init", "surrogate_solve", "solve_jsseh", "crop_topk"]

INIT_KINDS = ("sseh", "zero", "random")


@dataclass(frozen=True)
class MMAnchor:
    """Feasible expansion point (selection, share, power), each (M, T)."""

    selection: np.ndarray
    share: np.ndarray
    power: np.ndarray


def bilinear_residual(Z, S, P, xi):
    """Original coupling constraint ``s*(p + xi) - p*z``, elementwise."""
    return S * P - P * Z + S * xi


def surrogate_constraint(Z, S, P, anchor: MMAnchor, xi):
    """Convex majorizer of the coupling constraint, tight at the anchor."""
    dz = Z + P - anchor.selection - anchor.power
    return (bilinear_residual(Z, S, P, xi)
            + 0.5 * (S - anchor.share) ** 2
            + 0.5 * (P - anchor.power) ** 2
            + 0.5 * dz ** 2)


def crop_topk(Z: np.ndarray, K: int) -> np.ndarray:
    """Boolean selection keeping the K largest entries per slot (ties toward
    the lowest index)."""
    return top_k_mask(np.asarray(Z, dtype=float), K).astype(float)


def feasible_init(sc: Scenario, kind: str = "zero", seed: int = 0,
                  opts: SolverOptions | None = None) -> MMAnchor:
    """Construct an exactly feasible anchor.

    ``zero``: uniform relaxed selection K/M with no power.  ``random``: the
    selection columns are capped-simplex projections of uniform draws and each
    sensor spends a random fraction of its remaining energy every slot.
    ``sseh``: the separate-selection solution triple.
    """
    if kind not in INIT_KINDS:
        raise InvalidParams(f"unknown init kind {kind!r}, expected one of {INIT_KINDS}")
    if kind == "sseh":
        res = solve_sseh(sc, opts)
        a = res.allocation
        return MMAnchor(a.selection.copy(), a.share.copy(), a.power.copy())
    if kind == "zero":
        Z = np.full((sc.M, sc.T), sc.K / sc.M)
        zeros = np.zeros((sc.M, sc.T))
        return MMAnchor(Z, zeros.copy(), zeros.copy())
    rng = np.random.default_rng(seed)
    Z = project_capped_simplex_cols(rng.random((sc.M, sc.T)), sc.K)
    frac = rng.uniform(0.1, 0.9, size=sc.M)
    P = np.zeros((sc.M, sc.T))
    remaining = np.zeros(sc.M)
    for t in range(sc.T):
        remaining = remaining + sc.E[:, t]
        spend = frac * remaining
        P[:, t] = spend / sc.Ts
        remaining = remaining - spend
    S = effective_s(P, Z, compute_xi(sc))
    return MMAnchor(Z, S, P)


def _objective_value(sc: Scenario, S: np.ndarray) -> float:
    X = slot_information_matrices(sc.A, sc.sigma_w2, sc.sigma_x_inv, S)
    return float(np.einsum("tkk->", np.linalg.inv(X)))


def _clip_causality(sc: Scenario, P):
    """Largest elementwise power not exceeding ``P`` that spends causally."""
    budget = np.cumsum(sc.E, axis=1) / sc.Ts
    out = np.maximum(P, 0.0)
    spent = np.zeros(sc.M)
    for t in range(sc.T):
        out[:, t] = np.minimum(out[:, t], np.maximum(budget[:, t] - spent, 0.0))
        spent += out[:, t]
    return out


def _surrogate_al(sc: Scenario, xi, anchor: MMAnchor, opts: SolverOptions, warm: dict,
                  strict: bool = True):
    """Augmented-Lagrangian solve of the convex surrogate subproblem.

    The share never enters the search state.  At fixed (Z, P) the coupling
    constraint is an elementwise parabola in the share, and because distortion
    strictly decreases in the share the best feasible share is the parabola's
    larger root, clamped at zero.  Substituting that root leaves a problem in
    (Z, P) alone whose only penalized constraints are the linear energy rows
    plus a per-element root-existence residual, so the penalty stays mild and
    the quadratic constraint is exact by construction wherever the share is
    positive.

    Returns ``(Z, S, P, info)``; ``warm`` carries multipliers and the penalty
    across calls (the constraints move with the anchor, but near convergence
    the multipliers remain good estimates).  With ``strict=False`` the solve
    is a bounded-effort descent step: only the energy rows are driven to
    tolerance, leftover share-existence violation is tolerated (the caller
    restores exact feasibility by re-deriving the share), and no error is
    raised.
    """
    M, T = sc.M, sc.T
    cum_e = np.cumsum(sc.E, axis=1)
    feas_target = 0.3 * opts.tol

    anchor_gap = float(np.max(bilinear_residual(anchor.selection, anchor.share,
                                                anchor.power, xi)))
    if anchor_gap > 1e-4:
        raise InfeasibleAnchor(f"anchor violates the coupling constraint by {anchor_gap:.3e}")

    rho = warm.get("rho", opts.penalty_init)
    mu_q = warm.get("mu_q", np.zeros((M, T)))
    mu_e = warm.get("mu_e", np.zeros((M, T)))
    step = warm.get("step", 1.0)

    kernel = distortion_kernel(sc.A, sc.sigma_w2, sc.sigma_x_inv)
    s_bar, z_bar, p_bar = anchor.share, anchor.selection, anchor.power

    def shares(Z, P):
        # constraint at fixed (Z, P) reads 0.5 s^2 + b s + c <= 0; g_q <= 0
        # exactly when some s >= 0 satisfies it
        b = xi + P - s_bar
        dz = Z + P - z_bar - p_bar
        c = (-P * Z + 0.5 * s_bar * s_bar + 0.5 * (P - p_bar) ** 2
             + 0.5 * dz * dz)
        root = np.sqrt(np.maximum(b * b - 2.0 * c, 0.0))
        s_up = root - b
        S = np.where((root > 0.0) & (s_up > 0.0), s_up, 0.0)
        g_q = c - 0.5 * np.minimum(b, 0.0) ** 2
        return S, b, c, dz, root, g_q

    def project(Z, P):
        return project_capped_simplex_cols(Z, sc.K), np.maximum(P, 0.0)

    def penalty(g_q, Ge):
        yq = np.maximum(mu_q + rho * g_q, 0.0)
        ye = np.maximum(mu_e + rho * Ge, 0.0)
        return (np.sum(yq * yq) - np.sum(mu_q * mu_q)
                + np.sum(ye * ye) - np.sum(mu_e * mu_e)) / (2.0 * rho)

    def al_value(Z, P):
        S, _, _, _, _, g_q = shares(Z, P)
        d, _ = kernel(S, grad=False)
        Ge = sc.Ts * np.cumsum(P, axis=1) - cum_e
        return float(np.sum(d)) + penalty(g_q, Ge)

    def al_grad(Z, P):
        S, b, c, dz, root, g_q = shares(Z, P)
        d, g_sens = kernel(S)
        Ge = sc.Ts * np.cumsum(P, axis=1) - cum_e
        yq = np.maximum(mu_q + rho * g_q, 0.0)
        ye = np.maximum(mu_e + rho * Ge, 0.0)
        r = np.maximum(root, 1e-12)
        # include the s_up == 0 boundary so the one-sided derivative can open
        # shares from a saturated point (the zero anchor starts exactly there)
        live = (root > 0.0) & (root - b >= 0.0)
        ds_db = np.where(live, b / r - 1.0, 0.0)
        ds_dc = np.where(live, -1.0 / r, 0.0)
        dc_dp = -Z + (P - p_bar) + dz
        dc_dz = -P + dz
        gZ = (yq - g_sens * ds_dc) * dc_dz
        gP = (-g_sens * (ds_db + ds_dc * dc_dp)
              + yq * (dc_dp - np.minimum(b, 0.0))
              + sc.Ts * np.cumsum(ye[:, ::-1], axis=1)[:, ::-1])
        value = float(np.sum(d)) + penalty(g_q, Ge)
        return value, gZ, gP

    def fixed_point_residual(Z, P, gZ, gP):
        Zp, Pp = project(Z - gZ, P - gP)
        return max(np.max(np.abs(Z - Zp)), np.max(np.abs(P - Pp)))

    def violation(Z, P):
        S, _, c, _, _, _ = shares(Z, P)
        Ge = sc.Ts * np.cumsum(P, axis=1) - cum_e
        qv = float(np.max(np.where(S > 0.0, 0.0, np.maximum(c, 0.0))))
        return max(0.0, float(np.max(Ge))), max(0.0, qv)

    Z = anchor.selection.copy()
    P = anchor.power.copy()

    if strict:
        outer_budget = opts.outer_max_iter
        inner_budget = opts.inner_max_iter
        fp_target = opts.tol
    else:
        # bounded effort: the caller re-anchors and calls again, so a rough
        # descent step per unit time beats a polished one
        outer_budget = min(opts.outer_max_iter, 1)
        inner_budget = min(opts.inner_max_iter, 400)
        fp_target = 10.0 * opts.tol
    # progress finer than the caller's convergence test can resolve is wasted
    prog_tol = 0.3 * opts.mm_tol
    total_inner = 0
    viol = np.inf
    fp_res = np.inf
    best_fp = np.inf
    fp_stalls = 0
    viol_stalls = 0
    for outer in range(outer_budget):
        tol_inner = max(fp_target, min(1e-3, 0.1 * viol if np.isfinite(viol) else 1e-3))
        # a warm step left tiny by a previous endgame deadlocks Armijo
        step = max(step, 1.0)
        f_cur = al_value(Z, P)
        f_outer0 = f_cur
        f_ckpt = f_cur
        for _ in range(inner_budget):
            total_inner += 1
            _, gZ, gP = al_grad(Z, P)
            moved = False
            for _bt in range(40):
                Zt, Pt = project(Z - step * gZ, P - step * gP)
                dist2 = np.sum((Zt - Z) ** 2) + np.sum((Pt - P) ** 2)
                if dist2 == 0.0:
                    break
                f_new = al_value(Zt, Pt)
                if f_new <= f_cur - 1e-4 * dist2 / step:
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
            Z, P, f_cur = Zt, Pt, f_new
            step = min(step * 1.25, 1e3)
            if total_inner % 10 == 0:
                fp_res = fixed_point_residual(Z, P, gZ, gP)
                if fp_res <= tol_inner:
                    break
                if not strict:
                    if f_ckpt - f_cur <= prog_tol * max(1.0, abs(f_cur)):
                        break
                    f_ckpt = f_cur
        _, gZ, gP = al_grad(Z, P)
        fp_res = fixed_point_residual(Z, P, gZ, gP)
        S, _, _, _, _, g_q = shares(Z, P)
        Ge = sc.Ts * np.cumsum(P, axis=1) - cum_e
        viol_e, viol_q = violation(Z, P)
        # loose mode only polices the energy rows; leftover share-existence
        # violation is erased downstream by re-deriving the share
        new_viol = max(viol_e, viol_q) if strict else viol_e
        mu_q = np.maximum(mu_q + rho * g_q, 0.0)
        mu_e = np.maximum(mu_e + rho * Ge, 0.0)
        if new_viol <= feas_target and fp_res <= fp_target:
            viol = new_viol
            break
        if not strict and new_viol <= feas_target \
                and f_outer0 - f_cur <= prog_tol * max(1.0, abs(f_cur)):
            # energy rows hold and this whole outer bought less objective
            # than the caller can measure
            viol = new_viol
            break
        if new_viol <= feas_target:
            # feasible but the inner solve has stopped improving: accept the
            # best-effort point rather than escalating the penalty (the outer
            # MM loop supplies the remaining optimality progress)
            if fp_res >= 0.9 * best_fp:
                fp_stalls += 1
                if fp_stalls >= 2:
                    viol = new_viol
                    break
            else:
                fp_stalls = 0
        elif new_viol > 0.25 * viol:
            # two stuck outers before raising the penalty (the inner solve,
            # not the penalty, is often the laggard), and a hard cap so the
            # subproblem never turns stiff enough to freeze the line search
            viol_stalls += 1
            if viol_stalls >= 2:
                rho = min(rho * 2.0, 1e4)
                viol_stalls = 0
        else:
            viol_stalls = 0
        best_fp = min(best_fp, fp_res)
        viol = new_viol
    else:
        if strict and viol > feas_target:
            raise NonConvergence(
                f"surrogate solve stalled: violation {viol:.3e}, residual {fp_res:.3e}",
                residual=float(max(viol, fp_res)),
            )

    warm["rho"] = rho
    warm["mu_q"] = mu_q
    warm["mu_e"] = mu_e
    warm["step"] = step
    info = {"residual": float(max(viol, fp_res)), "violation": float(viol),
            "inner_iterations": total_inner}
    return Z, S, P, info


def surrogate_solve(sc: Scenario, anchor: MMAnchor,
                    opts: SolverOptions | None = None):
    """Solve the convex majorized subproblem at ``anchor``.

    Returns ``(Z, S, P)``.  The returned point is feasible for the surrogate
    within ``opts.tol`` and its objective does not exceed the anchor's (the
    anchor itself is returned if the inexact solve fails to improve on it).
    """
    opts = opts or SolverOptions()
    xi = compute_xi(sc)
    Z, S, P, _info = _surrogate_al(sc, xi, anchor, opts, {})
    if _objective_value(sc, S) > _objective_value(sc, anchor.share):
        return anchor.selection.copy(), anchor.share.copy(), anchor.power.copy()
    return Z, S, P


def solve_jsseh(sc: Scenario, init: str = "sseh",
                opts: SolverOptions | None = None) -> RunResult:
    """Majorize-minimize outer loop, then crop to a Boolean selection.

    The objective trace is nonincreasing by construction (an iterate that
    fails to improve on its anchor is replaced by the anchor); iteration stops
    once the relative objective change stays below ``opts.mm_tol`` for
    ``opts.mm_patience`` consecutive iterations.  The reported distortion is
    evaluated after cropping, with powers unchanged.
    """
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    anchor = feasible_init(sc, init, opts.seed, opts)
    xi = compute_xi(sc)
    obj = _objective_value(sc, anchor.share)
    trace = [(0, obj, 0.0)]
    iterate_allocs = None
    if opts.record_iterates:
        iterate_allocs = [Allocation(anchor.selection.copy(), anchor.power.copy(),
                                     anchor.share.copy())]
    warm: dict = {}
    small_changes = 0
    converged = False
    residual = 0.0
    iterations = 0
    for k in range(1, opts.mm_max_iter + 1):
        Z, _, P, info = _surrogate_al(sc, xi, anchor, opts, warm, strict=False)
        # restore exact feasibility before re-anchoring: clip the powers into
        # the causal budget, then take the largest share the true coupling
        # allows (>= the surrogate share, so this is a free improvement)
        P = _clip_causality(sc, P)
        S = effective_s(P, Z, xi)
        new_obj = _objective_value(sc, S)
        if new_obj > obj:
            # inexact subproblem solve failed to improve: keep the anchor
            Z, S, P = anchor.selection, anchor.share, anchor.power
            new_obj = obj
        rel_change = abs(obj - new_obj) / max(1.0, abs(new_obj))
        anchor = MMAnchor(Z.copy(), S.copy(), P.copy())
        obj = new_obj
        residual = audit(sc, Allocation(Z, P, S), opts.tol).max_violation
        iterations = k
        trace.append((k, obj, residual))
        if iterate_allocs is not None:
            iterate_allocs.append(Allocation(Z.copy(), P.copy(), S.copy()))
        if rel_change <= opts.mm_tol:
            small_changes += 1
            if small_changes >= opts.mm_patience:
                converged = True
                break
        else:
            small_changes = 0

    Zb = crop_topk(anchor.selection, sc.K)
    share = effective_s(anchor.power, Zb, xi)
    d_slots, _ = distortion_and_sensitivity(sc.A, sc.sigma_w2, sc.sigma_x_inv, share)
    alloc = Allocation(Zb, anchor.power.copy(), share)
    report = audit(sc, alloc, opts.tol)
    return RunResult(
        allocation=alloc,
        per_slot_distortion=d_slots,
        total_distortion=float(np.sum(d_slots)),
        residuals=ResidualSummary(kkt=float(residual), feasibility=report.max_violation),
        wall_time=time.perf_counter() - t_start,
        converged=converged,
        iterations=iterations,
        iterates=np.asarray(trace),
        pre_crop_allocation=Allocation(anchor.selection.copy(), anchor.power.copy(),
                                       anchor.share.copy()),
        pre_crop_objective=obj,
        iterate_allocations=iterate_allocs,
    )
