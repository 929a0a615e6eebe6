"""Dense SPD linear algebra and projection operators shared by all solvers.

Symmetric matrices are plain float ndarrays, kept exactly symmetric by
construction (outer-product sums); positive definiteness is checked where it
matters instead of being assumed.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidK, NotPositiveDefinite, ShapeMismatch

__all__ = [
    "cholesky_spd",
    "trace_inv",
    "trace_inv_grad",
    "project_capped_simplex",
    "project_capped_simplex_cols",
    "slot_information_matrices",
    "distortion_kernel",
    "distortion_and_sensitivity",
]

# pivots at or below this fraction of the largest diagonal entry declare non-PD
PIVOT_RTOL = 1e-12


def cholesky_spd(X: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Only the lower triangle of ``X`` is read.  Raises
    :class:`NotPositiveDefinite` when a pivot falls at or below
    ``PIVOT_RTOL * max(diag(X))``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {X.shape}")
    n = X.shape[0]
    thresh = PIVOT_RTOL * float(np.max(np.abs(np.diag(X)))) if n else 0.0
    L = np.zeros_like(X)
    for j in range(n):
        pivot = X[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > thresh:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} (threshold {thresh:.3e})"
            )
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1:, j] = (X[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def trace_inv(X: np.ndarray) -> float:
    """tr(X^{-1}) for symmetric positive definite X.

    Uses the Cholesky factor: tr(X^{-1}) = ||L^{-1}||_F^2.  The full inverse
    of X is never formed.
    """
    L = cholesky_spd(X)
    Linv = np.linalg.solve(L, np.eye(L.shape[0]))
    return float(np.sum(Linv * Linv))


def trace_inv_grad(X: np.ndarray, a: np.ndarray, scale: float) -> float:
    """Magnitude of the derivative of tr(X^{-1}) along a scaled dyad.

    Returns ``scale * a^T X^{-2} a``, i.e. minus the derivative of
    ``tr((X + eps * scale * a a^T)^{-1})`` at ``eps = 0``.
    """
    a = np.asarray(a, dtype=float)
    L = cholesky_spd(X)
    y = np.linalg.solve(L.T, np.linalg.solve(L, a))
    return float(scale * (y @ y))


def project_capped_simplex(v: np.ndarray, K: int) -> np.ndarray:
    """Euclidean projection of ``v`` onto {z in [0,1]^M : sum(z) = K}."""
    v = np.asarray(v, dtype=float)
    return project_capped_simplex_cols(v[:, None], K)[:, 0]


def project_capped_simplex_cols(V: np.ndarray, K: int) -> np.ndarray:
    """Column-wise capped-simplex projection.

    The projection is ``clip(v - tau, 0, 1)`` with the shift ``tau`` chosen so
    that each column sums to ``K`` exactly.  ``sum_i clip(v_i - tau, 0, 1)`` is
    piecewise linear and nonincreasing in ``tau`` with breakpoints at ``v_i``
    and ``v_i - 1``; the crossing segment is located by an exact scan of the
    sorted breakpoints, so no tolerance is involved.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d array, got shape {V.shape}")
    M = V.shape[0]
    if K < 0 or K > M:
        raise InvalidK(f"K={K} outside [0, {M}]")
    if K == 0:
        return np.zeros_like(V)
    if K == M:
        return np.ones_like(V)

    # breakpoint at v-1 turns a coordinate's slope on (-1), at v back off (+1)
    bp = np.concatenate([V - 1.0, V], axis=0)
    dslope = np.concatenate([-np.ones_like(V), np.ones_like(V)], axis=0)
    order = np.argsort(bp, axis=0)
    bp = np.take_along_axis(bp, order, axis=0)
    dslope = np.take_along_axis(dslope, order, axis=0)
    slope = np.cumsum(dslope, axis=0)            # slope right of each breakpoint
    seg = np.diff(bp, axis=0)
    # column sums at each breakpoint, starting from M at tau = min(v) - 1
    sums = np.empty_like(bp)
    sums[0] = float(M)
    np.cumsum(slope[:-1] * seg, axis=0, out=sums[1:])
    sums[1:] += float(M)
    # last breakpoint with sum >= K; the crossing lies on the segment after it
    j = np.sum(sums >= K, axis=0) - 1
    cols = np.arange(V.shape[1])
    s_j = sums[j, cols]
    sl_j = slope[j, cols]
    b_j = bp[j, cols]
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(sl_j < 0, b_j + (s_j - K) / (-sl_j), b_j)
    return np.clip(V - tau[None, :], 0.0, 1.0)


def slot_information_matrices(obs: np.ndarray, noise_var: float,
                              prior_precision: np.ndarray,
                              share: np.ndarray) -> np.ndarray:
    """Per-slot information matrices, batched over slots.

    ``X_t = prior_precision + (1/noise_var) * sum_i share[i, t] * a_i a_i^T``
    where ``obs`` holds the observation vectors ``a_i`` as rows.  Returns an
    array of shape (T, m, m), exactly symmetric by construction.
    """
    return prior_precision[None, :, :] + (
        np.einsum("it,ia,ib->tab", share, obs, obs) / noise_var
    )


def distortion_kernel(obs: np.ndarray, noise_var: float,
                      prior_precision: np.ndarray):
    """Reusable evaluator ``share -> (d, g)`` for fixed problem data.

    ``d[t] = tr(X_t^{-1})`` and ``g[i, t] = (1/noise_var) a_i^T X_t^{-2} a_i``
    with ``X_t`` the slot information matrix.  Solvers call the returned
    closure once per iteration, so the share-independent products are
    factored out here; the m = 1 and m = 2 cases additionally use the
    closed-form inverse in place of the batched one.
    """
    obs = np.asarray(obs, dtype=float)
    m = obs.shape[1]
    if m == 1:
        q1 = obs[:, 0] ** 2 / noise_var
        p0 = prior_precision[0, 0]

        def eval_m1(share, grad=True):
            x = p0 + q1 @ share
            if not grad:
                return 1.0 / x, None
            return 1.0 / x, q1[:, None] / (x * x)[None, :]

        return eval_m1
    if m == 2:
        a1, a2 = obs[:, 0], obs[:, 1]
        q = np.empty((3, obs.shape[0]))
        q[0] = a1 * a1
        q[1] = a1 * a2
        q[2] = a2 * a2
        pp3 = np.array([prior_precision[0, 0], prior_precision[0, 1],
                        prior_precision[1, 1]])

        def eval_m2(share, grad=True):
            # X_t^{-1} = adj(X_t)/det; the sensitivity expands into three
            # dyad weights so one matmul covers every sensor at once
            x11, x12, x22 = pp3[:, None] + (q @ share) / noise_var
            x12sq = x12 * x12
            det = x11 * x22 - x12sq
            tr = x11 + x22
            if not grad:
                return tr / det, None
            Y = np.empty((3, share.shape[1]))
            np.add(x22 * x22, x12sq, out=Y[0])
            np.multiply(x12, tr, out=Y[1])
            Y[1] *= -2.0
            np.add(x11 * x11, x12sq, out=Y[2])
            g = q.T @ Y
            g /= noise_var * det * det
            return tr / det, g

        return eval_m2
    obsT = obs.T.copy()

    def eval_general(share, grad=True):
        X = slot_information_matrices(obs, noise_var, prior_precision, share)
        Xinv = np.linalg.inv(X)
        d = np.einsum("tkk->t", Xinv)
        if not grad:
            return d, None
        V = Xinv @ obsT               # (T, m, M); column i is X_t^{-1} a_i
        g = np.einsum("tai,tai->it", V, V) / noise_var
        return d, g

    return eval_general


def distortion_and_sensitivity(obs: np.ndarray, noise_var: float,
                               prior_precision: np.ndarray,
                               share: np.ndarray):
    """Per-slot trace-of-inverse values and their sensitivities.

    One-shot form of :func:`distortion_kernel`; see there for definitions.
    """
    return distortion_kernel(obs, noise_var, prior_precision)(share)
