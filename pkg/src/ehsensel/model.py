"""Problem data, allocations, distortion evaluation and feasibility audit.

The estimation setting: a random source with covariance ``sigma_x`` is
observed by M sensors through linear observations ``a_i`` corrupted by noise
of variance ``sigma_w2``; analog forwarding over a channel with gain
``H[i, t]`` at transmit power ``p`` contributes to reconstruction with an
effective weight ``z * p / (p + xi)``, where ``xi`` is the per-sensor-slot
half-saturation constant.  Distortion per slot is the trace of the inverse of
the resulting information matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .errors import InvalidParams, NotPositiveDefinite, ShapeMismatch

__all__ = [
    "Scenario",
    "Allocation",
    "FeasibilityReport",
    "ResidualSummary",
    "RunResult",
    "compute_xi",
    "effective_s",
    "distortion_slot",
    "distortion_profile",
    "audit",
    "top_k_mask",
]


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.

    M sensors, T slots, K selections per slot, slot length Ts, source
    dimension m.  ``A`` is (M, m) with observation vectors as rows, ``H`` and
    ``E`` are (M, T) channel gains and harvested energies.
    """

    M: int
    T: int
    K: int
    Ts: float
    m: int
    A: np.ndarray
    sigma_x: np.ndarray
    sigma_w2: float
    H: np.ndarray
    E: np.ndarray
    meta: Optional[dict] = None
    sigma_x_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("M", "T", "K", "m"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)):
                raise InvalidParams(f"{name} must be an integer, got {val!r}")
        if self.M <= 0 or self.T <= 0 or self.m <= 0:
            raise InvalidParams("M, T and m must be positive")
        if self.K < 0 or self.K > self.M:
            raise InvalidParams(f"K={self.K} outside [0, M={self.M}]")
        if not self.Ts > 0:
            raise InvalidParams(f"Ts must be positive, got {self.Ts}")
        if not self.sigma_w2 > 0:
            raise InvalidParams(f"sigma_w2 must be positive, got {self.sigma_w2}")
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "sigma_x", np.asarray(self.sigma_x, dtype=float))
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        object.__setattr__(self, "E", np.asarray(self.E, dtype=float))
        if self.A.shape != (self.M, self.m):
            raise ShapeMismatch(f"A has shape {self.A.shape}, expected {(self.M, self.m)}")
        if self.sigma_x.shape != (self.m, self.m):
            raise ShapeMismatch(f"sigma_x has shape {self.sigma_x.shape}, expected {(self.m, self.m)}")
        for name in ("H", "E"):
            arr = getattr(self, name)
            if arr.shape != (self.M, self.T):
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {(self.M, self.T)}")
        if not np.allclose(self.sigma_x, self.sigma_x.T, atol=1e-12):
            raise InvalidParams("sigma_x must be symmetric")
        if np.any(self.H <= 0):
            raise InvalidParams("channel gains H must be positive")
        if np.any(self.E < 0):
            raise InvalidParams("harvested energies E must be nonnegative")
        try:
            numerics.cholesky_spd(self.sigma_x)
        except NotPositiveDefinite as exc:
            raise InvalidParams(f"sigma_x is not positive definite: {exc}") from exc
        object.__setattr__(self, "sigma_x_inv", np.linalg.inv(self.sigma_x))


@dataclass(frozen=True)
class Allocation:
    """Selection, power and effective-weight matrices, all (M, T).

    ``selection`` may be relaxed (values in [0, 1]) or Boolean; ``share`` is
    the effective contribution weight of each sensor-slot pair.
    """

    selection: np.ndarray
    power: np.ndarray
    share: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "selection", np.asarray(self.selection, dtype=float))
        object.__setattr__(self, "power", np.asarray(self.power, dtype=float))
        object.__setattr__(self, "share", np.asarray(self.share, dtype=float))
        if not (self.selection.shape == self.power.shape == self.share.shape):
            raise ShapeMismatch(
                "selection/power/share shapes differ: "
                f"{self.selection.shape}, {self.power.shape}, {self.share.shape}"
            )


@dataclass(frozen=True)
class FeasibilityReport:
    """Maximum violations of the feasibility constraints, plus a verdict."""

    causality: float
    cardinality: float
    box: float
    nonnegativity: float
    s_consistency: float
    tol: float
    passed: bool

    @property
    def max_violation(self) -> float:
        return max(self.causality, self.cardinality, self.box,
                   self.nonnegativity, self.s_consistency)


@dataclass(frozen=True)
class ResidualSummary:
    kkt: float
    feasibility: float


@dataclass
class RunResult:
    """Outcome of one solver run."""

    allocation: Allocation
    per_slot_distortion: np.ndarray
    total_distortion: float
    residuals: ResidualSummary
    wall_time: float
    converged: bool
    iterations: int
    iterates: Optional[np.ndarray] = None       # rows (iter, objective, residual)
    dual_weights: Optional[np.ndarray] = None   # final multipliers of the allocation solver
    dual_rates: Optional[np.ndarray] = None     # causality multipliers per sensor-slot
    pre_crop_allocation: Optional[Allocation] = None
    pre_crop_objective: Optional[float] = None
    iterate_allocations: Optional[list] = None
    events: Optional[list] = None               # event-driven recompute log

    def __post_init__(self):
        total = float(np.sum(self.per_slot_distortion))
        if abs(total - self.total_distortion) > 1e-12 * max(1.0, abs(total)):
            raise InvalidParams(
                f"total distortion {self.total_distortion} does not equal the "
                f"per-slot sum {total}"
            )


def compute_xi(sc: Scenario) -> np.ndarray:
    """Per-sensor-slot half-saturation constants, shape (M, T).

    ``xi[i, t] = (a_i^T sigma_x a_i / sigma_w2 + 1) / H[i, t]``: the power at
    which a sensor's effective weight reaches half of its selection value.
    """
    quad = np.einsum("ia,ab,ib->i", sc.A, sc.sigma_x, sc.A)
    return (quad[:, None] / sc.sigma_w2 + 1.0) / sc.H


def effective_s(P: np.ndarray, Z: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    """Effective contribution weight ``P * Z / (P + Xi)``, elementwise.

    Saturates toward ``Z`` as power grows; zero power contributes nothing.
    """
    P = np.asarray(P, dtype=float)
    Z = np.asarray(Z, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    if not (P.shape == Z.shape == Xi.shape):
        raise ShapeMismatch(f"shapes differ: {P.shape}, {Z.shape}, {Xi.shape}")
    return P * Z / (P + Xi)


def distortion_slot(sc: Scenario, s: np.ndarray) -> float:
    """Reconstruction distortion of one slot given effective weights ``s``."""
    s = np.asarray(s, dtype=float)
    if s.shape != (sc.M,):
        raise ShapeMismatch(f"s has shape {s.shape}, expected {(sc.M,)}")
    X = sc.sigma_x_inv + np.einsum("i,ia,ib->ab", s, sc.A, sc.A) / sc.sigma_w2
    return numerics.trace_inv(X)


def distortion_profile(sc: Scenario, share: np.ndarray) -> np.ndarray:
    """Per-slot distortion vector for a full (M, T) matrix of weights."""
    share = np.asarray(share, dtype=float)
    if share.shape != (sc.M, sc.T):
        raise ShapeMismatch(f"share has shape {share.shape}, expected {(sc.M, sc.T)}")
    d, _ = numerics.distortion_and_sensitivity(sc.A, sc.sigma_w2, sc.sigma_x_inv, share)
    return d


def audit(sc: Scenario, alloc: Allocation, tol: float = 1e-6,
          cardinality_target: float | np.ndarray | None = None) -> FeasibilityReport:
    """Feasibility audit of an allocation against its scenario.

    Reports the maximum violation of energy causality, per-slot selection
    cardinality, selection box bounds, nonnegativity of power and share, and
    the share-consistency inequality ``share <= power*selection/(power+xi)``.
    ``cardinality_target`` overrides the per-slot selection count (the
    relaxation bound drops the cardinality constraint, so it audits against
    M rather than K).
    """
    Z, P, S = alloc.selection, alloc.power, alloc.share
    if Z.shape != (sc.M, sc.T):
        raise ShapeMismatch(f"allocation shape {Z.shape} does not match scenario {(sc.M, sc.T)}")
    if cardinality_target is None:
        cardinality_target = sc.K
    xi = compute_xi(sc)
    causality = float(max(0.0, np.max(sc.Ts * np.cumsum(P, axis=1) - np.cumsum(sc.E, axis=1))))
    cardinality = float(np.max(np.abs(Z.sum(axis=0) - cardinality_target)))
    box = float(max(0.0, np.max(-Z), np.max(Z - 1.0)))
    nonneg = float(max(0.0, np.max(-P), np.max(-S)))
    s_cons = float(max(0.0, np.max(S - P * Z / (P + xi))))
    worst = max(causality, cardinality, box, nonneg, s_cons)
    return FeasibilityReport(causality, cardinality, box, nonneg, s_cons,
                             tol, worst <= tol)


def top_k_mask(values: np.ndarray, K: int) -> np.ndarray:
    """Boolean (M, T) mask of the K largest entries per column.

    Ties are broken toward the lowest sensor index (stable ordering).
    """
    values = np.asarray(values, dtype=float)
    M, T = values.shape
    if K < 0 or K > M:
        raise InvalidParams(f"K={K} outside [0, {M}]")
    mask = np.zeros((M, T), dtype=bool)
    if K == 0:
        return mask
    order = np.argsort(-values, axis=0, kind="stable")
    cols = np.arange(T)[None, :]
    mask[order[:K, :], cols] = True
    return mask
