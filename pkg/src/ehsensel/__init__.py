"""Sensor selection and power allocation for energy-harvesting networks.

Offline policies, an event-driven online controller, scenario tooling and the
numerical kernels they share.
"""

from .baselines import joshi_boyd_select, lower_bound, solve_ss
from .errors import (EhsenselError, InfeasibleAnchor, InvalidK, InvalidParams,
                     NegativeResidual, NonConvergence, NotPositiveDefinite,
                     SchemaError, ShapeMismatch, TooLarge)
from .jsseh import (MMAnchor, crop_topk, feasible_init, solve_jsseh,
                    surrogate_solve)
from .model import (Allocation, FeasibilityReport, ResidualSummary, RunResult,
                    Scenario, audit, compute_xi, distortion_profile,
                    distortion_slot, effective_s, top_k_mask)
from .online import OnlineConfig, run_online, unspent_energy
from .options import SolverOptions
from .scenario import generate, load, save
from .sseh import SelectionSets, eh_aware_select, power_allocation, solve_sseh
from .waterfill import (WaterfillProblem, WaterfillSolution,
                        directional_waterfill, kkt_residual)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "EhsenselError", "FeasibilityReport", "InfeasibleAnchor",
    "InvalidK", "InvalidParams", "MMAnchor", "NegativeResidual",
    "NonConvergence", "NotPositiveDefinite", "OnlineConfig", "ResidualSummary",
    "RunResult", "Scenario", "SchemaError", "SelectionSets", "ShapeMismatch",
    "SolverOptions", "TooLarge", "WaterfillProblem", "WaterfillSolution",
    "audit", "compute_xi", "crop_topk", "directional_waterfill",
    "distortion_profile", "distortion_slot", "effective_s", "eh_aware_select",
    "feasible_init", "generate", "joshi_boyd_select", "kkt_residual", "load",
    "lower_bound", "power_allocation", "run_online", "save", "solve_jsseh",
    "solve_ss", "solve_sseh", "surrogate_solve", "top_k_mask",
    "unspent_energy", "__version__",
]
