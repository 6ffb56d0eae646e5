"""Homotopy proximal mapping solvers for compressive sensing."""

__version__ = "0.1.0"

from .linalg import hard_threshold_top_s, norms, soft_threshold, support, top_s_indices
from .problems import ProblemInstance, SignalKind, load_instance, make_instance, save_instance
from .rip import RipConstants, compute_rip_constants, gamma_condition
from .solvers import Algorithm, ContractError, IterateTrace, SolverConfig, Termination, solve
from .metrics import fit_rate, recovery_report

__all__ = [
    "__version__",
    "hard_threshold_top_s",
    "norms",
    "soft_threshold",
    "support",
    "top_s_indices",
    "ProblemInstance",
    "SignalKind",
    "load_instance",
    "make_instance",
    "save_instance",
    "RipConstants",
    "compute_rip_constants",
    "gamma_condition",
    "Algorithm",
    "ContractError",
    "IterateTrace",
    "SolverConfig",
    "Termination",
    "solve",
    "fit_rate",
    "recovery_report",
]
