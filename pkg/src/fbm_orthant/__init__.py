"""Exact asymptotics for a drifted, correlated fBm entering a shifted orthant.

The package finds the critical time ``t0`` and index partition of the
quadratic program behind ``P(u)``, evaluates the constants of the
asymptotic formula, estimates the Pickands constant by simulation and
checks everything against direct Monte Carlo.
"""

__version__ = "0.1.0"

from .constants import AsymptoticResult, assemble_asymptotics, c_K, mvn_cdf
from .critical import Case, CriticalPoint, UnsupportedCaseError, find_t0
from .estimator import OrthantAsymptotics
from .model import ModelError, ModelSpec, load_model
from .montecarlo import MCEstimate, compare_asymptotics, estimate_p
from .pickands import PickandsEstimate, estimate_pickands, estimate_pickands_T
from .qp import QpSolution, solve_qp

__all__ = [
    "AsymptoticResult",
    "Case",
    "CriticalPoint",
    "MCEstimate",
    "ModelError",
    "ModelSpec",
    "OrthantAsymptotics",
    "PickandsEstimate",
    "QpSolution",
    "UnsupportedCaseError",
    "assemble_asymptotics",
    "c_K",
    "compare_asymptotics",
    "estimate_p",
    "estimate_pickands",
    "estimate_pickands_T",
    "find_t0",
    "load_model",
    "mvn_cdf",
    "solve_qp",
]
