"""baflow: a numerical laboratory for the continuous-time Blahut-Arimoto
flow q' = T(q) - q on finite probability simplices."""

__version__ = "0.1.0"

from .core import (
    BAProblem,
    ba_map,
    dissipation,
    dual_identity_residual,
    free_energy,
    free_energy_gradient,
    gibbs_state,
)
from .errors import NumericalError
from .flow import (
    IntegratorConfig,
    Trajectory,
    ba_fixed_point,
    entry_time_report,
    fit_decay_rate,
    integrate_flow,
    verify_dissipation,
)
from .simplex import ProbVec, TangentVec, divergence, fr_inner, project_tangent

__all__ = [
    "__version__",
    "BAProblem",
    "ProbVec",
    "TangentVec",
    "IntegratorConfig",
    "Trajectory",
    "NumericalError",
    "ba_map",
    "ba_fixed_point",
    "dissipation",
    "divergence",
    "dual_identity_residual",
    "entry_time_report",
    "fit_decay_rate",
    "fr_inner",
    "free_energy",
    "free_energy_gradient",
    "gibbs_state",
    "integrate_flow",
    "project_tangent",
    "verify_dissipation",
]
