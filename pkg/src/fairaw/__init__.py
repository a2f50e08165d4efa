"""Rank-one anti-windup coordination of saturated resource-sharing networks."""

__version__ = "0.1.0"

from .equilibrium import (
    EquilibriumPoint,
    EquilibriumReport,
    ExistenceStatus,
    MaximizerSet,
    Status,
    candidate_equilibrium,
    equilibrium_report,
    existence_condition,
    maximizing_set,
)
from .fairness_lp import FairnessCertificate, certify, lp_feasible, min_infnorm
from .model import (
    ClosedLoopState,
    ControllerGains,
    CouplingMatrix,
    Disturbance,
    control_law,
    deadzone,
    saturate,
    validate_coupling,
)
from .simulate import (
    DisturbanceSchedule,
    SimulationConfig,
    SimulationResult,
    integrate,
    rhs_coordinated,
    rhs_uncoordinated,
)

__all__ = [
    "ClosedLoopState",
    "ControllerGains",
    "CouplingMatrix",
    "Disturbance",
    "DisturbanceSchedule",
    "EquilibriumPoint",
    "EquilibriumReport",
    "ExistenceStatus",
    "FairnessCertificate",
    "MaximizerSet",
    "SimulationConfig",
    "SimulationResult",
    "Status",
    "candidate_equilibrium",
    "certify",
    "control_law",
    "deadzone",
    "equilibrium_report",
    "existence_condition",
    "integrate",
    "lp_feasible",
    "maximizing_set",
    "min_infnorm",
    "rhs_coordinated",
    "rhs_uncoordinated",
    "saturate",
    "validate_coupling",
]
