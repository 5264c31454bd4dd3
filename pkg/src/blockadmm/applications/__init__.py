"""Problem generators for smart-grid workloads plus a centralized oracle."""

from .energy import Device, EnergyMgmtInstance, gen_energy_management
from .oracle import OracleFailureError, OracleSolution, oracle_solve
from .quadratic import QuadraticInstance, gen_random_qp, standard_quadratic_instance
from .scopf import ScopfInstance, gen_scopf_qp
from .state_est import StateEstInstance, gen_state_estimation

__all__ = [
    "Device",
    "EnergyMgmtInstance",
    "gen_energy_management",
    "OracleFailureError",
    "OracleSolution",
    "oracle_solve",
    "QuadraticInstance",
    "gen_random_qp",
    "standard_quadratic_instance",
    "ScopfInstance",
    "gen_scopf_qp",
    "StateEstInstance",
    "gen_state_estimation",
]
