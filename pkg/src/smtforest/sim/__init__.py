"""Simulation and statistical analysis of proof repair."""

from .analysis import (
    DirectRepairStats,
    lc_fail_monte_carlo,
    lc_fail_probability,
    lc_storage_bytes,
    max_missed_updates,
    run_direct_repair_analysis,
)
from .epidemic import EpidemicSimulation, SimMetrics, SimParams, run_epidemic_sim

__all__ = [
    "DirectRepairStats",
    "EpidemicSimulation",
    "SimMetrics",
    "SimParams",
    "lc_fail_monte_carlo",
    "lc_fail_probability",
    "lc_storage_bytes",
    "max_missed_updates",
    "run_direct_repair_analysis",
    "run_epidemic_sim",
]
