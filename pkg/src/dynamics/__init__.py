"""
離散動力系統：生成元、時間積分與回調
"""

from .assembly import (
    DelayLine,
    DiscreteGenerator,
    FeedbackParams,
    HypothesisReport,
    SystemKind,
    build_generator,
    validate_params,
)
from .callbacks import SimulationCallbacks
from .evolution import (
    EnergyBreakdown,
    SystemState,
    Trajectory,
    commensurate_grid,
    dissipation_audit,
    energy_breakdown,
    simulate,
    step,
)

__all__ = [
    "SystemKind",
    "FeedbackParams",
    "HypothesisReport",
    "DelayLine",
    "DiscreteGenerator",
    "validate_params",
    "build_generator",
    "SimulationCallbacks",
    "SystemState",
    "EnergyBreakdown",
    "Trajectory",
    "energy_breakdown",
    "step",
    "simulate",
    "dissipation_audit",
    "commensurate_grid",
]
