"""Energy-optimal driving strategies for train fleets under interval energy caps.

The library computes, for a fleet of trains sharing a journey window
[0, T] partitioned by a fixed time grid, the driving strategies that
minimise each train's energy use subject to caps on the fleet's total
consumption inside chosen grid intervals.  Strategies are built from
maximum-acceleration, speedhold, coast and maximum-brake phases; an
independent RK4 simulator re-executes every emitted profile for
verification.
"""

from .adjoint_switching import (
    AdjointConstants,
    IntervalWeights,
    constrained_speed,
    eta,
    switching_sensitivities,
    switching_speed,
)
from .errors import (
    ControlInfeasible,
    FleetDriveError,
    Infeasible,
    InfeasibleTiming,
    InvalidPhase,
    NoRoot,
    NonConvergence,
    SpeedCapExceeded,
    WeightTooLarge,
)
from .fleet_solver import (
    FleetProblem,
    FleetSolution,
    incentive_breakeven,
    residuals,
    solve,
)
from .phase_kinematics import (
    PhaseKind,
    PhaseMetrics,
    accel_metrics,
    brake_metrics,
    coast_metrics,
    hold_metrics,
)
from .sim_oracle import SimResult, VerifyReport, simulate, verify
from .strategy_profile import (
    Phase,
    ProfileEvaluation,
    SpeedProfile,
    build_profile,
    build_profile_from_hold_speeds,
    energy_sensitivity_signs,
    evaluate_profile,
    sample_profile,
    speed_at,
)
from .train_model import (
    LEVEL_TRACK,
    TrackProfile,
    TrainParams,
    classify_steep,
    max_sustainable_speed,
    optimal_braking_speed,
    phi,
    phi_prime,
    psi,
    resistance,
    speed_cap,
    tangent_line,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointConstants",
    "ControlInfeasible",
    "FleetDriveError",
    "FleetProblem",
    "FleetSolution",
    "Infeasible",
    "InfeasibleTiming",
    "IntervalWeights",
    "InvalidPhase",
    "LEVEL_TRACK",
    "NoRoot",
    "NonConvergence",
    "Phase",
    "PhaseKind",
    "PhaseMetrics",
    "ProfileEvaluation",
    "SimResult",
    "SpeedCapExceeded",
    "SpeedProfile",
    "TrackProfile",
    "TrainParams",
    "VerifyReport",
    "WeightTooLarge",
    "accel_metrics",
    "brake_metrics",
    "build_profile",
    "build_profile_from_hold_speeds",
    "classify_steep",
    "coast_metrics",
    "constrained_speed",
    "energy_sensitivity_signs",
    "eta",
    "evaluate_profile",
    "hold_metrics",
    "incentive_breakeven",
    "max_sustainable_speed",
    "optimal_braking_speed",
    "phi",
    "phi_prime",
    "psi",
    "resistance",
    "residuals",
    "sample_profile",
    "simulate",
    "solve",
    "speed_at",
    "speed_cap",
    "switching_sensitivities",
    "switching_speed",
    "tangent_line",
    "verify",
]
