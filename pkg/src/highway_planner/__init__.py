"""Corridor-based lateral path planning for structured highway driving."""

from .core import (ARCHETYPES, PlannerConfig, RoadModel, Scenario, ScenarioError,
                   SvTrack, TrajectoryPoint, VehicleState, dump_scenario,
                   generate_scenario, load_config, load_scenario)
from .corridor import Cell, Corridor, CorridorEmpty, build_corridor
from .geometry import GeometryModel, exact_half_width, fit_linear_params
from .harness import (BatchReport, ScenarioReport, SvPredictor, run_batch,
                      run_scenario, verify_collision_free)
from .planner import (InfeasibleProblem, InitialLateralState, PathSolution,
                      PlanOutcome, PlanStatus, SolverFailure, plan_cycle,
                      solve_branch_and_bound, solve_convex_equivalent)
from .qp import QpProblem, QpResult, QpStatus, check_kkt, solve_qp
from .velocity import VelocityProfile, gap_keeping_profile, load_profile

__version__ = "0.1.0"

__all__ = [
    "ARCHETYPES", "PlannerConfig", "RoadModel", "Scenario", "ScenarioError",
    "SvTrack", "TrajectoryPoint", "VehicleState", "dump_scenario",
    "generate_scenario", "load_config", "load_scenario",
    "Cell", "Corridor", "CorridorEmpty", "build_corridor",
    "GeometryModel", "exact_half_width", "fit_linear_params",
    "BatchReport", "ScenarioReport", "SvPredictor", "run_batch", "run_scenario",
    "verify_collision_free",
    "InfeasibleProblem", "InitialLateralState", "PathSolution", "PlanOutcome",
    "PlanStatus", "SolverFailure", "plan_cycle", "solve_branch_and_bound",
    "solve_convex_equivalent",
    "QpProblem", "QpResult", "QpStatus", "check_kkt", "solve_qp",
    "VelocityProfile", "gap_keeping_profile", "load_profile",
    "__version__",
]
