"""Safety-filtered coordination of automated vehicles at an intersection.

A numpy library built around three pieces:

* barrier functions (velocity bounds and a superellipse collision-avoidance
  barrier that is safe by construction) producing constraints affine in the
  stacked acceleration input;
* a dense min-norm QP (dual active set) that projects the nominal speed
  tracking controls onto the barrier constraints every sample;
* a deterministic simulation harness with an independent oriented-rectangle
  collision oracle and post-hoc invariant verification.
"""

from .barriers import (CbfGains, ConstraintRow, braking_authority,
                       collision_cbf_row, collision_cbf_value,
                       effective_decel, safe_distance, safe_distance_exact,
                       velocity_cbf_rows, velocity_cbf_values)
from .controller import (ControlDecision, ControllerConfig, DsdreWeights,
                         control_step, discretize, dsdre_gain,
                         nominal_control, sdre_factor)
from .dynamics import (AgentParams, AgentState, IntegrationDivergedError,
                       StackedState, integrate_step, resistance_force,
                       state_derivative)
from .geometry import (ConflictGraph, GeometryError, LinearPath,
                       PairGeometry, SuperellipseSpec, boundary_scale_nu,
                       build_conflict_graph, ellipse_axes, path_point,
                       separation_distance, separation_rate,
                       superellipse_value)
from .qp import (INFEASIBLE, MAX_ITER, OPTIMAL, ActiveSetSolver, QpProblem,
                 QpSolution, verify_kkt)
from .scenario import (AgentSetup, ScenarioConfig, ScenarioError,
                       load_scenario, scenario_from_dict)
from .simulate import SimTrace, SimulationAborted, run
from .smoothing import SmoothingSet, SmoothMaxParams, smooth_max
from .verification import SafetyReport, obb_collision_oracle, verify_invariants

__version__ = "0.1.0"

__all__ = [
    "AgentParams", "AgentSetup", "AgentState", "ActiveSetSolver",
    "CbfGains", "ConflictGraph", "ConstraintRow", "ControlDecision",
    "ControllerConfig", "DsdreWeights", "GeometryError", "INFEASIBLE",
    "IntegrationDivergedError", "LinearPath", "MAX_ITER", "OPTIMAL",
    "PairGeometry", "QpProblem", "QpSolution", "SafetyReport",
    "ScenarioConfig", "ScenarioError", "SimTrace", "SimulationAborted",
    "SmoothMaxParams", "SmoothingSet", "StackedState", "SuperellipseSpec",
    "boundary_scale_nu", "braking_authority", "build_conflict_graph",
    "collision_cbf_row", "collision_cbf_value", "control_step",
    "discretize", "dsdre_gain", "effective_decel", "ellipse_axes",
    "integrate_step", "load_scenario", "nominal_control",
    "obb_collision_oracle", "path_point", "resistance_force", "run",
    "safe_distance", "safe_distance_exact", "scenario_from_dict",
    "sdre_factor", "separation_distance", "separation_rate", "smooth_max",
    "state_derivative", "superellipse_value", "velocity_cbf_rows",
    "velocity_cbf_values", "verify_invariants", "verify_kkt",
]
