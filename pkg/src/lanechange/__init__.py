"""Local-optimum lane-change stack: quintic maneuver planning against a
car-following platoon, receding-horizon tracking, and traffic impact metrics.
"""

from .carfollow import (
    CollisionStateError,
    LcmParams,
    PlatoonState,
    VehicleState,
    desired_spacing,
    lcm_acceleration,
    lcm_jerk,
    steady_spacing,
    step_platoon,
)
from .collision import (
    CollisionConfig,
    EllipseBoundary,
    boundary_of,
    min_distance,
    min_distance_info,
    rectangle_containment_check,
)
from .cost import (
    CostWeights,
    HvWeighting,
    LossBreakdown,
    av_comfort_loss,
    av_efficiency_loss,
    hv_losses,
    hv_weights,
    total_loss,
)
from .planner import (
    CandidateEvaluation,
    NoFeasiblePlanError,
    PlannerConfig,
    PlanResult,
    check_feasibility,
    evaluate_candidate,
    optimize,
    sweep_omega,
)
from .simulation import (
    EdieRegion,
    MetricsReport,
    Scenario,
    SimulationLog,
    TttResult,
    build_context,
    edie_metrics,
    export_heatmap_data,
    metrics_from_totals,
    run_scenario,
    ttt_difference,
)
from .tracker import (
    ControlInput,
    ControllerFaultError,
    KinematicState,
    MpcConfig,
    build_prediction,
    kinematic_derivative,
    linearize,
    mpc_step,
    track,
)
from .trajectory import (
    LcBoundaryConditions,
    PlannedTrajectory,
    QuinticCoeffs,
    TrajectorySample,
    build_general_trajectory,
    build_symmetric_trajectory,
    sample_at,
    shape_function,
)

__version__ = "0.1.0"
