"""Two-layer motion control and simulation for a two-axle compliant-framed
differential-drive robot: a bounded-curvature kinematic posture controller
cascaded into per-axle robust nonlinear-damping torque controllers, with a
physics plant, encoder/odometry models and an experiment harness."""

from .cascade import (
    AxleReference,
    FrameGeometry,
    ReferenceCascade,
    axle_velocities,
    center_from_axles,
    solve_psi,
)
from .config import ConfigError, ExperimentConfig, load_config, snapshot_config
from .dynamic import (
    AxleTorqueController,
    DynGains,
    TrackingError,
    WheelTorques,
    damping_torque,
    tracking_error,
    velocity_error,
    velocity_law,
    xi_vector,
)
from .geometry import (
    BodyVelocity,
    PolarError,
    Posture,
    polar_error_rates,
    propagate_unicycle,
    to_polar_error,
    wrap_angle,
)
from .harness import ExperimentArtifacts, run_closed_loop, run_experiment
from .kinematic import (
    CenterCommand,
    KinematicController,
    KinematicGains,
    check_initial_condition,
    control_law,
    gain_schedule,
    lyapunov_values,
    manifold_distance,
    path_manifold,
    saturate,
    sign_U,
)
from .loop import CASES, LoopState, RunResult, StepRecord, loop_step, run
from .metrics import (
    MetricsReport,
    compute_metrics,
    format_report,
    format_report_kv,
    metrics_from_records,
    read_csv,
    write_csv,
)
from .plant import (
    AxleParams,
    AxleState,
    DisturbanceSampler,
    FrameStiffness,
    PlantParams,
    SensorModel,
    SimState,
    dynamics_deriv,
    encoder_read,
    frame_force,
    frame_wrenches,
    initial_sim_state,
    odometry_update,
    step,
    total_energy,
)

__version__ = "0.1.0"
