"""Data-driven LQG design from offline input/state/output data via semidefinite programs."""
from .lti_sim import (
    LtiSystem,
    NoiseSpec,
    TrajectoryData,
    check_rank_condition,
    collect_offline_data,
    generate_noise,
    hankel,
    is_persistently_exciting,
    min_samples_for_rank,
    simulate_openloop,
)
from .riccati import DareSolution, is_schur_stable, kalman_gain, lqr_gain, solve_dare
from .lmi import (
    PseudoInverseSplit,
    build_kalman_data_sdp,
    build_kalman_robust_sdp,
    build_lqr_data_sdp,
    build_lqr_regularized_sdp,
    build_model_based_sdp,
    build_phi_min_sdp,
    gap_diagnostics,
    identified_matrices,
    norm_minimizing_split,
    pseudo_inverse_split,
    recover_kalman_gain,
    recover_lqr_gain,
)
from .lqg import (
    ControllerRealization,
    GainPair,
    build_controller,
    composite_stability,
    controller_step,
    design_noise_free,
    design_robust,
    estimation_metrics,
    simulate_closed_loop,
)
from .sdp import SdpModel, SdpSolution, Status, residuals, solve, solve_or_raise
from .systems import BATCH_REACTOR_REFERENCE_L, batch_reactor, rotating_target, scalar_system
from .zonotope import MatrixZonotope, Zonotope, contains, run_set_estimator
from .experiments import ExperimentConfig, run_experiment, scenario_config
