"""Quadrotor snap-inversion control lab: certified gain library + DQN scheduler."""

from .plant import (
    NumericalBlowup,
    PlantParams,
    SingularAttitude,
    euler_rate_matrix,
    recover_torque,
    rk4,
    rk4_step,
    rotation_matrix,
    state_derivative,
)
from .reference import ReferenceSample, TrajectoryConfig, quintic_beta, sample, snap_sup_norm
from .controller import (
    SingularInversion,
    control,
    error_state,
    external_feedback,
    flat_kinematics,
    gain_regressor,
    inversion_terms,
    realize_error_state,
)
from .certification import (
    AdmissibleLibrary,
    Certificate,
    EmptyLibrary,
    GainBounds,
    NotHurwitz,
    build_a_cl,
    build_library,
    certify,
    invariance_level,
    is_hurwitz,
    load_gain_bounds,
    routh_quartic,
    solve_lyapunov,
)
from .agent import (
    AgentConfig,
    DwellState,
    QNetwork,
    ReplayBuffer,
    RewardWeights,
    evaluate,
    load_checkpoint,
    observe,
    reward,
    save_checkpoint,
    select_action,
    td_loss_and_update,
    train,
)
from .harness import (
    EpisodeLog,
    RunConfig,
    audit_episode_csv,
    audit_episode_log,
    build_library_from_config,
    default_run_config,
    load_config,
    read_episode_csv,
    run_fixed_gain_episode,
    write_episode_csv,
)

__version__ = "0.1.0"
