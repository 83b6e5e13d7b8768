"""rasim: link-level simulation and joint EM-mode / beamformer optimization
for reconfigurable-antenna arrays."""

__version__ = "0.1.0"

from .arrays import (
    ArrayGeometry,
    ModeAssignment,
    ModeCodebook,
    PolarizationState,
    RadiationPattern,
    default_codebook,
    element_response,
    pattern_gain,
    polarization_coupling,
    steering_vector,
    uniform_assignment,
)
from .channel import (
    ChannelSet,
    CommUser,
    PathComponent,
    PathLossParams,
    SensingEntity,
    comm_channel,
    path_loss,
    sample_depolarization,
    sensing_channel,
)
from .beamforming import (
    BeamformingStack,
    ConnectivityMask,
    PowerModel,
    connectivity_mask,
    hybrid_factorize,
    mvdr_receive_filter,
    power_consumption,
    scnr,
    scnr_transmit_beamformer,
    sum_rate,
    wmmse_precoder,
)
from .optimizer import (
    ArchSpec,
    Objective,
    OptimizeOptions,
    SolveReport,
    coordinate_ascent_modes,
    evaluate,
    exhaustive_mode_search,
    joint_optimize,
)
from .scenario import (
    Scenario,
    ScenarioConfig,
    build_scenario,
    sample_positions,
    synthesize_channels,
)
from .sweeps import (
    SweepResult,
    SweepSpec,
    antenna_matching_report,
    sweep_angle,
    sweep_antennas,
)

__all__ = [name for name in dir() if not name.startswith("_")]
