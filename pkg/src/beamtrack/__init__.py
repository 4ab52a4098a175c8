"""Joint beam and channel tracking for planar phased arrays.

Steering-vector probing with three pilots per slot, the Fisher-information
bound machinery used to design the probe offsets, a recursive tracker, and a
deterministic Monte-Carlo harness with a CLI front end.
"""

from .arrays import (
    AoA,
    ArrayGeometry,
    ChannelParams,
    PilotConfig,
    ProbeSet,
    aoa_to_direction,
    noiseless_observation,
    observe,
    phase_difference_residual,
    probe_matrix,
    steering_gradient,
    steering_vector,
    wrap_phase,
)
from .crlb import (
    asymptotic_crlb,
    crlb,
    crlb_from_offsets,
    fisher_from_offsets,
    fisher_matrix,
    g_closed_form,
    gtilde_closed_form,
    weighting_matrix,
)
from .errors import (
    BeamtrackError,
    ConfigError,
    DegenerateProbeError,
    OffsetDomainError,
    SearchConvergenceError,
    SingularInformationError,
)
from .offsets import (
    REFERENCE_OFFSETS,
    GapRow,
    OffsetTriple,
    SearchConfig,
    canonical_form,
    offset_gap_report,
    offset_orbit_distance,
    search_offsets,
)
from .simulate import (
    DynamicScenario,
    MseCurve,
    StaticScenario,
    export,
    load_curve,
    rician_step,
    run_dynamic,
    run_static,
)
from .tracking import (
    Codebook,
    StepSchedule,
    TrackerState,
    coarse_sweep,
    drift_f,
    make_probes,
    noise_term,
    step_size,
    sweep_matrix,
    update,
)

__version__ = "0.1.0"

__all__ = [
    "AoA",
    "ArrayGeometry",
    "BeamtrackError",
    "ChannelParams",
    "Codebook",
    "ConfigError",
    "DegenerateProbeError",
    "DynamicScenario",
    "GapRow",
    "MseCurve",
    "OffsetDomainError",
    "OffsetTriple",
    "PilotConfig",
    "ProbeSet",
    "REFERENCE_OFFSETS",
    "SearchConfig",
    "SearchConvergenceError",
    "SingularInformationError",
    "StaticScenario",
    "StepSchedule",
    "TrackerState",
    "aoa_to_direction",
    "asymptotic_crlb",
    "canonical_form",
    "coarse_sweep",
    "crlb",
    "crlb_from_offsets",
    "drift_f",
    "export",
    "fisher_from_offsets",
    "fisher_matrix",
    "g_closed_form",
    "gtilde_closed_form",
    "load_curve",
    "make_probes",
    "noise_term",
    "noiseless_observation",
    "observe",
    "offset_gap_report",
    "offset_orbit_distance",
    "phase_difference_residual",
    "probe_matrix",
    "rician_step",
    "run_dynamic",
    "run_static",
    "search_offsets",
    "steering_gradient",
    "steering_vector",
    "step_size",
    "sweep_matrix",
    "update",
    "weighting_matrix",
    "wrap_phase",
]
