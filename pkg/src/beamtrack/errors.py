"""Exception types shared across the package."""


class BeamtrackError(Exception):
    """Base class for all beamtrack errors."""


class DegenerateProbeError(BeamtrackError):
    """A probe response is too small for the requested quantity (e.g. a phase)."""


class SingularInformationError(BeamtrackError):
    """The information matrix is singular or too ill-conditioned to invert."""


class OffsetDomainError(BeamtrackError):
    """An offset lies outside the open main-lobe box (-1, 1) x (-1, 1)."""


class SearchConvergenceError(BeamtrackError):
    """No optimizer start produced a usable minimum."""


class ConfigError(BeamtrackError):
    """Invalid scenario or CLI configuration."""
