"""Exception hierarchy shared by the library and the CLI."""


class APError(Exception):
    """Base class for all library errors."""


class DimensionError(APError, ValueError):
    """A frequency vector or weight vector does not match the basis dimension."""


class BasisMismatchError(APError, ValueError):
    """Two series built on different bases were combined."""


class CapacityError(APError, RuntimeError):
    """A product exceeded the support budget with no magnitude threshold to fall back on."""


class DomainError(APError, ValueError):
    """A requested time is not a point of the sampling grid."""


class ContractionError(APError, RuntimeError):
    """Picard iteration failed to converge or left the contraction ball.

    Attributes
    ----------
    ratios : list of float
        Measured ratios of successive iterate distances.
    """

    def __init__(self, message, ratios=None):
        super().__init__(message)
        self.ratios = list(ratios or [])


class SupportClosureError(APError, ValueError):
    """The nonlinearity produced frequencies inside the declared box but outside the support."""

    def __init__(self, message, escaping=None):
        super().__init__(message)
        self.escaping = list(escaping or [])


class ConfigError(APError, ValueError):
    """Experiment configuration failed validation."""
