"""Exception types shared across the estimation stack."""


class EstimationError(Exception):
    """Base class for runtime failures of the estimators."""


class DegenerateWeightsError(EstimationError):
    """All importance weights vanished or became non-finite in a measurement update."""


class DegenerateResponsibilitiesError(EstimationError):
    """The current iterate is off the support of every mixture component."""


class SupportMismatchError(EstimationError):
    """A smoothing denominator is exactly zero; a particle is unreachable."""


class ModelClassError(EstimationError):
    """The model does not satisfy the assumptions of the requested algorithm."""


class ConfigurationError(EstimationError):
    """Invalid experiment configuration, reported before any computation runs."""
