"""Exception and warning types.

Every error carries the CLI exit code it maps to: 2 for configuration
problems, 3 for numerical failures.
"""


class RandwaveError(Exception):
    exit_code = 3


class ConfigError(RandwaveError, ValueError):
    exit_code = 2


class UnsupportedDimensionError(RandwaveError, ValueError):
    exit_code = 2


class ExponentInfeasibleError(RandwaveError, ValueError):
    exit_code = 2


class NotApplicableError(RandwaveError, ValueError):
    exit_code = 2


class InvalidExponentError(RandwaveError, ValueError):
    exit_code = 2


class TruncationOverflowError(RandwaveError):
    def __init__(self, message, outside_mass=None):
        super().__init__(message)
        self.outside_mass = outside_mass


class SingularTimeError(RandwaveError, ValueError):
    pass


class FitFailureError(RandwaveError):
    pass


class BumpCoverageError(RandwaveError):
    pass


class TruncationBiasError(RandwaveError):
    pass


class DivergentTailError(RandwaveError):
    pass


class EtaTooLargeError(RandwaveError):
    def __init__(self, message, eta=None, ratios=None):
        super().__init__(message)
        self.eta = eta
        self.ratios = ratios


class BlowUpError(RandwaveError):
    pass


class StepTooLargeError(RandwaveError):
    pass


class GridMisconfiguredError(RandwaveError):
    pass


class WraparoundWarning(UserWarning):
    """Mass reached the edge of a periodic box."""


class AccuracyWarning(UserWarning):
    """Evaluation outside the regime where a discretization is trusted."""


class HorizonWarning(UserWarning):
    """Extrapolated tail is a large share of a truncated time integral."""
