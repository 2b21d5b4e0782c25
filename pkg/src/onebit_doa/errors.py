"""Exception types raised across the package."""


class OneBitDoaError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(OneBitDoaError, ArithmeticError):
    pass


class MaxDepthExceeded(OneBitDoaError, ArithmeticError):
    pass


class NoSignChange(OneBitDoaError, ValueError):
    pass


class DomainError(OneBitDoaError, ValueError):
    """Model parameter outside its admissible domain."""


class InvalidCorrelation(OneBitDoaError, ValueError):
    pass


class DegenerateModel(OneBitDoaError, ValueError):
    """Fisher information is zero, so ratios and bounds are undefined."""


class DimensionTooLarge(OneBitDoaError, ValueError):
    pass


class NormalizationFailure(OneBitDoaError, ArithmeticError):
    pass
