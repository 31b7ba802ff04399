"""Exception hierarchy shared across the package."""


class MulaneError(Exception):
    """Base class for all domain errors."""


class ParseError(MulaneError):
    pass


class ValidationError(MulaneError):
    pass


class SinkNodeError(ValidationError):
    pass


class NonConvergenceError(MulaneError):
    pass


class NodeNotInLayer(MulaneError, KeyError):
    pass


class InfeasibleAllocation(MulaneError, ValueError):
    pass


class CapExceeded(InfeasibleAllocation):
    pass


class OverlapError(MulaneError):
    pass


class EnumerationTooLarge(MulaneError):
    pass


class InvalidGamma(MulaneError, ValueError):
    pass


class ConfigError(MulaneError, ValueError):
    pass
