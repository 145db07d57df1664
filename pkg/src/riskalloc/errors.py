"""Exception types raised across the package."""


class RiskAllocError(Exception):
    """Base class for all package errors."""


class LengthMismatch(RiskAllocError, ValueError):
    pass


# random variables that do not line up with their scenario set
Misalignment = LengthMismatch


class NonPositiveWeight(RiskAllocError, ValueError):
    pass


class WeightSumOutOfRange(RiskAllocError, ValueError):
    pass


class InvalidRiskSpec(RiskAllocError, ValueError):
    pass


class InfeasibleEnvelope(RiskAllocError, ValueError):
    pass


class SchemaError(RiskAllocError, ValueError):
    """Instance configuration failed validation."""


class NonconcaveUtility(RiskAllocError, ValueError):
    pass


class SlaterNotVerified(RiskAllocError):
    """No strictly feasible point was supplied or found."""


class InadmissiblePolicy(RiskAllocError, ValueError):
    pass


class DomainError(RiskAllocError, ValueError):
    pass


class NegativeMultiplier(RiskAllocError, ValueError):
    pass


class GridTooLarge(RiskAllocError):
    pass


class EmptyTrace(RiskAllocError, ValueError):
    pass
