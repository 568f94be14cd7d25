"""Exception types raised across the package."""


class SpecMDPError(Exception):
    """Base class for library errors."""


class UndefinedMomentError(SpecMDPError, ValueError):
    pass


class UnsupportedFamilyError(SpecMDPError, ValueError):
    pass


class AliasingError(SpecMDPError, ValueError):
    """Grid too coarse for the trigonometric degree involved."""


class InsufficientExtensionError(SpecMDPError, ValueError):
    pass


class ArityError(SpecMDPError, ValueError):
    pass


class ConsistencyError(SpecMDPError, ArithmeticError):
    """Two independent evaluation routes disagree beyond tolerance."""


class NotEvenError(SpecMDPError, ValueError):
    pass


class SizeLimitError(SpecMDPError, ValueError):
    pass


class NotPSDError(SpecMDPError, ValueError):
    pass


class NotSymmetricError(SpecMDPError, ValueError):
    pass


class SingularSystemError(SpecMDPError, ArithmeticError):
    pass


class BranchError(SpecMDPError, ValueError):
    """Closed form requested outside the branch where it applies."""


class InfeasibleExperimentError(SpecMDPError, ValueError):
    pass
