"""Exception types raised across the package."""


class Casida1DError(Exception):
    """Base class for all package errors."""


class InvalidDensity(Casida1DError, ValueError):
    """A density array has negative entries."""


class NotOrthonormal(Casida1DError, ValueError):
    pass


class MaxIterations(Casida1DError, RuntimeError):
    pass


class PositiveOccupiedEigenvalue(Casida1DError):
    """An occupied eigenvalue is >= 0; the ground state is not admissible."""


class NotAMinimum(Casida1DError):
    """The coercivity constant is not positive."""


class NotPerp(Casida1DError, ValueError):
    """A variation has components along the occupied orbitals."""


class StepTooLarge(Casida1DError, RuntimeError):
    pass


class NonfiniteState(Casida1DError, FloatingPointError):
    pass


class SingularSystem(Casida1DError, ArithmeticError):
    pass


class SingularRestriction(SingularSystem):
    pass


class ChannelInvalid(Casida1DError, ValueError):
    pass


class SmoothingTooNarrow(Casida1DError, ValueError):
    pass


class NoConvergence(Casida1DError, RuntimeError):
    pass


class ConfigError(Casida1DError, ValueError):
    pass


class AufbauWarning(UserWarning):
    """The occupied set is not the lowest N eigenvalues."""
