"""Exception hierarchy.

Everything raised for a numerical reason derives from :class:`NumericalError`
so that front ends can map it to a single exit status.
"""


class HoneystrainError(Exception):
    """Base class for all package errors."""


class ConfigError(HoneystrainError, ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalError(HoneystrainError):
    """A computation could not produce a trustworthy result."""


class AliasingError(NumericalError):
    pass


class EllipticityError(NumericalError):
    pass


class NoDegeneracyFound(NumericalError):
    pass


class HigherDegeneracy(NumericalError):
    pass


class SymmetryMismatch(NumericalError):
    pass


class DegenerateVelocity(NumericalError):
    pass


class StructureViolation(NumericalError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ComplexMu(NumericalError):
    pass


class BoxTooSmall(NumericalError):
    pass


class SupportOverflow(NumericalError):
    pass


class GridMismatch(NumericalError, ValueError):
    pass


class EigensolverError(NumericalError):
    pass


class KrylovConvergenceError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InstabilityError(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MemoryGuardError(NumericalError):
    pass
