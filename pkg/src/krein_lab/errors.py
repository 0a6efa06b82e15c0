"""Exception hierarchy for the toolkit.

Every failure mode raised by the library derives from KreinLabError so
callers can catch broadly; the subclasses mirror the distinct contract
violations of the individual operations.
"""


class KreinLabError(Exception):
    """Base class for all toolkit errors."""


class ConstructionError(KreinLabError, ValueError):
    """Invalid raw data handed to a constructor (negative mass, bad grid)."""


class IntegrabilityError(KreinLabError, ValueError):
    """A required integral of the measure is not finite."""


class ResourceLimitError(KreinLabError, ValueError):
    """Request exceeds the documented size limits (atom count, matrix size)."""


class RepresentationError(KreinLabError, TypeError):
    """Operands are represented incompatibly for the requested operation."""


class DomainError(KreinLabError, ValueError):
    """Evaluation point outside the admissible domain (e.g. Im z <= 0)."""


class ArgumentError(KreinLabError, ValueError):
    """Argument outside the operation's documented range."""


class NormalizationError(KreinLabError, ValueError):
    """No admissible normalization constant for the requested condition."""


class PreconditionError(KreinLabError, ValueError):
    """Input violates a stated hypothesis of the operation."""


class AccuracyError(KreinLabError, ArithmeticError):
    """Too many evaluation points failed to converge."""


class IndeterminateRatioError(KreinLabError, ArithmeticError):
    """Denominator transform underflowed along the entire schedule."""


class NumericError(KreinLabError, ArithmeticError):
    """Numerical backend failure (eigensolver non-convergence, overflow)."""
