"""Error taxonomy.

Misuse and invalid input raise ``ValueError`` subclasses; numerical failures
raise ``SolverError`` subclasses. The CLI maps the two families to exit codes
2 and 3.
"""


class NonlinearityError(ValueError):
    """Base class for rejected perturbation specs"""


class ExponentOutOfRange(NonlinearityError):
    pass


class NonpositiveCoefficient(NonlinearityError):
    pass


class NonincreasingExponents(NonlinearityError):
    pass


class DimensionTooSmall(NonlinearityError):
    pass


class EmptyPerturbation(NonlinearityError):
    """Raised when a solver receives a diagnostic-mode (term-free) spec"""


class QOutOfRange(ValueError):
    pass


class GridMismatch(ValueError):
    pass


class NonpositiveLambda(ValueError):
    pass


class ZeroField(ValueError):
    pass


class POutOfRange(ValueError):
    pass


class DegenerateDenominator(ValueError):
    pass


class InsufficientStates(ValueError):
    pass


class ConfigParse(ValueError):
    pass


class IOFailure(OSError):
    pass


class SolverError(RuntimeError):
    """Base class for numerical failures"""


class BracketFailure(SolverError):
    pass


class NoBracket(SolverError):
    pass


class NonconvergedODE(SolverError):
    pass


class FixedPointDiverged(SolverError):
    pass


class InvarianceViolated(SolverError):
    def __init__(self, message: str, sample_index: int, time: float):
        super().__init__(message)
        self.sample_index = sample_index
        self.time = time
