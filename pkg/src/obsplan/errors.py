"""Exception types shared across the package.

The command-line driver maps these onto process exit codes, so library code
should raise the most specific class that applies.
"""


class ObsplanError(Exception):
    """Base class for all library errors."""


class ConfigError(ObsplanError):
    """Invalid experiment configuration or unusable input arguments."""


class FormatError(ObsplanError):
    """A data file does not conform to its declared on-disk format."""


class StructureError(ObsplanError):
    """A model object violates its structural invariants (pair layout, shapes)."""


class NumericalError(ObsplanError):
    """Base class for numerical failures that abort an operation."""


class DiagonalizationError(NumericalError):
    """An eigendecomposition is too ill-conditioned to trust."""


class DegenerateRankError(NumericalError):
    """Data or a matrix has lower numerical rank than the operation requires."""

    def __init__(self, message, achievable_rank=None):
        super().__init__(message)
        self.achievable_rank = achievable_rank


class ConditioningError(NumericalError):
    """A linear solve inside a filter update is too ill-conditioned to trust."""


class ConvergenceError(NumericalError):
    """An iteration hit its step limit before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BlowUpError(NumericalError):
    """A simulated field left the trusted amplitude range."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class UnobservableError(NumericalError):
    """The (A, C) pair is unobservable where observability is required."""


class InfeasiblePlanError(ObsplanError):
    """No admissible sensor location exists at some planning step."""

    def __init__(self, message, step=None, sensor=None, partial=None):
        super().__init__(message)
        self.step = step
        self.sensor = sensor
        self.partial = partial
