"""Exception hierarchy shared by every stage.

Each class carries the CLI exit code it maps to, so the command-line driver
can translate failures without knowing where they came from.
"""

from __future__ import annotations


class ParcelforgeError(Exception):
    exit_code = 5


class DataError(ParcelforgeError):
    """Input data is malformed, inconsistent, or violates an invariant."""

    exit_code = 3


class FormatError(DataError):
    """A file could not be parsed; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class UnsupportedDatatypeError(FormatError):
    def __init__(self, code: int, supported=(16, 4)):
        super().__init__(
            f"unsupported NIfTI datatype code {code}; supported codes: {list(supported)}",
            field="datatype",
        )
        self.code = code


class EmptyMaskError(DataError):
    pass


class InvariantError(DataError):
    pass


class DegenerateInputError(DataError):
    """Zero variance or zero spread where a statistic needs it."""


class ShapeError(DataError):
    pass


class DesignError(DataError):
    pass


class ParameterError(ParcelforgeError, ValueError):
    exit_code = 2


class NumericalError(ParcelforgeError):
    exit_code = 4


class ConvergenceError(NumericalError):
    def __init__(self, message: str, iterations: int):
        super().__init__(message)
        self.iterations = iterations


class PLSRankError(NumericalError):
    """Raised when the score space runs out of rank before ``K`` latents.

    ``partial`` holds the model built from the latents completed so far.
    """

    def __init__(self, message: str, step: int, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial


class DomainError(NumericalError, ValueError):
    pass


class StageError(ParcelforgeError):
    """Wraps a failure inside a pipeline stage, keeping the original exit code."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 5)


class SeedIndexError(DataError, IndexError):
    pass


class PolicyError(ParameterError):
    pass
