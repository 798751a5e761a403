"""Exceptions raised across the pipeline.

Every error derives from `QworkError` and from the builtin that best matches
its meaning, so callers can catch either.
"""


class QworkError(Exception):
    """Base class for all pipeline errors."""


class InvalidDimensionError(QworkError, ValueError):
    pass


class DimensionMismatchError(QworkError, ValueError):
    pass


class NotHermitianError(QworkError, ValueError):
    pass


class InvalidStateError(QworkError, ValueError):
    pass


class NumericalFailureError(QworkError, ArithmeticError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class TruncationError(QworkError, ArithmeticError):
    def __init__(self, message: str, population: float):
        super().__init__(f"{message} (edge population={population:.3e})")
        self.population = population


class ScheduleDomainError(QworkError, ValueError):
    pass


class ScheduleSyntaxError(QworkError, ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ScheduleSemanticError(QworkError, ValueError):
    def __init__(self, message: str, segment: int):
        super().__init__(f"segment {segment}: {message}")
        self.segment = segment


class UnsupportedQuenchError(QworkError, ValueError):
    pass


class EmptyPeakSetError(QworkError, ValueError):
    pass


class NoOverlapError(QworkError, ValueError):
    pass


class FitDomainError(QworkError, ValueError):
    pass


class DegenerateFitError(QworkError, ValueError):
    pass


class ConfigError(QworkError, ValueError):
    pass


class PipelineStageError(QworkError, RuntimeError):
    """Wraps a module error with the label of the pipeline stage that raised it."""

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"stage '{stage}' failed : {type(error).__name__} : {error}")
        self.stage = stage
        self.error = error
