"""
Error hierarchy for the recommender.

Every error derives from RecommenderError and from the builtin it is
closest to, so callers can catch either.
"""
from typing import Optional, Sequence


class RecommenderError(Exception):
    """Base class for all recommender errors."""


class RatingsParseError(RecommenderError, ValueError):
    """A rating file line could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"{message} at line {line_number}"
        super().__init__(message)
        self.line_number = line_number


class RatingsValidationError(RecommenderError, ValueError):
    """Rating data violates a declared constraint."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"{message} at line {line_number}"
        super().__init__(message)
        self.line_number = line_number


class UnknownUserError(RecommenderError, KeyError):
    def __init__(self, user):
        super().__init__(f"Unknown user: {user}")
        self.user = user

    def __str__(self):
        return self.args[0]


class ParameterError(RecommenderError, ValueError):
    """A parameter is outside its valid range."""


class ObjectiveError(RecommenderError, ArithmeticError):
    """The objective returned a non-finite value."""

    def __init__(self, value: float, position: Sequence[float]):
        super().__init__(f"Objective returned non-finite value {value} at position {list(position)}")
        self.value = value
        self.position = list(position)


class ReportIntegrityError(RecommenderError, AssertionError):
    """An evaluation report is internally inconsistent."""


class ModelCacheError(RecommenderError, ValueError):
    """A cached user model record is malformed."""
