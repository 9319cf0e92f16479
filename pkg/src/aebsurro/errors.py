"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line driver can map a
failure to its documented status without inspecting messages.
"""


class AebSurroError(Exception):
    exit_code = 1


class ConfigurationError(AebSurroError, ValueError):
    """Invalid simulator / run configuration or hyperparameter."""

    exit_code = 2


class MissingPrerequisiteError(AebSurroError, FileNotFoundError):
    exit_code = 3


class DataError(AebSurroError, ValueError):
    """Base for anything wrong with data files or array alignment."""

    exit_code = 4


class RejectedInputError(DataError):
    pass


class SamplingStalledError(AebSurroError, RuntimeError):
    exit_code = 4


class NormalizationError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    pass


class AlignmentError(DataError):
    def __init__(self, message, missing=(), extra=()):
        parts = [message]
        if missing:
            parts.append("missing ids: " + ", ".join(missing))
        if extra:
            parts.append("extra ids: " + ", ".join(extra))
        super().__init__("; ".join(parts))
        self.missing = tuple(missing)
        self.extra = tuple(extra)


class DimensionError(DataError):
    pass


class ValidationError(DataError):
    pass


class NotFittedError(AebSurroError, RuntimeError):
    pass


class ConditioningError(AebSurroError, ArithmeticError):
    pass


class RankError(AebSurroError, ArithmeticError):
    pass


class PCAError(AebSurroError, ArithmeticError):
    pass


class InvariantError(AebSurroError, AssertionError):
    exit_code = 5
