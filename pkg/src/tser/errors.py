"""Exception hierarchy shared by every stage of the pipeline."""


class TSERError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TSERError, ValueError):
    """Invalid configuration or arguments."""


class DataError(TSERError, ValueError):
    """Problem with input data."""


class FormatError(DataError):
    """Input file does not follow the expected layout."""


class ParseError(DataError):
    """A field could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class IntegrityError(DataError):
    """Duplicate or inconsistent records."""


class NormalizationError(DataError):
    """A series cannot be mean-normalized."""


class StateError(TSERError, KeyError):
    """Lookup against a fitted state failed."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ShapeError(TSERError, ValueError):
    """Vector or matrix dimensions do not agree."""


class ResampleError(TSERError, ValueError):
    """A resampling algorithm cannot run on the given data."""


class TrainingError(TSERError, ValueError):
    """A learner could not be fitted."""


class ScoringError(TSERError, ValueError):
    """A forecast score is undefined."""


class AggregationError(TSERError, ValueError):
    """Scores cannot be aggregated across problems."""


class StatisticalTestError(TSERError, ValueError):
    """A statistical comparison cannot be computed."""


class RunError(TSERError, RuntimeError):
    """An experiment produced no usable results."""


class OutputError(TSERError, OSError):
    """Results could not be written."""
