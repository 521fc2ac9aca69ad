"""Exception taxonomy shared by all pipeline stages.

The CLI maps these onto its documented exit codes: usage errors are handled
by the argument parser (exit 1), ValidationError is exit 2, DataError exit 3
and ProviderError exit 4.
"""


class UniteError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(UniteError):
    """A parameter or configuration value is out of its documented range."""


class DataError(UniteError):
    """Input data violates a contract (parse failure, missing ids, bad shapes)."""


class EmptyCorpusError(DataError):
    """An operation that requires documents received none."""


class CoverageError(DataError):
    """A per-document mapping does not cover every required document id."""


class CorpusExhausted(UniteError):
    """No unselected candidates remain; the sampling loop stops."""


class ProviderError(UniteError):
    """The model-state provider failed; carries the partial run report if any."""

    def __init__(self, message: str, partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report
