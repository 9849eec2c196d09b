"""Exception types shared across the toolkit."""


class EmbgeomError(Exception):
    """Base class for all domain errors raised by this package."""


class DimensionError(EmbgeomError):
    """Operands have incompatible dimensions or shapes."""


class EmptyInputError(EmbgeomError):
    """An operation that requires at least one element received none."""


class ZeroVectorError(EmbgeomError):
    """A zero-norm vector was passed where a direction is required."""


class ParseError(EmbgeomError):
    """A serialized file does not match its format contract.

    ``line`` is the 1-based line number of the offending input where one
    can be attributed, else None.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OutOfVocabularyError(EmbgeomError):
    """A token was looked up that the vocabulary does not contain."""

    def __init__(self, token):
        super().__init__(f"token not in vocabulary: {token!r}")
        self.token = token


class ContextWindowExceededError(EmbgeomError):
    """A sequence is longer than the configured context window."""


class HeadCountError(EmbgeomError):
    """The head count does not divide the model dimensionality."""


class InsufficientDataError(EmbgeomError):
    """Too few data points for the requested analysis."""


class DegenerateClassError(EmbgeomError):
    """A probe class has no positive or no negative examples."""


class DegenerateClustersWarning(UserWarning):
    """Clustering produced (near-)identical centroids."""
