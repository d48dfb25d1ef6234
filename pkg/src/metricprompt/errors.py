"""Exception hierarchy shared by every MetricPrompt module."""
from typing import Optional


class MetricPromptError(Exception):
    """Base class for all pipeline errors."""


class CorpusError(MetricPromptError):
    """Raised for unreadable or malformed datasets and invalid episode operations."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientSamplesError(CorpusError):
    """A label does not hold enough samples for the requested draw."""


class TemplateError(MetricPromptError):
    """A prompt template is missing a placeholder or cannot be rendered."""


class ScorerError(MetricPromptError):
    """The relevance scorer produced unusable output or was given bad input."""


class PoolingError(MetricPromptError):
    """A score row cannot be pooled with the requested method."""


class PivotError(MetricPromptError):
    """Representativeness cannot be computed for the given matrix."""


class AnalysisError(MetricPromptError):
    """Predictions and gold labels cannot be compared."""


class ConfigError(MetricPromptError):
    """A run configuration is invalid or cannot be loaded."""


class StageError(MetricPromptError):
    """Wraps an error raised while executing one stage of an experiment."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
