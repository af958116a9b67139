"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Input violates a documented precondition or schema invariant."""


class ConfigurationError(ValueError):
    """A configuration value is outside its legal domain."""


class ExtractionError(ValueError):
    """Answer extraction hit malformed markup (e.g. unbalanced braces)."""


class UndefinedCorrelationError(ValueError):
    """Rank correlation is undefined (constant input); callers skip the sample."""
