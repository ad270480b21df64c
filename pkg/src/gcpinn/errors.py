"""Exception types shared across the package."""


class EvaluationError(RuntimeError):
    """A forward evaluation produced a non-finite intermediate."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""


class DivergenceError(RuntimeError):
    """Training loss became non-finite or exceeded the abort threshold."""
