"""Exception types shared across the solver."""


class InvalidSpecError(ValueError):
    """A basis or problem description violates its invariants."""


class EvaluationError(FloatingPointError):
    """A pointwise function produced non-finite values."""


class DivergenceError(FloatingPointError):
    """A forward, backward or gradient quantity became non-finite.

    ``stage`` is one of ``"state"``, ``"adjoint"``, ``"gradient"``; ``index``
    is the time index (or ``(iteration, time)`` pair) where it happened.
    ``partial`` may carry whatever result was assembled before the failure.
    """

    def __init__(self, message, stage="state", index=None, partial=None, diagnostics=None):
        super().__init__(message)
        self.stage = stage
        self.index = index
        self.partial = partial
        self.diagnostics = diagnostics or {}


class DegenerateLikelihoodError(FloatingPointError):
    def __init__(self, message, max_log_weight=float("nan")):
        super().__init__(message)
        self.max_log_weight = max_log_weight


class ConfigError(ValueError):
    """Invalid run configuration; ``line`` points into the config file if known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
