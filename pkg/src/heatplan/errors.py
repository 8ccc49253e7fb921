"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (bad geometry parameters, unknown keys, ...)."""


class ScenarioFormatError(ValueError):
    """Scenario file could not be parsed; the message names the offending field."""


class InvariantError(ValueError):
    """A loaded or constructed object violates a structural invariant."""


class DimensionError(ValueError):
    """Array arguments have incompatible shapes."""


class LabelError(ValueError):
    """A training label cannot be built for this sample (e.g. off-road goal)."""


class InfeasibleGoalError(ValueError):
    """The kinematic fallback cannot reach the requested goal."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss. Carries the offending step index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
