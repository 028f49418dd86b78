"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An array argument has the wrong shape or dimensionality."""


class ParameterError(ValueError):
    """A parameter value is outside its valid domain."""


class PeriodError(ValueError):
    """A transform fails its cyclicity or minimality contract."""


class CommutativityError(ValueError):
    """Factors of a multi-way transform do not commute on probes."""


class InvarianceError(ValueError):
    """A kernel is not invariant under the paired transform."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed beyond the jitter escalation ladder."""


class ConfigError(ValueError):
    """A run configuration is malformed.  Carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class TrainingError(RuntimeError):
    """Training aborted.  Carries the iteration index and last good state."""

    def __init__(self, iteration: int, message: str, checkpoint=None):
        self.iteration = iteration
        self.checkpoint = checkpoint
        super().__init__(f"iteration {iteration}: {message}")
