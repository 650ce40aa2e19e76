"""Exception types shared across modules."""


class NoConvergenceError(RuntimeError):
    """An iterative inversion failed to reach its residual target."""


class ConeViolationError(RuntimeError):
    """Cone invariance failed; carries a witness (point, vector)."""

    def __init__(self, point, vector, step: int):
        super().__init__(f"cone invariance violated at step {step}: point={point}, vector={vector}")
        self.point = point
        self.vector = vector
        self.step = step


class CouplingAdmissibilityError(ValueError):
    """Coupling strength exceeds the bound guaranteeing a diffeomorphism."""


class ConfigError(ValueError):
    """Experiment configuration failed validation; names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field
