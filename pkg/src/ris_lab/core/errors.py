class RisLabError(Exception):
    """Base class for every error raised by the lab."""


class DimensionMismatchError(RisLabError, ValueError):
    """Operand shapes do not conform."""

    def __init__(self, operation: str, *shapes: tuple[int, ...]) -> None:
        self.operation = operation
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{operation}: dimension mismatch {rendered}")


class NotHermitianError(RisLabError, ValueError):
    """Input expected to be Hermitian is not, within tolerance."""


class FactorizationError(RisLabError, ArithmeticError):
    """Matrix is not positive definite."""


class InfeasibleError(RisLabError, ValueError):
    """Input violates a physical or feasibility constraint."""


class ConfigError(RisLabError, ValueError):
    """Scenario configuration or override is invalid."""


class CheckpointError(RisLabError, OSError):
    """Checkpoint file is missing or unreadable."""
