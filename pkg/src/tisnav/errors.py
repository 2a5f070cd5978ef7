"""Exception types shared across the positioning pipeline."""


class PositioningError(Exception):
    """Base class for every error raised by this package."""


class SceneError(PositioningError):
    """A scene or configuration failed validation."""


class GeometryError(PositioningError):
    """A solver met singular or near-singular geometry.

    Attributes:
        condition_number: Condition number of the offending normal matrix,
            or None when the failure is not conditioning related.
    """

    def __init__(self, message, condition_number=None):
        if condition_number is not None:
            message = f"{message} (condition number {condition_number:.3e})"
        super().__init__(message)
        self.condition_number = condition_number


class UnderdeterminedError(PositioningError):
    """Fewer observations than unknowns."""


class DivergenceError(PositioningError):
    """An iterative solver is moving away from any solution."""


class StageError(PositioningError):
    """A pipeline stage failed. Diagnostics carry the stage tag."""

    def __init__(self, stage, message):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
