"""Exception types shared across the engine."""


class CopaintError(Exception):
    """Base class for all engine errors."""


class ConstraintViolationError(CopaintError):
    """A stroke, plan, or setting violates the active media constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.field}: {v.message}" for v in self.violations))


class DimensionMismatchError(CopaintError):
    """Two rasters that must share dimensions do not."""


class StrategyParameterError(CopaintError):
    """A removal strategy carries parameters that do not belong to its kind."""


class ProviderError(CopaintError):
    """A target, embedding, or scoring provider call failed."""


class ImageDecodeError(CopaintError):
    """Bytes or a file could not be decoded as an RGB image."""


class SessionIntegrityError(CopaintError):
    """A persisted session directory is missing pieces or fails replay."""
