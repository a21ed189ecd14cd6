"""Exception types shared across the package."""


class VbgmError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(VbgmError):
    pass


class NotPositiveDefinite(VbgmError):
    pass


class EmptyClass(VbgmError):
    pass


class EmptyBatch(VbgmError):
    pass


class NonFiniteLoss(VbgmError):
    pass


class EmptyReferenceSet(VbgmError):
    pass


class TooFewPoints(VbgmError):
    pass


class DegenerateClustering(VbgmError):
    pass


class InvalidTargetDim(VbgmError):
    pass


class EmptyModel(VbgmError):
    pass


class MissingLabels(VbgmError):
    pass


class LengthMismatch(VbgmError):
    pass


class NonFiniteCost(VbgmError):
    pass


class EmptyList(VbgmError):
    pass


class InsufficientSamples(VbgmError):
    pass


class NonFiniteFeature(VbgmError):
    pass


class InfeasiblePlacement(VbgmError):
    pass


class ConfigError(VbgmError):
    """Invalid or unreadable configuration."""


class FormatError(VbgmError):
    """Malformed binary or text container.

    Carries the byte offset (binary formats) or line number (text formats)
    where parsing failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
