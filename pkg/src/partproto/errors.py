"""Exception types shared across the package."""


class PartProtoError(Exception):
    """Base class for all partproto errors."""


class DimensionMismatch(PartProtoError):
    """Array shapes are incompatible for the requested operation."""


class ZeroNormVector(PartProtoError):
    """A vector with norm <= 1e-12 reached a cosine computation."""


class StageMismatch(PartProtoError):
    """A prototype set arrived at the wrong pipeline stage."""


class EmptyInput(PartProtoError):
    """An operation that needs at least one item received none."""


class EmptyClassFeatures(EmptyInput):
    """No feature cells carry the requested class label."""


class InvalidEpisode(PartProtoError):
    """Episode contents violate the episode invariants."""


class MalformedArchive(PartProtoError):
    """Archive bytes do not conform to the container format."""


class InvalidConfig(PartProtoError):
    """Configuration values violate their declared constraints."""


class InsufficientData(PartProtoError):
    """The item pool cannot satisfy the requested episode shape."""


class NonparametricMode(PartProtoError):
    """Weight gradients were requested while the mapping matrix is disabled."""
