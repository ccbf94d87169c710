"""Exception types shared across the retrieval engine."""


class NdvrError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NdvrError, ValueError):
    """Input data violates a documented invariant (non-finite values, bad shapes, ...)."""


class DimensionError(ValidationError):
    """Vector or matrix dimensions do not match what an operation requires."""


class ParameterError(NdvrError, ValueError):
    """A numeric or structural parameter is out of its allowed range."""


class EmptyVideoError(ValidationError):
    """An operation that needs at least one frame received a frame-less video."""


class EmptySignatureError(ValidationError):
    """A video signature holds no keyframe descriptors at the requested level."""


class DegenerateInputError(ValidationError):
    """Input collapses to a zero vector or to identical rows where distinct data is required."""


class RankDeficiencyError(NdvrError):
    """The kernel spectrum cannot support the requested number of components.

    ``achievable_rank`` carries the number of usable components found.
    """

    def __init__(self, message: str, achievable_rank: int):
        super().__init__(message)
        self.achievable_rank = achievable_rank


class SingularMatrixError(NdvrError):
    """A matrix that must be invertible (diagonal scaling, row sums) has a zero entry."""


class FormatError(NdvrError):
    """A binary container does not start with the expected magic/version."""


class CorruptionError(FormatError):
    """A binary container is structurally damaged (truncated or inconsistent sizes)."""


class MappingError(NdvrError, LookupError):
    """An identifier or label code has no entry in the supplied mapping."""


class StageOrderError(NdvrError):
    """A pipeline stage ran before the stage that produces its inputs."""
