"""Exception hierarchy shared across the package."""


class HandMotionError(Exception):
    """Base class for all domain errors raised by this package."""


class ValidationError(HandMotionError):
    """An input violates a stated precondition or type invariant."""


class DegenerateRotationError(ValidationError):
    """A 6D rotation block has (near-)parallel column vectors."""


class InputTooShortError(ValidationError):
    """A signal is shorter than the minimum a filter requires."""


class EmptyInputError(ValidationError):
    """An operation received an empty sequence."""


class FormatError(HandMotionError):
    """A persisted file has bad magic, version, or structure."""

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path


class ChecksumError(FormatError):
    """A payload failed its CRC check."""


class CodecError(HandMotionError):
    """A token stream violates the interleaving grammar."""

    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"position {position}: {message}")
        self.position = position


class VocabularyError(HandMotionError):
    """A token id falls outside the vocabulary it is used with."""


class StageConfigError(HandMotionError):
    """A training-stage configuration is inconsistent with its batch."""


class RefinementEmptyError(HandMotionError):
    """Closed-vocabulary refinement produced zero valid pairs."""


class AnnotationClientError(HandMotionError):
    """Base class for failures of a text-model client."""


class ClientTimeoutError(AnnotationClientError):
    """The client did not answer within its timeout."""


class ClientRateLimitError(AnnotationClientError):
    """The backend rejected the call due to rate limiting."""


class ClientMalformedError(AnnotationClientError):
    """The backend answered with an unparsable payload."""


class StageFailureError(AnnotationClientError):
    """An annotation stage failed after exhausting retries."""

    def __init__(self, message, transcript=None):
        super().__init__(message)
        self.transcript = transcript or []
