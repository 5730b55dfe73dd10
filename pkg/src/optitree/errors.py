"""Exception hierarchy shared across the package."""


class OptiTreeError(Exception):
    """Base class for all package errors."""


class MalformedDocument(OptiTreeError):
    """Input text is not a well-formed serialized record."""


class MissingField(MalformedDocument):
    """A required element is absent from an otherwise parseable record."""


class InvariantViolation(OptiTreeError):
    """A value fails its own declared invariants."""


class UnknownParent(OptiTreeError):
    """Referenced parent node does not exist in the tree."""


class NotAChild(OptiTreeError):
    """A reparent target is not currently a child of the given parent."""


class DuplicateType(OptiTreeError):
    """The problem-type name is already present in the tree."""


class BackendUnavailable(OptiTreeError):
    """The chat backend cannot be reached after the retry budget."""


class RequestTimeout(OptiTreeError):
    """A live completion request timed out after the retry budget."""


class TranscriptExhausted(OptiTreeError):
    """The replay transcript has no further entry for the requested stream."""


class UnboundPlaceholder(OptiTreeError):
    """A prompt template placeholder was left without a value."""


class NoStructuredBlock(OptiTreeError):
    """Completion text contains no structured block to extract."""


class MalformedStructure(OptiTreeError):
    """A structured block was found but could not be parsed or lacks fields."""


class UnparseableResponse(MalformedStructure):
    """Structured output stayed unparseable after the re-ask budget."""


class UnknownSubtypeName(OptiTreeError):
    """The backend named a problem type that is not among the candidates."""


class RunnerMissing(OptiTreeError):
    """The configured runner command cannot be invoked."""


class EmptyDataset(OptiTreeError):
    """The dataset document yielded no usable problem instances."""


class JudgmentFailed(OptiTreeError):
    """Tree search aborted mid-descent; carries the partial trace.

    The ``partial_trace`` attribute holds the SearchTrace accumulated before
    the failing judgment so callers can report how far the search got.
    """

    def __init__(self, message: str, partial_trace=None):
        super().__init__(message)
        self.partial_trace = partial_trace
