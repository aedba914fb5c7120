"""Exception types shared across the toolkit."""


class TopicmarkError(Exception):
    """Base class for all toolkit errors."""


class EmbeddingLoadError(TopicmarkError):
    """Raised when an embedding stream cannot be parsed into a valid table."""


class VocabularyError(TopicmarkError):
    """Raised for malformed vocabularies (duplicates, bad indices)."""


class PartitionError(TopicmarkError):
    """Raised when a topic partition cannot be built or validated."""


class PartitionFormatError(PartitionError):
    """Raised when a partition file is malformed. Carries a byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FingerprintMismatchError(PartitionError):
    """Raised when a partition's vocabulary fingerprint does not match the supplied vocabulary."""

    def __init__(self, expected: str, found: str):
        super().__init__(
            f"vocabulary fingerprint mismatch: partition has {expected}, supplied vocabulary has {found}"
        )
        self.expected = expected
        self.found = found


class TopicUndeterminableError(TopicmarkError):
    """Raised when no topic can be inferred and no fallback was provided."""


class ProviderError(TopicmarkError):
    """Raised when a logit provider violates its contract mid-generation."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class DetectionInputError(TopicmarkError):
    """Raised for detector inputs that cannot be scored (too short, empty)."""


class ResourceError(TopicmarkError):
    """Raised when lexical resource files are missing or malformed."""


class ManifestError(TopicmarkError):
    """Raised for invalid experiment manifests or missing artifacts."""
