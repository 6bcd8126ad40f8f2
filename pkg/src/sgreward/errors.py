"""Exception hierarchy with machine-readable error codes."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors; ``code`` is stable across releases."""

    code = "ENGINE_ERROR"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        doc = {"code": self.code, "message": self.message}
        if self.details:
            doc["details"] = self.details
        return doc


class KeyFormatError(EngineError):
    code = "KEY_FORMAT"


class SerializeInvalidGraphError(EngineError):
    code = "SERIALIZE_INVALID_GRAPH"


class EmptyBatchError(EngineError):
    code = "EMPTY_BATCH"


class MissingEmbeddingError(EngineError):
    code = "MISSING_EMBEDDING"


class ProviderUnavailableError(EngineError):
    code = "PROVIDER_UNAVAILABLE"


class DimensionMismatchError(EngineError):
    code = "DIM_MISMATCH"


class EmptyInputError(EngineError):
    code = "EMPTY_INPUT"


class GroupTooSmallError(EngineError):
    code = "GROUP_TOO_SMALL"


class LengthMismatchError(EngineError):
    code = "LEN_MISMATCH"


class EmptySequenceError(EngineError):
    code = "EMPTY_SEQUENCE"


class VocabTooSmallError(EngineError):
    code = "VOCAB_TOO_SMALL"


class UnknownPredicateError(EngineError):
    code = "UNKNOWN_PREDICATE"


class UnknownImageError(EngineError):
    code = "UNKNOWN_IMAGE"


class IngestionError(EngineError):
    code = "INGESTION_ERROR"
