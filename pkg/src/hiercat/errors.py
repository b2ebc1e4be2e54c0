"""Exception taxonomy shared across the engine, service, and CLI."""


class CatalogError(Exception):
    """Base class for all engine errors."""

    wire_code = "internal"


class QuerySyntaxError(CatalogError):
    """Raised by the query parser; carries the offending position."""

    wire_code = "syntax"

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class PreconditionFailed(CatalogError):
    """A write-set precondition did not hold (parent-missing, duplicate-path, ...)."""

    wire_code = "precondition"

    def __init__(self, reason, path=None):
        self.reason = reason
        self.path = path
        detail = f"{reason}" if path is None else f"{reason}: {path}"
        super().__init__(detail)


class ConflictAbort(CatalogError):
    """Transaction aborted by concurrency control (validation or lock timeout)."""

    wire_code = "conflict"

    def __init__(self, reason="validation-conflict"):
        self.reason = reason
        super().__init__(reason)


class NotFound(CatalogError):
    wire_code = "not_found"


class CorruptionError(CatalogError):
    """Invariant violation in stored data, e.g. a dangling leaf alias."""


class EngineReadOnly(CatalogError):
    """The engine entered read-only failure mode after a log sync failure."""

    wire_code = "internal"


class StorageError(CatalogError):
    pass
