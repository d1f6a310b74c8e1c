"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class RerankError(Exception):
    """Base class for all errors raised by llm_rerank."""


class ConfigError(RerankError, ValueError):
    """Invalid configuration: unknown approach, bad flag, missing dataset."""


class BackendError(RerankError):
    """Any failure talking to an LLM backend."""


class TransportError(BackendError):
    """Network or HTTP failure.

    ``transient`` marks failures worth retrying (timeouts, 429, 5xx).
    """

    def __init__(self, message: str, *, transient: bool = True, status: int | None = None):
        super().__init__(message)
        self.transient = transient
        self.status = status


class CapabilityNotSupported(BackendError):
    """The backend cannot serve the requested operation."""


class MalformedResponse(BackendError):
    """The backend answered, but without the fields we need."""


class TokenResolutionError(BackendError):
    """A candidate token string could not be mapped to a backend token."""


class MockOracleError(BackendError):
    """The mock backend could not resolve a prompt against its score table."""


class SelectionSizeError(RerankError):
    """A tournament selection returned the wrong number of group members."""


class ParseError(RerankError, ValueError):
    """Malformed line in a qrels, run or candidates file."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class DuplicateDocError(ParseError):
    """The same doc_id appears twice in one query's candidate list."""

    def __init__(self, doc_id: str, query_id: str, **kwargs):
        super().__init__(f"duplicate doc_id {doc_id!r} in query {query_id!r}", **kwargs)
        self.doc_id = doc_id
        self.query_id = query_id


class NoOverlapError(RerankError):
    """A run and a qrels file share no query ids."""


class InvalidTraceError(RerankError, ValueError):
    """A trace or SFT sample violates the conversation schema."""


def annotate(exc: BaseException, note: str) -> BaseException:
    """Attach a note to ``exc`` without changing its type.

    Mirrors ``BaseException.add_note`` (3.11+) so callers can still catch the
    original exception class.
    """
    notes = getattr(exc, "__notes__", None)
    if notes is None:
        notes = []
        try:
            exc.__notes__ = notes
        except AttributeError:
            return exc
    notes.append(note)
    return exc
