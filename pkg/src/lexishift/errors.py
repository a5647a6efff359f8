"""Exception types shared across the package."""

from __future__ import annotations


class LexiError(Exception):
    """Base class for all runtime failures raised by lexishift."""


class RecordError(LexiError):
    """A single malformed input record; readers may collect these and continue."""

    def __init__(self, lineno: int, message: str, *, label: str = "line") -> None:
        self.lineno = lineno
        self.message = message
        super().__init__(f"{label} {lineno}: {message}")


class CorpusError(LexiError):
    """Fatal input problem (bad encoding, unparseable XML, broken document framing)."""


class LexiconError(LexiError):
    pass


class SnapshotError(LexiError):
    pass


class DegenerateTableError(LexiError, ValueError):
    def __init__(self, message: str = "degenerate table") -> None:
        super().__init__(message)


class UnknownSliceError(LexiError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown slice"


class ExclusionListError(LexiError):
    pass


class ThesaurusError(LexiError):
    pass


class LLMError(LexiError):
    """Transport-level failure talking to the chat endpoint after retries."""


class FilterRefused(LexiError):
    def __init__(self, message: str = "filter-refused") -> None:
        super().__init__(message)


class FetchError(LexiError):
    pass
