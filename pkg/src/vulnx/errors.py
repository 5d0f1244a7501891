"""Exception hierarchy shared by the pipeline stages."""

from __future__ import annotations


class VulnxError(Exception):
    """Base class for every error raised by vulnx."""


class UnreadablePdf(VulnxError):
    """The PDF has no extractable text layer (scanned or image-only)."""


class ReportEncodingError(VulnxError):
    """A text report is mostly not UTF-8."""


class NoRecordsFound(VulnxError):
    """No record header matched; usually the wrong scanner dialect."""


class ConfigError(VulnxError, ValueError):
    pass


class ParseError(VulnxError):
    """A canonical record document could not be parsed.

    ``position`` is a character offset into the input, or None when the
    problem is structural rather than positional.
    """

    def __init__(self, message: str, position: int | None = None, source: str | None = None):
        self.position = position
        self.source = source
        where = []
        if source:
            where.append(source)
        if position is not None:
            where.append(f"char {position}")
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class TemplateError(VulnxError):
    pass


class ProviderError(VulnxError):
    """Transport, authentication or timeout failure talking to a model provider."""

    def __init__(self, message: str, kind: str = "transport", attempts: int = 1):
        self.kind = kind
        self.attempts = attempts
        super().__init__(f"{kind}: {message}")


class MalformedOutput(VulnxError):
    """Provider output is not a document array of records."""

    def __init__(self, message: str, position: int | None = None, attempts: int = 1):
        self.position = position
        self.attempts = attempts
        suffix = f" (at char {position})" if position is not None else ""
        super().__init__(message + suffix)


class EmptyBaseline(VulnxError):
    pass
