"""Reading scanner reports from disk and cleaning up their text."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import ReportEncodingError, UnreadablePdf
from .schema import ScannerKind

logger = logging.getLogger(__name__)

__all__ = [
    "ReportFormat",
    "RawReport",
    "NormalizedText",
    "ScannerKind",
    "DEFAULT_MARKERS",
    "read_report",
    "normalize_text",
    "detect_scanner",
]


class ReportFormat(str, Enum):
    PDF = "pdf"
    TEXT = "text"


@dataclass(frozen=True)
class RawReport:
    source_path: str
    format: ReportFormat
    content: str
    byte_length: int
    replaced_bytes: int = 0
    page_count: int | None = None


@dataclass(frozen=True)
class NormalizedText:
    text: str
    line_count: int
    removed_artifacts: int = 0


def _infer_format(path: Path) -> ReportFormat:
    suffix = path.suffix.lower()
    if suffix == ".pdf":
        return ReportFormat.PDF
    if suffix in (".txt", ".text", ".log"):
        return ReportFormat.TEXT
    with path.open("rb") as fh:
        head = fh.read(5)
    return ReportFormat.PDF if head == b"%PDF-" else ReportFormat.TEXT


def decode_lossy(data: bytes) -> tuple[str, int]:
    """Decode UTF-8, replacing bad sequences with U+FFFD; return (text, bad byte count)."""
    parts: list[str] = []
    bad = 0
    pos = 0
    while True:
        try:
            parts.append(data[pos:].decode("utf-8"))
            break
        except UnicodeDecodeError as exc:
            parts.append(data[pos : pos + exc.start].decode("utf-8"))
            parts.append("�")
            bad += exc.end - exc.start
            pos += exc.end
    return "".join(parts), bad


def _read_pdf(path: Path) -> tuple[str, int]:
    from pypdf import PdfReader
    from pypdf.errors import PdfReadError

    try:
        reader = PdfReader(str(path))
        pages = [page.extract_text() or "" for page in reader.pages]
    except (PdfReadError, ValueError, KeyError, OSError) as exc:
        raise UnreadablePdf(f"{path}: {exc}") from exc
    if not any(p.strip() for p in pages):
        raise UnreadablePdf(f"{path}: no extractable text layer (scanned or image-only PDF?)")
    # Form feeds keep page boundaries visible to normalize_text.
    return "\f".join(pages), len(pages)


def read_report(path: str | Path, format_hint: ReportFormat | str | None = None) -> RawReport:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"report not found: {path}")
    fmt = ReportFormat(format_hint) if format_hint else _infer_format(path)

    page_count = None
    replaced = 0
    if fmt is ReportFormat.PDF:
        content, page_count = _read_pdf(path)
    else:
        data = path.read_bytes()
        content, replaced = decode_lossy(data)
        if data and replaced * 2 > len(data):
            raise ReportEncodingError(f"{path}: {replaced} of {len(data)} bytes are not valid UTF-8")
        if replaced:
            logger.warning("%s: replaced %d invalid UTF-8 bytes", path, replaced)

    nuls = content.count("\x00")
    if nuls:
        content = content.replace("\x00", "")
        replaced += nuls
    return RawReport(
        source_path=str(path),
        format=fmt,
        content=content,
        byte_length=len(content.encode("utf-8")),
        replaced_bytes=replaced,
        page_count=page_count,
    )


_PAGE_NUMBER_RE = re.compile(
    r"^\s*(?:page\s+\d+(?:\s*(?:of|/)\s*\d+)?|-\s*\d+\s*-|\d+\s*(?:of|/)\s*\d+)\s*$",
    re.IGNORECASE,
)
_BARE_NUMBER_RE = re.compile(r"^\s*\d{1,4}\s*$")
_EDGE_LINES = 2
_MIN_PAGES_FOR_RUNNING = 3


def _edge_indices(lines: list[str]) -> list[int]:
    """Indices of the first and last few non-blank lines of a page."""
    filled = [i for i, ln in enumerate(lines) if ln.strip()]
    return sorted(set(filled[:_EDGE_LINES] + filled[-_EDGE_LINES:]))


def _header_signature(line: str) -> str:
    return re.sub(r"\d+", "#", re.sub(r"\s+", " ", line.strip())).lower()


def normalize_text(raw: RawReport | str) -> NormalizedText:
    """Uniform newlines, no trailing blanks, no page furniture.

    Page furniture means "Page N" style lines anywhere, bare page numbers
    at the top or bottom of a page, and lines repeated at the top or bottom
    of at least three pages and at least half of all pages (digits ignored,
    so "Page 3" matches "Page 4").
    Lines are never reordered and retained lines keep their characters.
    """
    content = raw.content if isinstance(raw, RawReport) else raw
    content = content.replace("\r\n", "\n").replace("\r", "\n")
    pages = [[ln.rstrip() for ln in page.split("\n")] for page in content.split("\f")]

    drop: set[tuple[int, int]] = set()
    for p, lines in enumerate(pages):
        for i, ln in enumerate(lines):
            if _PAGE_NUMBER_RE.match(ln):
                drop.add((p, i))
        if len(pages) > 1:
            for i in _edge_indices(lines):
                if _BARE_NUMBER_RE.match(lines[i]):
                    drop.add((p, i))

    if len(pages) >= _MIN_PAGES_FOR_RUNNING:
        seen: Counter[str] = Counter()
        edges: list[tuple[int, int, str]] = []
        for p, lines in enumerate(pages):
            sigs = set()
            for i in _edge_indices(lines):
                sig = _header_signature(lines[i])
                edges.append((p, i, sig))
                sigs.add(sig)
            seen.update(sigs)
        needed = max(_MIN_PAGES_FOR_RUNNING, (len(pages) + 1) // 2)
        for p, i, sig in edges:
            # Field delimiters ("Summary:") repeat at page tops legitimately.
            if seen[sig] >= needed and not pages[p][i].endswith(":"):
                drop.add((p, i))

    out: list[str] = []
    for p, lines in enumerate(pages):
        for i, ln in enumerate(lines):
            if (p, i) in drop:
                continue
            if not ln and out and not out[-1]:
                continue
            out.append(ln)

    text = "\n".join(out)
    line_count = text.count("\n") + (1 if text and not text.endswith("\n") else 0)
    return NormalizedText(text=text, line_count=line_count, removed_artifacts=len(drop))


# marker regex -> weight
DEFAULT_MARKERS: dict[ScannerKind, dict[str, float]] = {
    ScannerKind.OPENVAS: {
        r"(?m)^NVT:": 2.0,
        r"1\.3\.6\.1\.4\.1\.25623": 3.0,
        r"\bOpenVAS\b": 1.0,
        r"\bGreenbone\b": 1.0,
        r"Vulnerability Detection Result": 1.0,
        r"Vulnerability Insight": 1.0,
    },
    ScannerKind.TENABLE_WAS: {
        r"\bPlugin ID\b": 2.0,
        r"\bVPR\b": 2.0,
        r"\bTenable\b": 1.0,
        r"Risk Information": 1.0,
        r"Reference Information": 1.0,
        r"Affected Application": 1.0,
    },
}


def detect_scanner(
    norm: NormalizedText | str,
    markers: dict[ScannerKind, dict[str, float]] | None = None,
) -> ScannerKind:
    text = norm.text if isinstance(norm, NormalizedText) else norm
    markers = DEFAULT_MARKERS if markers is None else markers
    scores = {
        kind: sum(weight * len(re.findall(pattern, text)) for pattern, weight in table.items())
        for kind, table in markers.items()
    }
    if not scores:
        return ScannerKind.UNKNOWN
    best = max(scores.values())
    winners = [k for k, s in scores.items() if s == best]
    if best <= 0 or len(winners) != 1:
        return ScannerKind.UNKNOWN
    return winners[0]
