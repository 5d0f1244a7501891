"""Record segmentation and context-budgeted chunk packing.

Records are never mixed mid-way: a chunk holds whole records, or one part
of a single record too long for the hard cap. Parts of a split record are
cut on line boundaries, away from protected technical markers, and each
continuation repeats ``overlap_chars`` of the previous part's tail.
"""

from __future__ import annotations

import json
import re
import statistics
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError, NoRecordsFound
from .ingest import NormalizedText
from .schema import ScannerKind

RECORD_HEADER_RE: dict[ScannerKind, re.Pattern[str]] = {
    ScannerKind.OPENVAS: re.compile(r"^NVT:.*$", re.MULTILINE),
    ScannerKind.TENABLE_WAS: re.compile(r"^Plugin ID \d+[ \t]+[-–][ \t]+\S.*$", re.MULTILINE),
}


@dataclass(frozen=True)
class RecordSpan:
    index: int
    start: int
    end: int
    header_line: str

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ChunkConfig:
    target_chars: int = 9000
    hard_max_chars: int = 12000
    overlap_chars: int = 500
    protected_markers: tuple[str, ...] = ("NVT:", "CVSS:")

    def __post_init__(self) -> None:
        if self.target_chars <= 0 or self.hard_max_chars <= 0:
            raise ConfigError("chunk sizes must be positive")
        if self.target_chars > self.hard_max_chars:
            raise ConfigError(f"target_chars {self.target_chars} exceeds hard_max_chars {self.hard_max_chars}")
        if not 0 <= self.overlap_chars < self.target_chars:
            raise ConfigError(f"overlap_chars {self.overlap_chars} must be in [0, target_chars)")
        object.__setattr__(self, "protected_markers", tuple(self.protected_markers))


@dataclass(frozen=True)
class Chunk:
    id: int
    record_indices: tuple[int, ...]
    text: str
    char_length: int
    continuation_of: tuple[int, int] | None = None
    overlap_chars: int = 0
    start: int = 0  # offset of the non-overlap text in the normalized report
    end: int = 0

    @property
    def body(self) -> str:
        """Chunk text without the repeated overlap prefix."""
        return self.text[self.overlap_chars :]


@dataclass
class ChunkReport:
    coverage_complete: bool
    chunk_count: int
    max_chunk_chars: int
    mean_chunk_chars: float
    records_split: int
    problems: list[str] = field(default_factory=list)


def _text_of(norm: NormalizedText | str) -> str:
    return norm.text if isinstance(norm, NormalizedText) else norm


def segment_records(norm: NormalizedText | str, kind: ScannerKind) -> list[RecordSpan]:
    kind = ScannerKind(kind)
    if kind not in RECORD_HEADER_RE:
        raise ValueError("segment_records needs an explicit scanner dialect, got unknown")
    text = _text_of(norm)
    heads = list(RECORD_HEADER_RE[kind].finditer(text))
    if not heads:
        raise NoRecordsFound(f"no {kind.value} record headers found")
    spans = []
    for i, m in enumerate(heads):
        end = heads[i + 1].start() if i + 1 < len(heads) else len(text)
        spans.append(RecordSpan(i, m.start(), end, m.group(0)))
    return spans


def preamble_text(norm: NormalizedText | str, spans: list[RecordSpan]) -> str:
    """Text before the first record header; kept for audit, never extracted."""
    return _text_of(norm)[: spans[0].start] if spans else _text_of(norm)


def protected_windows(record_text: str, cfg: ChunkConfig) -> list[tuple[int, int]]:
    """Closed intervals, relative to the record, where no cut may land.

    Each protected marker at position m blocks [m - overlap, m + overlap],
    clipped to the record: a record's own end closes its sections.
    """
    ov = cfg.overlap_chars
    windows = []
    for marker in cfg.protected_markers:
        if not marker:
            continue
        for m in re.finditer(re.escape(marker), record_text):
            windows.append((max(0, m.start() - ov), min(len(record_text), m.start() + ov)))
    return sorted(windows)


def allowed_cuts(record_text: str, cfg: ChunkConfig) -> list[int]:
    """Line starts inside the record that fall outside every protected window."""
    merged: list[list[int]] = []
    for lo, hi in protected_windows(record_text, cfg):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    cuts = []
    w = 0
    for i, ch in enumerate(record_text[:-1]):
        if ch != "\n":
            continue
        c = i + 1
        while w < len(merged) and merged[w][1] < c:
            w += 1
        if w < len(merged) and merged[w][0] <= c:
            continue
        cuts.append(c)
    return cuts


def split_points(record_text: str, cfg: ChunkConfig) -> list[tuple[int, int, int]]:
    """(start, end, lead) per part; ``lead`` chars before start are repeated."""
    n = len(record_text)
    hard = cfg.hard_max_chars
    cuts = allowed_cuts(record_text, cfg)
    parts = []
    start = 0
    while True:
        lead = min(cfg.overlap_chars, start)
        if n - start + lead <= hard:
            parts.append((start, n, lead))
            return parts
        limit = start + hard - lead
        below = [c for c in cuts if start < c <= limit]
        if below:
            cut = below[-1]
        else:
            # No legal cut fits the cap: take the first legal one beyond it,
            # or keep the remainder whole.
            above = [c for c in cuts if c > limit]
            if not above:
                parts.append((start, n, lead))
                return parts
            cut = above[0]
        parts.append((start, cut, lead))
        start = cut


def build_chunks(
    spans: list[RecordSpan],
    norm: NormalizedText | str,
    cfg: ChunkConfig | None = None,
) -> list[Chunk]:
    """Pack records greedily in document order.

    A record joins the open chunk while the total stays within
    ``target_chars``; a record over ``hard_max_chars`` is split into its
    own continuation chain.
    """
    cfg = cfg or ChunkConfig()
    text = _text_of(norm)
    chunks: list[Chunk] = []
    pending: list[RecordSpan] = []

    def flush() -> None:
        if not pending:
            return
        start, end = pending[0].start, pending[-1].end
        body = "".join(text[s.start : s.end] for s in pending)
        chunks.append(Chunk(len(chunks), tuple(s.index for s in pending), body, len(body), None, 0, start, end))
        pending.clear()

    for span in spans:
        if span.length > cfg.hard_max_chars:
            flush()
            rec = text[span.start : span.end]
            for part, (s, e, lead) in enumerate(split_points(rec, cfg)):
                body = rec[s - lead : e]
                chunks.append(
                    Chunk(
                        len(chunks),
                        (span.index,),
                        body,
                        len(body),
                        (span.index, part),
                        lead,
                        span.start + s,
                        span.start + e,
                    )
                )
            continue
        current = sum(s.length for s in pending)
        if pending and current + span.length > cfg.target_chars:
            flush()
        pending.append(span)
    flush()
    return chunks


def validate_chunks(chunks: list[Chunk], spans: list[RecordSpan]) -> ChunkReport:
    problems: list[str] = []
    plain: Counter[int] = Counter()
    parts: dict[int, list[int]] = defaultdict(list)
    known = {s.index for s in spans}

    for ch in chunks:
        if not ch.text or ch.char_length != len(ch.text):
            problems.append(f"chunk {ch.id}: empty or wrong char_length")
        idx = list(ch.record_indices)
        if not idx or idx != list(range(idx[0], idx[0] + len(idx))):
            problems.append(f"chunk {ch.id}: record indices not contiguous ascending")
        for i in idx:
            if i not in known:
                problems.append(f"chunk {ch.id}: unknown record {i}")
        if ch.continuation_of is not None:
            rec, part = ch.continuation_of
            if idx != [rec]:
                problems.append(f"chunk {ch.id}: continuation of {rec} holds {idx}")
            parts[rec].append(part)
        else:
            plain.update(idx)

    for s in spans:
        chain = sorted(parts.get(s.index, []))
        if chain and plain[s.index]:
            problems.append(f"record {s.index}: both whole and split")
        elif chain and chain != list(range(len(chain))):
            problems.append(f"record {s.index}: broken continuation chain {chain}")
        elif not chain and plain[s.index] != 1:
            problems.append(f"record {s.index}: appears {plain[s.index]} times")

    sizes = [c.char_length for c in chunks]
    return ChunkReport(
        coverage_complete=not problems and bool(spans),
        chunk_count=len(chunks),
        max_chunk_chars=max(sizes, default=0),
        mean_chunk_chars=statistics.fmean(sizes) if sizes else 0.0,
        records_split=len(parts),
        problems=problems,
    )


def chunk_manifest(chunks: list[Chunk], report: ChunkReport | None = None) -> dict:
    entries = [
        {
            "id": c.id,
            "record_indices": list(c.record_indices),
            "char_length": c.char_length,
            "continuation_of": list(c.continuation_of) if c.continuation_of else None,
            "overlap_chars": c.overlap_chars,
        }
        for c in chunks
    ]
    manifest: dict = {"chunks": entries}
    if report is not None:
        manifest["report"] = asdict(report)
    return manifest


def write_chunk_dump(chunks: list[Chunk], dump_dir: str | Path, report: ChunkReport | None = None) -> Path:
    out = Path(dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c in chunks:
        (out / f"chunk_{c.id}.txt").write_text(c.text, encoding="utf-8")
    path = out / "manifest.json"
    path.write_text(json.dumps(chunk_manifest(chunks, report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
