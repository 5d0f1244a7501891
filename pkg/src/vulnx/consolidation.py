"""Merging per-chunk candidates into one deduplicated, validated dataset."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Sequence

from .chunking import Chunk
from .extraction import ExtractionResult
from .schema import LIST_FIELDS, NULLABLE_FIELDS, Issue, UnifiedVulnerability, validate_record

logger = logging.getLogger(__name__)


@dataclass
class ConsolidatedSet:
    records: list[UnifiedVulnerability] = field(default_factory=list)
    dropped_duplicates: int = 0
    stitched_continuations: int = 0
    invalid_records: list[tuple[str, tuple[Issue, ...]]] = field(default_factory=list)


def dedup_key(rec: UnifiedVulnerability) -> str:
    name = (rec.name or "").strip().lower()
    return "|".join([name, ",".join(sorted(rec.cves)), rec.host or "", rec.port or ""])


@dataclass
class FieldConflict:
    record_index: int
    field: str
    kept: object
    dropped: object


def merge_parts(parts: Sequence[UnifiedVulnerability], record_index: int = -1, conflicts: list[FieldConflict] | None = None) -> UnifiedVulnerability:
    """Field-wise merge; earlier parts win, later parts only fill gaps."""
    merged = parts[0]
    for part in parts[1:]:
        updates: dict = {}
        for name in NULLABLE_FIELDS:
            ours, theirs = getattr(merged, name), getattr(part, name)
            if ours is None and theirs is not None:
                updates[name] = theirs
            elif ours is not None and theirs is not None and ours != theirs:
                logger.warning("record %d: conflicting %s across parts, keeping the earlier value", record_index, name)
                if conflicts is not None:
                    conflicts.append(FieldConflict(record_index, name, ours, theirs))
        for name in LIST_FIELDS:
            ours = list(getattr(merged, name))
            extra = [x for x in getattr(part, name) if x not in ours]
            if extra:
                updates[name] = tuple(ours + extra)
        raw = dict(merged.raw_fields)
        for key, value in part.raw_fields.items():
            raw.setdefault(key, value)
        if raw != merged.raw_fields:
            updates["raw_fields"] = raw
        if updates:
            merged = replace(merged, **updates)
    return merged


def stitch_continuations(
    results: Sequence[ExtractionResult],
    chunks: Sequence[Chunk],
    conflicts: list[FieldConflict] | None = None,
) -> list[UnifiedVulnerability]:
    """Collapse the parts of each split record into one candidate.

    Candidates from ordinary chunks pass through untouched. The merged
    record takes the position of the record's first part.
    """
    by_id = {c.id: c for c in chunks}
    out: list[UnifiedVulnerability | int] = []
    parts: dict[int, list[UnifiedVulnerability]] = defaultdict(list)
    for res in sorted(results, key=lambda r: r.chunk_id):
        chunk = by_id.get(res.chunk_id)
        if chunk is None or chunk.continuation_of is None:
            out.extend(res.candidates)
            continue
        rec_index = chunk.continuation_of[0]
        if rec_index not in parts:
            out.append(rec_index)
        parts[rec_index].extend(res.candidates)
    stitched: list[UnifiedVulnerability] = []
    for item in out:
        if isinstance(item, int):
            if parts[item]:
                stitched.append(merge_parts(parts[item], item, conflicts))
        else:
            stitched.append(item)
    return stitched


def consolidate(
    candidates: Sequence[UnifiedVulnerability],
    *,
    stitched_continuations: int = 0,
    renumber: bool = True,
) -> ConsolidatedSet:
    """Deduplicate by ``dedup_key`` and validate.

    The survivor of each group is the member with the fewest null fields,
    earliest first on ties; it sits where the group first appeared. With
    ``renumber`` the surviving records get ids ``<scanner>-0001`` onward.
    Invalid records stay in the set and are listed in ``invalid_records``.
    """
    groups: dict[str, list[int]] = {}
    for i, rec in enumerate(candidates):
        groups.setdefault(dedup_key(rec), []).append(i)

    survivors = []
    for members in groups.values():
        best = min(members, key=lambda i: (candidates[i].null_count(), i))
        survivors.append(candidates[best])

    records = []
    for n, rec in enumerate(survivors, start=1):
        if renumber:
            rec = replace(rec, id=f"{rec.scanner.value}-{n:04d}")
        records.append(rec)

    invalid = []
    for rec in records:
        result = validate_record(rec)
        if not result.ok:
            invalid.append((rec.id, result.violations))
    return ConsolidatedSet(
        records=records,
        dropped_duplicates=len(candidates) - len(records),
        stitched_continuations=stitched_continuations,
        invalid_records=invalid,
    )
