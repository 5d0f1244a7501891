"""Dataset files: canonical record arrays with a run-metadata header."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Sequence

from .errors import ParseError
from .schema import LIST_FIELDS, RECORD_FIELDS, UnifiedVulnerability, dumps_canonical, record_from_dict, record_to_dict


def dataset_document(
    records: Sequence[UnifiedVulnerability],
    metadata: dict[str, Any] | None = None,
    **sections: Any,
) -> dict[str, Any]:
    doc: dict[str, Any] = {"metadata": metadata or {}, "records": [record_to_dict(r) for r in records]}
    doc.update(sections)
    return doc


def write_dataset(path: str | Path, records: Sequence[UnifiedVulnerability], metadata: dict[str, Any] | None = None, **sections: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(dataset_document(records, metadata, **sections)), encoding="utf-8")
    return path


def parse_dataset(text: str, source: str | None = None) -> tuple[list[UnifiedVulnerability], dict[str, Any]]:
    """Accepts ``{"metadata": ..., "records": [...]}`` or a bare record array."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.pos, source) from None
    if isinstance(doc, list):
        items, metadata = doc, {}
    elif isinstance(doc, dict) and isinstance(doc.get("records"), list):
        items, metadata = doc["records"], doc.get("metadata") or {}
    else:
        raise ParseError("expected a record array or an object with a 'records' array", 0, source)
    records = []
    for n, item in enumerate(items):
        try:
            records.append(record_from_dict(item))
        except ParseError as exc:
            raise ParseError(f"record {n}: {exc}", None, source) from None
    return records, metadata


def load_dataset(path: str | Path) -> tuple[list[UnifiedVulnerability], dict[str, Any]]:
    path = Path(path)
    return parse_dataset(path.read_text(encoding="utf-8"), str(path))


def records_to_csv(records: Sequence[UnifiedVulnerability]) -> str:
    """Flat CSV, one row per record; list fields joined with '|'."""
    columns = [f for f in RECORD_FIELDS if f != "raw_fields"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        row = []
        for name in columns:
            value = getattr(rec, name)
            if name in LIST_FIELDS:
                value = "|".join(value)
            elif name == "scanner":
                value = rec.scanner.value
            row.append("" if value is None else value)
        w.writerow(row)
    return buf.getvalue()
