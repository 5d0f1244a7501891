"""Unified vulnerability record, scanner field mappings and canonical form.

OpenVAS and Tenable WAS describe the same finding with different section
labels. Each scanner gets an explicit ``FieldMapping`` from its section
labels onto the fields of ``UnifiedVulnerability``; ``map_fields`` applies
it. Anything the source text does not contain stays ``None``.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import ParseError


class ScannerKind(str, Enum):
    OPENVAS = "openvas"
    TENABLE_WAS = "tenable_was"
    UNKNOWN = "unknown"


OPENVAS_LABELS: tuple[str, ...] = (
    "Summary",
    "Vulnerability Detection Result",
    "Impact",
    "Solution",
    "Affected Software/OS",
    "Vulnerability Insight",
    "Vulnerability Detection Method",
    "Log Method",
    "References",
)

TENABLE_LABELS: tuple[str, ...] = (
    "Affected Application",
    "Description",
    "Solution",
    "See Also",
    "Vulnerability Properties",
    "Discovery",
    "VPR Key Drivers",
    "Plugin Details",
    "Risk Information",
    "Reference Information",
)

OTHER_KEY = "Other"

# Key/value lines that sit in a record's header block, before the first
# section label. They are not section labels, so they never reach raw_fields
# under their own name.
HEADER_KEYS: dict[ScannerKind, tuple[str, ...]] = {
    ScannerKind.OPENVAS: ("NVT", "OID", "Threat", "Port", "Family"),
    ScannerKind.TENABLE_WAS: ("Plugin ID", "Name", "Family"),
}

SEVERITY_LABELS = ("low", "medium", "high", "critical")
CVSS_VERSIONS = ("v2", "v3", "v4")

CVE_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")
_CVE_FIND = re.compile(r"\bCVE-\d{4}-\d{4,}\b", re.IGNORECASE)
_URL_FIND = re.compile(r"(?:https?|ftp)://[^\s<>\"'\]\[]+", re.IGNORECASE)
_ADVISORY_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_.\-]*(?::\s*\S+|-\S+)")


@dataclass(frozen=True)
class UnifiedVulnerability:
    id: str
    scanner: ScannerKind
    name: str | None = None
    cves: tuple[str, ...] = ()
    description: str | None = None
    installed_version: str | None = None
    fixed_version: str | None = None
    impact: str | None = None
    severity_label: str | None = None
    cvss_score: float | None = None
    cvss_version: str | None = None
    solution: str | None = None
    detection_method: str | None = None
    family: str | None = None
    references: tuple[str, ...] = ()
    host: str | None = None
    port: str | None = None
    raw_fields: Mapping[str, str] = field(default_factory=dict)

    def null_count(self) -> int:
        return sum(1 for name in NULLABLE_FIELDS if getattr(self, name) is None)


RECORD_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(UnifiedVulnerability))
LIST_FIELDS = ("cves", "references")
NULLABLE_FIELDS: tuple[str, ...] = tuple(
    n for n in RECORD_FIELDS if n not in ("id", "scanner", "raw_fields") + LIST_FIELDS
)
STRING_FIELDS: tuple[str, ...] = tuple(n for n in NULLABLE_FIELDS if n != "cvss_score")


class Transform(str, Enum):
    VERBATIM = "verbatim"
    APPEND_TO_TARGET = "append_to_target"
    PARSE_CVSS = "parse_cvss"
    PARSE_VERSIONS = "parse_versions"
    PARSE_ASSET = "parse_asset"
    SPLIT_REFERENCES = "split_references"


@dataclass(frozen=True)
class MappingEntry:
    source_label: str
    targets: tuple[str, ...]
    transform: Transform


@dataclass(frozen=True)
class FieldMapping:
    scanner: ScannerKind
    entries: tuple[MappingEntry, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.source_label for e in self.entries)

    def targets_of(self, label: str) -> tuple[str, ...]:
        for e in self.entries:
            if e.source_label == label:
                return e.targets
        return ()


_ASSET_TARGETS = ("host", "port", "installed_version", "fixed_version", "raw_fields")

_OPENVAS_ENTRIES = (
    MappingEntry("Summary", ("description",), Transform.VERBATIM),
    MappingEntry("Vulnerability Detection Result", _ASSET_TARGETS, Transform.PARSE_ASSET),
    MappingEntry("Impact", ("impact",), Transform.VERBATIM),
    MappingEntry("Solution", ("solution",), Transform.VERBATIM),
    MappingEntry("Affected Software/OS", ("installed_version", "raw_fields"), Transform.PARSE_VERSIONS),
    MappingEntry("Vulnerability Insight", ("description",), Transform.APPEND_TO_TARGET),
    MappingEntry("Vulnerability Detection Method", ("detection_method",), Transform.VERBATIM),
    MappingEntry("Log Method", ("raw_fields",), Transform.VERBATIM),
    MappingEntry("References", ("cves", "references"), Transform.SPLIT_REFERENCES),
)

_TENABLE_ENTRIES = (
    MappingEntry("Affected Application", _ASSET_TARGETS, Transform.PARSE_ASSET),
    MappingEntry("Description", ("description",), Transform.VERBATIM),
    MappingEntry("Solution", ("solution",), Transform.VERBATIM),
    MappingEntry("See Also", ("cves", "references"), Transform.SPLIT_REFERENCES),
    MappingEntry("Vulnerability Properties", ("severity_label", "raw_fields"), Transform.PARSE_CVSS),
    MappingEntry("Discovery", ("raw_fields",), Transform.VERBATIM),
    MappingEntry("VPR Key Drivers", ("raw_fields",), Transform.VERBATIM),
    MappingEntry("Plugin Details", ("detection_method",), Transform.VERBATIM),
    MappingEntry(
        "Risk Information",
        ("cvss_score", "cvss_version", "severity_label", "raw_fields"),
        Transform.PARSE_CVSS,
    ),
    MappingEntry("Reference Information", ("cves", "references"), Transform.SPLIT_REFERENCES),
)


def default_mapping(kind: ScannerKind) -> FieldMapping:
    kind = ScannerKind(kind)
    if kind is ScannerKind.OPENVAS:
        return FieldMapping(kind, _OPENVAS_ENTRIES)
    if kind is ScannerKind.TENABLE_WAS:
        return FieldMapping(kind, _TENABLE_ENTRIES)
    raise ValueError("no default mapping for an unknown scanner")


# ---------------------------------------------------------------------------
# Transforms. Each returns a dict of the fields it could find in the text;
# the caller keeps only the entry's targets. Nothing is produced that is not
# literally present in the input.
# ---------------------------------------------------------------------------

_VERSION_TOKEN = r"(\d+(?:\.[0-9A-Za-z]+)+|\d+[A-Za-z][0-9A-Za-z.\-]*)"
_INSTALLED_RE = re.compile(r"installed\s+version\s*:\s*" + _VERSION_TOKEN, re.IGNORECASE)
_FIXED_RE = re.compile(r"fixed\s+version\s*:\s*" + _VERSION_TOKEN, re.IGNORECASE)
# "2.4.x" is a range, not a version: a match may not run into ".x".
_ANY_VERSION_RE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)+[0-9A-Za-z]*)(?!\.?\w)")
_HOST_PORT_RE = re.compile(
    r"(?<![\w.:/-])((?:\d{1,3}\.){3}\d{1,3}|[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+):(\d{1,5})(?![\w.])"
)
_PORT_PROTO_RE = re.compile(r"(?<![\w/])(\d{1,5}/(?:tcp|udp))\b", re.IGNORECASE)
_IPV4_RE = re.compile(r"(?<![\w.])((?:\d{1,3}\.){3}\d{1,3})(?![\w.])")

_CVSS_VERSIONED_RE = re.compile(
    r"CVSS\s*v?([234])(?:\.\d)?\s*(?:Base\s+)?Score\s*:?\s*(\d{1,2}(?:\.\d+)?)",
    re.IGNORECASE,
)
_CVSS_PLAIN_RE = re.compile(r"CVSS(?:\s+Score)?\s*:\s*(\d{1,2}(?:\.\d+)?)(?![\d./])", re.IGNORECASE)
_SEVERITY_RE = re.compile(
    r"(?:Risk\s+Factor|Severity|Threat)\s*:\s*(Critical|High|Medium|Low)\b", re.IGNORECASE
)


def parse_cvss(text: str) -> dict[str, Any]:
    """Severity label, CVSS score and version, preferring the newest version."""
    out: dict[str, Any] = {}
    versioned = [(int(v), s) for v, s in _CVSS_VERSIONED_RE.findall(text)]
    if versioned:
        best = max(versioned, key=lambda vs: vs[0])
        out["cvss_version"] = f"v{best[0]}"
        out["cvss_score"] = float(best[1])
    else:
        m = _CVSS_PLAIN_RE.search(text)
        if m:
            out["cvss_score"] = float(m.group(1))
    m = _SEVERITY_RE.search(text)
    if m:
        out["severity_label"] = m.group(1).lower()
    return out


def parse_versions(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    m = _INSTALLED_RE.search(text)
    if m:
        out["installed_version"] = m.group(1).rstrip(".")
    m = _FIXED_RE.search(text)
    if m:
        out["fixed_version"] = m.group(1).rstrip(".")
    if "installed_version" not in out and "fixed_version" not in out:
        m = _ANY_VERSION_RE.search(text)
        if m:
            out["installed_version"] = m.group(1).rstrip(".")
    return out


def parse_location(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    m = _URL_FIND.search(text)
    if m:
        url = m.group(0).rstrip(".,;)")
        netloc = url.split("://", 1)[1].split("/", 1)[0].rsplit("@", 1)[-1]
        host, _, port = netloc.partition(":")
        if host:
            out["host"] = host
        if port.isdigit():
            out["port"] = port
    if "host" not in out:
        m = _HOST_PORT_RE.search(text)
        if m:
            out["host"] = m.group(1)
            out["port"] = m.group(2)
    if "host" not in out:
        m = _IPV4_RE.search(text)
        if m:
            out["host"] = m.group(1)
    if "port" not in out:
        m = _PORT_PROTO_RE.search(text)
        if m:
            out["port"] = m.group(1)
    return out


def parse_asset(text: str) -> dict[str, Any]:
    """Location plus version lines, as found in detection results."""
    out = parse_location(text)
    versions = parse_versions(text)
    # Only trust labelled version lines here; a bare number in a
    # detection result is as likely to be a port or an address.
    for key in ("installed_version", "fixed_version"):
        regex = _INSTALLED_RE if key == "installed_version" else _FIXED_RE
        if key in versions and regex.search(text):
            out[key] = versions[key]
    return out


def split_references(text: str) -> dict[str, Any]:
    cves: list[str] = []
    refs: list[str] = []
    for raw_line in text.splitlines():
        line = raw_line.strip().lstrip("-*• ").strip()
        if not line:
            continue
        for cve in _CVE_FIND.findall(line):
            cve = cve.upper()
            if cve not in cves:
                cves.append(cve)
        urls = [u.rstrip(".,;)") for u in _URL_FIND.findall(line)]
        for url in urls:
            if url not in refs:
                refs.append(url)
        if urls or _CVE_FIND.search(line):
            continue
        # Anything else with content after its "Label:" is an advisory id.
        rest = re.sub(r"^[A-Za-z][A-Za-z .\-]*:", "", line, count=1)
        if re.search(r"[0-9A-Za-z]", rest) and line not in refs:
            refs.append(line)
    return {"cves": tuple(cves), "references": tuple(refs)}


_TRANSFORMS = {
    Transform.PARSE_CVSS: parse_cvss,
    Transform.PARSE_VERSIONS: parse_versions,
    Transform.PARSE_ASSET: parse_asset,
    Transform.SPLIT_REFERENCES: split_references,
}


def clean_text(text: str | None) -> str | None:
    """Strip each line, drop blank edges and repeated blank lines; '' -> None."""
    if text is None:
        return None
    lines = [ln.strip() for ln in text.splitlines()]
    out: list[str] = []
    for ln in lines:
        if not ln and (not out or not out[-1]):
            continue
        out.append(ln)
    while out and not out[-1]:
        out.pop()
    joined = "\n".join(out)
    return joined or None


def _apply_header(kind: ScannerKind, key: str, text: str, values: dict[str, Any], other: list[str]) -> None:
    if key in ("NVT", "Name"):
        values.setdefault("name", text)
    elif key == "Threat":
        for k, v in parse_cvss(f"Threat: {text}").items():
            values.setdefault(k, v)
    elif key == "Port":
        values.setdefault("port", text)
    elif key == "Family":
        values.setdefault("family", text)
    else:
        other.append(f"{key}: {text}")


def map_fields(
    kind: ScannerKind,
    source: Mapping[str, str],
    mapping: FieldMapping | None = None,
    record_id: str = "",
) -> UnifiedVulnerability:
    """Build a unified record from ``{source label: text}``.

    Header keys of the scanner (``NVT``, ``Threat``, ...) fill name,
    severity and port. Mapped labels are applied in mapping order; for a
    scalar target the first contributor wins, except ``append_to_target``.
    Labels that are neither mapped nor header keys are kept under
    ``raw_fields["Other"]``.
    """
    kind = ScannerKind(kind)
    mapping = mapping or default_mapping(kind)
    if mapping.scanner is not kind:
        raise ValueError(f"mapping is for {mapping.scanner.value}, not {kind.value}")

    cleaned = {label: clean_text(text) for label, text in source.items()}
    values: dict[str, Any] = {}
    raw: dict[str, str] = {}
    other: list[str] = []
    lists: dict[str, list[str]] = {"cves": [], "references": []}

    headers = HEADER_KEYS.get(kind, ())
    mapped = set(mapping.labels)
    for label, text in cleaned.items():
        if text is None:
            continue
        if label in headers and label not in mapped:
            _apply_header(kind, label, text, values, other)
        elif label not in mapped:
            other.append(f"{label}: {text}")

    for entry in mapping.entries:
        text = cleaned.get(entry.source_label)
        if text is None:
            continue
        if "raw_fields" in entry.targets:
            raw[entry.source_label] = text
        if entry.transform is Transform.VERBATIM:
            found = {t: text for t in entry.targets if t != "raw_fields"}
        elif entry.transform is Transform.APPEND_TO_TARGET:
            for t in entry.targets:
                if t == "raw_fields":
                    continue
                values[t] = f"{values[t]}\n\n{text}" if values.get(t) else text
            continue
        else:
            found = _TRANSFORMS[entry.transform](text)
        for t in entry.targets:
            if t not in found:
                continue
            if t in lists:
                for item in found[t]:
                    if item not in lists[t]:
                        lists[t].append(item)
            elif values.get(t) is None:
                values[t] = found[t]

    if other:
        raw[OTHER_KEY] = "\n".join(other)
    return UnifiedVulnerability(
        id=record_id,
        scanner=kind,
        cves=tuple(lists["cves"]),
        references=tuple(lists["references"]),
        raw_fields=raw,
        **{k: v for k, v in values.items() if k in NULLABLE_FIELDS},
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    field: str
    code: str
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Issue, ...] = ()
    warnings: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def _has_control_chars(text: str) -> bool:
    return any(unicodedata.category(ch) == "Cc" and ch not in "\n\t" for ch in text)


def _is_reference_like(ref: str) -> bool:
    return bool(_URL_FIND.fullmatch(ref) or _ADVISORY_RE.match(ref))


def validate_record(rec: UnifiedVulnerability) -> ValidationResult:
    violations: list[Issue] = []
    warnings: list[Issue] = []

    for cve in rec.cves:
        if not isinstance(cve, str) or not CVE_RE.match(cve):
            violations.append(Issue("cves", "malformed_cve", f"{cve!r} is not CVE-YYYY-NNNN"))

    score = rec.cvss_score
    if score is not None:
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            violations.append(Issue("cvss_score", "invalid_type", f"{score!r} is not a number"))
        elif math.isnan(score) or not 0.0 <= score <= 10.0:
            violations.append(Issue("cvss_score", "out_of_range", f"{score} not in [0, 10]"))
        elif rec.cvss_version is None:
            warnings.append(Issue("cvss_score", "missing_cvss_version", "score without a CVSS version"))

    if rec.severity_label is not None and rec.severity_label not in SEVERITY_LABELS:
        violations.append(Issue("severity_label", "invalid_enum", f"{rec.severity_label!r}"))
    if rec.cvss_version is not None and rec.cvss_version not in CVSS_VERSIONS:
        violations.append(Issue("cvss_version", "invalid_enum", f"{rec.cvss_version!r}"))

    texts: list[tuple[str, Any]] = [("id", rec.id)]
    texts += [(n, getattr(rec, n)) for n in STRING_FIELDS]
    texts += [("cves", c) for c in rec.cves] + [("references", r) for r in rec.references]
    texts += [("raw_fields", v) for v in rec.raw_fields.values()]
    for name, value in texts:
        if value is None:
            continue
        if not isinstance(value, str):
            violations.append(Issue(name, "invalid_type", f"{value!r} is not a string"))
        elif _has_control_chars(value):
            violations.append(Issue(name, "control_characters", "contains NUL or control characters"))
        elif value == "" and name != "id":
            violations.append(Issue(name, "empty_string", "absent values must be null"))

    for ref in rec.references:
        if isinstance(ref, str) and ref and not _is_reference_like(ref):
            warnings.append(Issue("references", "unrecognized_reference", ref[:80]))

    allowed = set(OPENVAS_LABELS) | set(TENABLE_LABELS) | {OTHER_KEY}
    for key in rec.raw_fields:
        if key not in allowed:
            warnings.append(Issue("raw_fields", "unknown_label", key))

    return ValidationResult(tuple(violations), tuple(warnings))


# ---------------------------------------------------------------------------
# Canonical document form
# ---------------------------------------------------------------------------


def record_to_dict(rec: UnifiedVulnerability) -> dict[str, Any]:
    d: dict[str, Any] = {}
    for name in RECORD_FIELDS:
        value = getattr(rec, name)
        if name == "scanner":
            value = ScannerKind(value).value
        elif name in LIST_FIELDS:
            value = list(value)
        elif name == "raw_fields":
            value = dict(value)
        d[name] = value
    return d


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2, allow_nan=False) + "\n"


def serialize_record(rec: UnifiedVulnerability) -> str:
    return dumps_canonical(record_to_dict(rec))


def _as_str_list(name: str, value: Any, lenient: bool) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str) and lenient:
        if name == "cves":
            return tuple(p for p in re.split(r"[\s,;|]+", value) if p)
        return (value,) if value.strip() else ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseError(f"field {name!r} must be a list of strings")
    return tuple(value)


def _as_optional_str(name: str, value: Any, lenient: bool) -> str | None:
    if value is None:
        return None
    if isinstance(value, str):
        if lenient and not value.strip():
            return None
        return value
    if lenient and isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    if lenient and isinstance(value, list) and all(isinstance(v, str) for v in value):
        return "\n".join(value) or None
    raise ParseError(f"field {name!r} must be a string or null")


def _as_score(value: Any, lenient: bool) -> float | None:
    if value is None:
        return None
    if isinstance(value, bool):
        raise ParseError("field 'cvss_score' must be a number or null")
    if isinstance(value, (int, float)):
        return float(value)
    if lenient and isinstance(value, str):
        m = re.search(r"\d+(?:\.\d+)?", value)
        if m:
            return float(m.group(0))
        if not value.strip():
            return None
    raise ParseError("field 'cvss_score' must be a number or null")


def record_from_dict(
    d: Any,
    *,
    lenient: bool = False,
    scanner: ScannerKind | None = None,
) -> UnifiedVulnerability:
    """Build a record from a decoded document.

    Strict mode (canonical files) requires ``scanner`` and exact types.
    Lenient mode (model output) coerces numeric strings and bare strings
    where lists are expected, and takes ``scanner`` from the caller.
    Unknown keys go to ``raw_fields["Other"]`` in both modes.
    """
    if not isinstance(d, dict):
        raise ParseError("record must be an object")
    if scanner is None and "scanner" not in d:
        raise ParseError("record is missing required key 'scanner'")
    if scanner is not None:
        kind = ScannerKind(scanner)
    else:
        try:
            kind = ScannerKind(d["scanner"])
        except ValueError:
            raise ParseError(f"unknown scanner {d['scanner']!r}") from None

    kwargs: dict[str, Any] = {}
    for name in NULLABLE_FIELDS:
        value = d.get(name)
        if name == "cvss_score":
            kwargs[name] = _as_score(value, lenient)
        else:
            kwargs[name] = _as_optional_str(name, value, lenient)
    if lenient:
        for name in ("severity_label", "cvss_version"):
            if kwargs[name] is not None:
                kwargs[name] = kwargs[name].strip().lower()
        if kwargs["cvss_version"] and re.fullmatch(r"(?:cvss)?v?\s*([234])(?:\.\d)?", kwargs["cvss_version"]):
            kwargs["cvss_version"] = "v" + re.sub(r"\D", "", kwargs["cvss_version"])[0]
    for name in LIST_FIELDS:
        kwargs[name] = _as_str_list(name, d.get(name), lenient)

    raw = d.get("raw_fields") or {}
    if not isinstance(raw, dict) or not all(isinstance(v, str) for v in raw.values()):
        raise ParseError("field 'raw_fields' must map labels to strings")
    raw = dict(raw)
    extra = [k for k in d if k not in RECORD_FIELDS]
    if extra:
        lines = [f"{k}: {json.dumps(d[k], ensure_ascii=False, sort_keys=True)}" for k in sorted(extra)]
        raw[OTHER_KEY] = "\n".join(([raw[OTHER_KEY]] if OTHER_KEY in raw else []) + lines)

    rec_id = d.get("id", "")
    if rec_id is None:
        rec_id = ""
    if not isinstance(rec_id, str):
        if not lenient:
            raise ParseError("field 'id' must be a string")
        rec_id = str(rec_id)
    return UnifiedVulnerability(id=rec_id, scanner=kind, raw_fields=raw, **kwargs)


def parse_record(text: str, source: str | None = None) -> UnifiedVulnerability:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.pos, source) from None
    try:
        return record_from_dict(doc)
    except ParseError as exc:
        raise ParseError(str(exc), 0, source) from None


def with_id(rec: UnifiedVulnerability, rec_id: str) -> UnifiedVulnerability:
    return replace(rec, id=rec_id)


def records_equal_ignoring_id(a: Iterable[UnifiedVulnerability], b: Iterable[UnifiedVulnerability]) -> bool:
    return [with_id(r, "") for r in a] == [with_id(r, "") for r in b]
