"""Prompting, model providers and output parsing for per-chunk extraction.

Three providers sit behind one call, ``extract_chunk``:

* ``http``  - a chat-completions endpoint (any vendor speaking that shape)
* ``mock``  - scripted replies per chunk, for tests and dry runs
* ``rule``  - the deterministic section parser in ``rule_extract``, used as
  the offline oracle because hosted models are not reproducible
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from hashlib import sha256
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .chunking import RECORD_HEADER_RE, Chunk
from .errors import ConfigError, MalformedOutput, ParseError, ProviderError, TemplateError
from .schema import (
    HEADER_KEYS,
    NULLABLE_FIELDS,
    FieldMapping,
    ScannerKind,
    UnifiedVulnerability,
    default_mapping,
    dumps_canonical,
    map_fields,
    record_from_dict,
    record_to_dict,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "VULNX_API_KEY"
API_BASE_ENV = "VULNX_API_BASE"
PLACEHOLDERS = ("chunk_text", "scanner", "field_instructions")
_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")

SCANNER_NAMES = {ScannerKind.OPENVAS: "OpenVAS", ScannerKind.TENABLE_WAS: "Tenable WAS"}


# ---------------------------------------------------------------------------
# Section capture and the rule provider
# ---------------------------------------------------------------------------


def _label_re(labels: Sequence[str]) -> re.Pattern[str]:
    alternatives = "|".join(re.escape(lb) for lb in sorted(labels, key=len, reverse=True))
    return re.compile(rf"^[ \t]*({alternatives}):[ \t]*(.*)$")


def parse_header_line(line: str, kind: ScannerKind) -> dict[str, str]:
    if kind is ScannerKind.OPENVAS:
        m = re.match(r"^NVT:[ \t]*(.*)$", line)
        return {"NVT": m.group(1).strip()} if m else {}
    m = re.match(r"^Plugin ID (\d+)[ \t]+[-–][ \t]+(.*)$", line)
    return {"Plugin ID": m.group(1), "Name": m.group(2).strip()} if m else {}


def capture_sections(record_text: str, kind: ScannerKind, mapping: FieldMapping, has_header: bool = True) -> dict[str, str]:
    """Split one record into ``{label: text}``.

    A section runs from its label line to the next label line. Header keys
    (``Port:``, ``Family:`` ...) count only before the first section label;
    further down they are ordinary content. Without a header (a continuation
    part), text before the first label belongs to an earlier part and is
    skipped.
    """
    lines = record_text.split("\n")
    out: dict[str, list[str]] = {}
    section_re = _label_re(mapping.labels)
    header_re = _label_re(HEADER_KEYS.get(kind, ()))
    current: str | None = None
    in_header = has_header
    start = 0
    if has_header and lines:
        for key, value in parse_header_line(lines[0], kind).items():
            out[key] = [value]
        start = 1
    for line in lines[start:]:
        m = section_re.match(line)
        if m:
            in_header = False
            current = m.group(1)
            out.setdefault(current, [])
            if m.group(2).strip():
                out[current].append(m.group(2))
            continue
        if in_header:
            hm = header_re.match(line)
            if hm and hm.group(1) not in out:
                out[hm.group(1)] = [hm.group(2)]
            continue
        if current is not None:
            out[current].append(line)
    return {label: "\n".join(body) for label, body in out.items()}


def record_id(kind: ScannerKind, index: int) -> str:
    return f"{kind.value}-{index + 1:04d}"


def rule_extract(chunk: Chunk, kind: ScannerKind, mapping: FieldMapping | None = None) -> list[UnifiedVulnerability]:
    """Deterministic extraction by section labels; stands in for the model."""
    kind = ScannerKind(kind)
    mapping = mapping or default_mapping(kind)
    text = chunk.text
    if chunk.continuation_of is not None and chunk.continuation_of[1] > 0:
        sections = capture_sections(text, kind, mapping, has_header=False)
        if not any(v.strip() for v in sections.values()):
            return []
        return [map_fields(kind, sections, mapping, record_id(kind, chunk.continuation_of[0]))]

    heads = list(RECORD_HEADER_RE[kind].finditer(text))
    out = []
    for k, m in enumerate(heads):
        end = heads[k + 1].start() if k + 1 < len(heads) else len(text)
        index = chunk.record_indices[k] if k < len(chunk.record_indices) else chunk.record_indices[-1] + k
        sections = capture_sections(text[m.start() : end], kind, mapping)
        out.append(map_fields(kind, sections, mapping, record_id(kind, index)))
    return out


# ---------------------------------------------------------------------------
# Prompts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplate:
    body: str
    version: str

    def __post_init__(self) -> None:
        for name in PLACEHOLDERS:
            count = self.body.count("{" + name + "}")
            if count != 1:
                raise TemplateError(f"template must contain {{{name}}} exactly once, found {count}")

    def render(self, **values: str) -> str:
        # One pass, so placeholder-looking text inside the chunk stays put.
        return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], self.body)


def default_template() -> PromptTemplate:
    body = resources.files("vulnx").joinpath("prompts/extract_v1.txt").read_text(encoding="utf-8")
    return PromptTemplate(body, "extract-v1")


def load_template(path: str | Path) -> PromptTemplate:
    body = Path(path).read_text(encoding="utf-8")
    return PromptTemplate(body, "file-" + sha256(body.encode("utf-8")).hexdigest()[:12])


def field_instructions(kind: ScannerKind, mapping: FieldMapping) -> str:
    lines = []
    header = {
        ScannerKind.OPENVAS: '- "NVT:" header line -> name; "Threat: <level> (CVSS: <score>)" -> severity_label, cvss_score; "Port:" -> port; "Family:" -> family',
        ScannerKind.TENABLE_WAS: '- "Plugin ID <id> - <title>" header line -> name; "Family:" -> family',
    }.get(kind)
    if header:
        lines.append(header)
    for e in mapping.entries:
        targets = [t for t in e.targets if t != "raw_fields"]
        keep = "; keep the full text in raw_fields" if "raw_fields" in e.targets else ""
        if e.transform.value == "append_to_target":
            how = f"append to {', '.join(targets)}"
        elif targets:
            how = f"{', '.join(targets)} ({e.transform.value.replace('_', ' ')})"
        else:
            how = "raw_fields only"
        lines.append(f'- "{e.source_label}" -> {how}{keep}')
    keys = ", ".join(f'"{k}"' for k in ("name", "cves", *[n for n in NULLABLE_FIELDS if n != "name"], "references", "raw_fields"))
    lines.append(f"Each object has exactly these keys: {keys}.")
    return "\n".join(lines)


def build_prompt(chunk: Chunk, kind: ScannerKind, mapping: FieldMapping, tmpl: PromptTemplate | None = None) -> str:
    kind = ScannerKind(kind)
    if kind is ScannerKind.UNKNOWN:
        raise ValueError("cannot build a prompt for an unknown scanner")
    tmpl = tmpl or default_template()
    return tmpl.render(
        chunk_text=chunk.text,
        scanner=SCANNER_NAMES[kind],
        field_instructions=field_instructions(kind, mapping),
    )


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class ProviderKind(str, Enum):
    HTTP = "http"
    MOCK = "mock"
    RULE = "rule"


@dataclass(frozen=True)
class ProviderConfig:
    kind: ProviderKind = ProviderKind.RULE
    model_name: str = "rule-v1"
    temperature: float = 0.2
    max_retries: int = 3
    timeout_seconds: int = 60
    endpoint: str | None = None
    api_key_env: str = API_KEY_ENV
    backoff_seconds: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ProviderKind(self.kind))
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature {self.temperature} not in [0, 2]")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.timeout_seconds <= 0:
            raise ConfigError("timeout_seconds must be positive")
        if self.kind is ProviderKind.HTTP and not self.resolved_endpoint():
            raise ConfigError(f"http provider needs an endpoint (or {API_BASE_ENV})")
        if self.kind is not ProviderKind.HTTP and self.endpoint:
            raise ConfigError("endpoint is only valid for the http provider")

    def resolved_endpoint(self) -> str | None:
        return os.environ.get(API_BASE_ENV) or self.endpoint


class Provider(Protocol):
    name: str

    def complete(self, prompt: str, *, chunk_id: int) -> str: ...


class MockProvider:
    """Replays scripted replies, one queue per chunk id.

    A script entry is either reply text or an exception to raise. When a
    chunk's queue runs dry, the last entry repeats; chunks without a queue
    get ``default``.
    """

    name = "mock"

    def __init__(self, script: Mapping[int, Sequence[str | Exception]] | None = None, default: str | Exception | None = "[]"):
        self._queues = {int(k): list(v) for k, v in (script or {}).items()}
        self._calls: dict[int, int] = {}
        self._default = default
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProvider":
        """Script file: {"default": reply, "chunks": {"0": [reply | {"error": kind}, ...]}}."""
        doc = json.loads(Path(path).read_text(encoding="utf-8"))

        def entry(item):
            if isinstance(item, dict) and "error" in item:
                return ProviderError(item.get("message", "scripted failure"), kind=item["error"])
            return item if isinstance(item, str) else json.dumps(item)

        script = {int(k): [entry(x) for x in v] for k, v in doc.get("chunks", {}).items()}
        default = entry(doc["default"]) if "default" in doc else "[]"
        return cls(script, default)

    def calls(self, chunk_id: int) -> int:
        return self._calls.get(chunk_id, 0)

    def complete(self, prompt: str, *, chunk_id: int) -> str:
        with self._lock:
            n = self._calls.get(chunk_id, 0)
            self._calls[chunk_id] = n + 1
            queue = self._queues.get(chunk_id)
            reply = (queue[min(n, len(queue) - 1)] if queue else self._default)
        if isinstance(reply, Exception):
            raise reply
        if reply is None:
            raise ProviderError(f"no scripted reply for chunk {chunk_id}")
        return reply


class HttpProvider:
    """Chat-completions client; the API key comes only from the environment."""

    name = "http"

    def __init__(self, cfg: ProviderConfig, client: httpx.Client | None = None):
        self.cfg = cfg
        base = cfg.resolved_endpoint() or ""
        self.url = base if base.rstrip("/").endswith("/chat/completions") else base.rstrip("/") + "/chat/completions"
        self._client = client or httpx.Client(timeout=cfg.timeout_seconds)

    def complete(self, prompt: str, *, chunk_id: int) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = self._client.post(self.url, json=payload, headers=headers, timeout=self.cfg.timeout_seconds)
        except httpx.TimeoutException as exc:
            raise ProviderError(str(exc) or "request timed out", kind="timeout") from exc
        except httpx.HTTPError as exc:
            raise ProviderError(str(exc) or type(exc).__name__, kind="transport") from exc
        if resp.status_code in (401, 403):
            raise ProviderError(f"HTTP {resp.status_code} from {self.url}", kind="auth")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code} from {self.url}", kind="transport")
        try:
            choice = resp.json()["choices"][0]
            content = choice.get("message", {}).get("content")
            if content is None:
                content = choice["text"]
        except (ValueError, KeyError, IndexError, TypeError, AttributeError) as exc:
            raise ProviderError(f"unexpected response shape: {exc!r}", kind="protocol") from exc
        return content


def make_provider(cfg: ProviderConfig) -> Provider | None:
    if cfg.kind is ProviderKind.HTTP:
        return HttpProvider(cfg)
    if cfg.kind is ProviderKind.MOCK:
        return MockProvider()
    return None


# ---------------------------------------------------------------------------
# Output parsing and the per-chunk call
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"^```[\w+-]*[ \t]*\n(.*?)\n?```$", re.DOTALL)


def parse_model_output(text: str, kind: ScannerKind, chunk_id: int = 0) -> list[UnifiedVulnerability]:
    kind = ScannerKind(kind)
    body = text.strip()
    m = _FENCE_RE.match(body)
    if m:
        body = m.group(1).strip()
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedOutput(f"not a JSON document: {exc.msg}", exc.pos) from None
    if isinstance(doc, dict):
        lists = [v for v in doc.values() if isinstance(v, list)]
        if len(doc) == 1 and len(lists) == 1:
            doc = lists[0]
    if not isinstance(doc, list):
        raise MalformedOutput("expected a JSON array of records", 0)
    out = []
    for i, item in enumerate(doc):
        try:
            rec = record_from_dict(item, lenient=True, scanner=kind)
        except ParseError as exc:
            raise MalformedOutput(f"element {i}: {exc}") from None
        out.append(replace(rec, id=f"{kind.value}-c{chunk_id:04d}-{i:03d}"))
    return out


CORRECTIVE_INSTRUCTION = (
    "\n\nYour previous reply could not be used ({error}). "
    "Reply again with only a JSON array of record objects, no prose and no code fences."
)


@dataclass
class ExtractionResult:
    chunk_id: int
    provider: str
    model: str
    candidates: list[UnifiedVulnerability]
    raw_response: str
    attempts: int = 1


@dataclass
class ChunkFailure:
    chunk_id: int
    error: str  # "provider" or "malformed"
    kind: str
    message: str
    attempts: int


@dataclass
class ExtractionRun:
    results: list[ExtractionResult] = field(default_factory=list)
    failures: list[ChunkFailure] = field(default_factory=list)


def extract_chunk(
    chunk: Chunk,
    prompt: str,
    cfg: ProviderConfig,
    *,
    kind: ScannerKind,
    mapping: FieldMapping | None = None,
    provider: Provider | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ExtractionResult:
    """Run one chunk through the configured provider.

    Malformed replies are retried with a corrective note appended to the
    prompt; transport errors and timeouts are retried with exponential
    backoff; authentication failures are not retried. Raises
    ``ProviderError`` or ``MalformedOutput`` once retries are spent.
    """
    kind = ScannerKind(kind)
    if cfg.kind is ProviderKind.RULE:
        cands = rule_extract(chunk, kind, mapping)
        raw = dumps_canonical([record_to_dict(c) for c in cands])
        return ExtractionResult(chunk.id, "rule", cfg.model_name, cands, raw, 1)

    provider = provider or make_provider(cfg)
    current = prompt
    last: Exception | None = None
    for attempt in range(1, cfg.max_retries + 2):
        try:
            reply = provider.complete(current, chunk_id=chunk.id)
        except ProviderError as exc:
            exc.attempts = attempt
            if exc.kind == "auth" or attempt > cfg.max_retries:
                raise
            last = exc
            logger.warning("chunk %d attempt %d: %s", chunk.id, attempt, exc)
            sleep(cfg.backoff_seconds * 2 ** (attempt - 1))
            continue
        try:
            cands = parse_model_output(reply, kind, chunk.id)
        except MalformedOutput as exc:
            exc.attempts = attempt
            if attempt > cfg.max_retries:
                raise
            last = exc
            logger.warning("chunk %d attempt %d: malformed output: %s", chunk.id, attempt, exc)
            current = prompt + CORRECTIVE_INSTRUCTION.format(error=exc)
            continue
        return ExtractionResult(chunk.id, provider.name, cfg.model_name, cands, reply, attempt)
    raise AssertionError(f"retry loop fell through: {last}")  # pragma: no cover


def run_extraction(
    chunks: Sequence[Chunk],
    kind: ScannerKind,
    cfg: ProviderConfig,
    *,
    mapping: FieldMapping | None = None,
    template: PromptTemplate | None = None,
    provider: Provider | None = None,
    parallelism: int = 4,
    sleep: Callable[[float], None] = time.sleep,
) -> ExtractionRun:
    """Extract every chunk, at most ``parallelism`` at a time.

    A failing chunk is recorded and never stops the others. Results and
    failures come back ordered by chunk id whatever the completion order.
    """
    kind = ScannerKind(kind)
    mapping = mapping or default_mapping(kind)
    template = template or default_template()
    if provider is None:
        provider = make_provider(cfg)

    def work(chunk: Chunk) -> ExtractionResult | ChunkFailure:
        prompt = build_prompt(chunk, kind, mapping, template)
        try:
            return extract_chunk(chunk, prompt, cfg, kind=kind, mapping=mapping, provider=provider, sleep=sleep)
        except ProviderError as exc:
            return ChunkFailure(chunk.id, "provider", exc.kind, str(exc), exc.attempts)
        except MalformedOutput as exc:
            return ChunkFailure(chunk.id, "malformed", "malformed_output", str(exc), exc.attempts)

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        outcomes = list(pool.map(work, chunks))
    run = ExtractionRun()
    for outcome in sorted(outcomes, key=lambda o: o.chunk_id):
        (run.failures if isinstance(outcome, ChunkFailure) else run.results).append(outcome)
    return run
