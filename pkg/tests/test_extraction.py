from __future__ import annotations

import json
import threading

import httpx
import pytest

from vulnx.chunking import Chunk, ChunkConfig, build_chunks, segment_records
from vulnx.errors import ConfigError, MalformedOutput, ProviderError, TemplateError
from vulnx.extraction import (
    API_BASE_ENV,
    API_KEY_ENV,
    HttpProvider,
    MockProvider,
    PromptTemplate,
    ProviderConfig,
    ProviderKind,
    build_prompt,
    capture_sections,
    default_template,
    extract_chunk,
    load_template,
    parse_model_output,
    rule_extract,
    run_extraction,
)
from vulnx.schema import ScannerKind, default_mapping, records_equal_ignoring_id
from vulnx.synth import generate_openvas_report, generate_tenable_report

OV = ScannerKind.OPENVAS
NO_SLEEP = lambda s: None  # noqa: E731


def _chunks(rep, **cfg):
    spans = segment_records(rep.text, rep.kind)
    return build_chunks(spans, rep.text, ChunkConfig(**cfg))


def _mock_cfg(**kw):
    return ProviderConfig(kind=ProviderKind.MOCK, model_name="m", **kw)


REPLY = json.dumps([{"name": "Found it", "cvss_score": 5, "cves": ["CVE-2017-9798"], "solution": None}])


# --- section capture and the rule oracle -------------------------------------


def test_capture_sections_header_keys_only_before_sections():
    text = "NVT: Title\nPort: 80/tcp\n\nSummary:\n  s\n  Port: not a header\nImpact:\n  i\n"
    got = capture_sections(text, OV, default_mapping(OV))
    assert got["NVT"] == "Title" and got["Port"] == "80/tcp"
    assert "Port: not a header" in got["Summary"]
    assert got["Impact"].strip() == "i"


def test_capture_sections_continuation_skips_leading_text():
    got = capture_sections("tail of earlier section\nImpact:\n  i\n", OV, default_mapping(OV), has_header=False)
    assert list(got) == ["Impact"]


@pytest.mark.parametrize("make", [lambda: generate_openvas_report(34, seed=0), lambda: generate_tenable_report(6)])
def test_rule_extract_matches_baseline(make):
    rep = make()
    cands = [c for ch in _chunks(rep) for c in rule_extract(ch, rep.kind)]
    assert cands == rep.baseline


# --- prompts -----------------------------------------------------------------


def test_default_template_renders_once():
    rep = generate_openvas_report(2)
    chunk = _chunks(rep)[0]
    prompt = build_prompt(chunk, OV, default_mapping(OV))
    assert chunk.text in prompt
    assert "OpenVAS" in prompt and "Vulnerability Insight" in prompt
    assert "{chunk_text}" not in prompt and default_template().version == "extract-v1"


def test_placeholder_text_inside_chunk_is_not_expanded():
    tmpl = PromptTemplate("{scanner}|{field_instructions}|{chunk_text}", "t")
    assert tmpl.render(scanner="S", field_instructions="F", chunk_text="{scanner}") == "S|F|{scanner}"


@pytest.mark.parametrize("body", ["{scanner} {chunk_text}", "{scanner} {field_instructions} {chunk_text} {chunk_text}"])
def test_template_placeholder_validation(body):
    with pytest.raises(TemplateError):
        PromptTemplate(body, "x")


def test_load_template_versions_by_content(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("{scanner} {field_instructions} {chunk_text}")
    assert load_template(p).version.startswith("file-")
    assert load_template(p).version == load_template(p).version


# --- config ------------------------------------------------------------------


def test_provider_config_validation(monkeypatch):
    monkeypatch.delenv(API_BASE_ENV, raising=False)
    with pytest.raises(ConfigError):
        ProviderConfig(temperature=2.5)
    with pytest.raises(ConfigError):
        ProviderConfig(kind="http")
    with pytest.raises(ConfigError):
        ProviderConfig(kind="rule", endpoint="http://x")
    assert ProviderConfig(kind="http", endpoint="http://a").resolved_endpoint() == "http://a"
    monkeypatch.setenv(API_BASE_ENV, "http://b")
    assert ProviderConfig(kind="http", endpoint="http://a").resolved_endpoint() == "http://b"


# --- output parsing ----------------------------------------------------------


def test_parse_model_output_variants():
    fenced = "```json\n" + REPLY + "\n```"
    wrapped = json.dumps({"records": json.loads(REPLY)})
    for text in (REPLY, fenced, wrapped):
        (rec,) = parse_model_output(text, OV, chunk_id=3)
        assert rec.name == "Found it" and rec.cvss_score == 5.0
        assert rec.id == "openvas-c0003-000" and rec.scanner is OV
    assert parse_model_output("[]", OV) == []


@pytest.mark.parametrize("text", ["not json", '{"a": 1}', '{"name": "x"}', "[1, 2]", "[{\"cvss_score\": true}]"])
def test_parse_model_output_rejects(text):
    with pytest.raises(MalformedOutput):
        parse_model_output(text, OV)


# --- retries -----------------------------------------------------------------


def _one_chunk():
    return Chunk(0, (0,), "NVT: x\n", 7)


def test_malformed_then_valid_uses_corrective_prompt():
    seen = []

    class Recording(MockProvider):
        def complete(self, prompt, *, chunk_id):
            seen.append(prompt)
            return super().complete(prompt, chunk_id=chunk_id)

    provider = Recording({0: ["sorry, here you go", REPLY]})
    res = extract_chunk(_one_chunk(), "PROMPT", _mock_cfg(), kind=OV, provider=provider, sleep=NO_SLEEP)
    assert res.attempts == 2 and len(res.candidates) == 1
    assert seen[0] == "PROMPT" and seen[1].startswith("PROMPT") and "JSON array" in seen[1]


def test_malformed_exhausts_retries():
    provider = MockProvider({0: ["nope"]})
    with pytest.raises(MalformedOutput) as exc:
        extract_chunk(_one_chunk(), "P", _mock_cfg(max_retries=2), kind=OV, provider=provider, sleep=NO_SLEEP)
    assert exc.value.attempts == 3 and provider.calls(0) == 3


def test_transport_errors_back_off_exponentially():
    delays = []
    provider = MockProvider({0: [ProviderError("down"), ProviderError("down"), REPLY]})
    res = extract_chunk(_one_chunk(), "P", _mock_cfg(backoff_seconds=0.5), kind=OV, provider=provider, sleep=delays.append)
    assert res.attempts == 3 and delays == [0.5, 1.0]


def test_auth_error_is_not_retried():
    provider = MockProvider({0: [ProviderError("denied", kind="auth")]})
    with pytest.raises(ProviderError) as exc:
        extract_chunk(_one_chunk(), "P", _mock_cfg(), kind=OV, provider=provider, sleep=NO_SLEEP)
    assert exc.value.kind == "auth" and provider.calls(0) == 1


def test_run_extraction_isolates_failures_and_orders_results():
    rep = generate_openvas_report(12, seed=1)
    chunks = _chunks(rep, target_chars=1500, overlap_chars=100)
    assert len(chunks) >= 4
    provider = MockProvider({1: [ProviderError("x", kind="timeout")], 2: ["garbage"]}, default=REPLY)
    run = run_extraction(chunks, OV, _mock_cfg(max_retries=1), provider=provider, parallelism=3, sleep=NO_SLEEP)
    assert [f.chunk_id for f in run.failures] == [1, 2]
    assert [f.kind for f in run.failures] == ["timeout", "malformed_output"]
    assert [r.chunk_id for r in run.results] == [c.id for c in chunks if c.id not in (1, 2)]


def test_run_extraction_parallelism_is_deterministic():
    rep = generate_openvas_report(34, seed=0)
    chunks = _chunks(rep, target_chars=2000, overlap_chars=100)
    cfg = ProviderConfig()
    a = run_extraction(chunks, OV, cfg, parallelism=1)
    b = run_extraction(chunks, OV, cfg, parallelism=8)
    assert [r.raw_response for r in a.results] == [r.raw_response for r in b.results]
    assert records_equal_ignoring_id([c for r in a.results for c in r.candidates], rep.baseline)


def test_mock_provider_from_file(tmp_path):
    p = tmp_path / "script.json"
    p.write_text(json.dumps({"default": [], "chunks": {"0": [{"error": "timeout"}, [{"name": "n"}]]}}))
    provider = MockProvider.from_file(p)
    with pytest.raises(ProviderError):
        provider.complete("", chunk_id=0)
    assert json.loads(provider.complete("", chunk_id=0)) == [{"name": "n"}]
    assert provider.complete("", chunk_id=5) == "[]"


def test_mock_provider_thread_safe_counts():
    provider = MockProvider(default="[]")
    threads = [threading.Thread(target=lambda: [provider.complete("", chunk_id=0) for _ in range(200)]) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert provider.calls(0) == 1600


# --- http provider -------------------------------------------------------------


def _http(handler, monkeypatch, key="sekrit"):
    monkeypatch.delenv(API_BASE_ENV, raising=False)
    if key:
        monkeypatch.setenv(API_KEY_ENV, key)
    else:
        monkeypatch.delenv(API_KEY_ENV, raising=False)
    cfg = ProviderConfig(kind="http", model_name="some-model", endpoint="https://llm.example/v1")
    return HttpProvider(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_request_shape(monkeypatch):
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "[]"}}]})

    assert _http(handler, monkeypatch).complete("hello", chunk_id=0) == "[]"
    assert seen["url"] == "https://llm.example/v1/chat/completions"
    assert seen["auth"] == "Bearer sekrit"
    assert seen["body"]["model"] == "some-model" and seen["body"]["temperature"] == 0.2
    assert seen["body"]["messages"] == [{"role": "user", "content": "hello"}]


@pytest.mark.parametrize(
    "status, body, kind",
    [(401, {}, "auth"), (403, {}, "auth"), (500, {}, "transport"), (200, {"nope": 1}, "protocol")],
)
def test_http_errors(monkeypatch, status, body, kind):
    provider = _http(lambda r: httpx.Response(status, json=body), monkeypatch)
    with pytest.raises(ProviderError) as exc:
        provider.complete("x", chunk_id=0)
    assert exc.value.kind == kind


def test_http_timeout(monkeypatch):
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(ProviderError) as exc:
        _http(handler, monkeypatch).complete("x", chunk_id=0)
    assert exc.value.kind == "timeout"


def test_http_auth_failure_fails_chunk_without_retry(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, json={"error": "bad key"})

    provider = _http(handler, monkeypatch, key=None)
    chunks = [Chunk(0, (0,), "NVT: x\n", 7)]
    run = run_extraction(chunks, OV, provider.cfg, provider=provider, sleep=NO_SLEEP)
    assert not run.results and run.failures[0].kind == "auth" and len(calls) == 1
