from __future__ import annotations

import random
from dataclasses import replace

from hypothesis import given
from hypothesis import strategies as st

from strategies import random_record
from vulnx.chunking import ChunkConfig, build_chunks, segment_records
from vulnx.consolidation import FieldConflict, consolidate, dedup_key, merge_parts, stitch_continuations
from vulnx.extraction import ExtractionResult, ProviderConfig, run_extraction
from vulnx.schema import ScannerKind, UnifiedVulnerability
from vulnx.synth import generate_openvas_report

OV = ScannerKind.OPENVAS


def _r(id_, **kw):
    return UnifiedVulnerability(id=id_, scanner=OV, **kw)


def test_dedup_key_normalizes():
    a = _r("a", name=" Foo Bar ", cves=("CVE-2020-0002", "CVE-2020-0001"), host="h", port="80/tcp")
    b = _r("b", name="foo bar", cves=("CVE-2020-0001", "CVE-2020-0002"), host="h", port="80/tcp")
    assert dedup_key(a) == dedup_key(b)
    assert dedup_key(a) != dedup_key(replace(b, port="443/tcp"))


def test_survivor_keeps_position_of_first_member():
    recs = [_r("1", name="x"), _r("2", name="y"), _r("3", name="x", solution="s")]
    out = consolidate(recs, renumber=False)
    assert [r.id for r in out.records] == ["3", "2"]
    assert out.dropped_duplicates == 1


def test_renumbering():
    out = consolidate([_r("q", name="a"), _r("w", name="b")])
    assert [r.id for r in out.records] == ["openvas-0001", "openvas-0002"]


def test_invalid_records_are_kept_and_listed():
    out = consolidate([_r("a", name="n", cvss_score=42.0)])
    assert len(out.records) == 1
    (rid, issues), = out.invalid_records
    assert rid == "openvas-0001" and issues[0].code == "out_of_range"


def test_merge_parts_earlier_wins_and_reports_conflicts():
    conflicts: list[FieldConflict] = []
    a = _r("a", name="n", solution="first", cves=("CVE-2020-0001",), raw_fields={"Log Method": "x"})
    b = _r("b", name="n", solution="second", impact="i", cves=("CVE-2020-0002", "CVE-2020-0001"), raw_fields={"Log Method": "y", "Other": "o"})
    m = merge_parts([a, b], 7, conflicts)
    assert m.solution == "first" and m.impact == "i"
    assert m.cves == ("CVE-2020-0001", "CVE-2020-0002")
    assert m.raw_fields == {"Log Method": "x", "Other": "o"}
    assert conflicts == [FieldConflict(7, "solution", "first", "second")]


def test_stitching_split_record_end_to_end():
    rep = generate_openvas_report(5, seed=0, oversize=(1,), oversize_chars=30000)
    spans = segment_records(rep.text, OV)
    chunks = build_chunks(spans, rep.text, ChunkConfig())
    assert sum(1 for c in chunks if c.continuation_of) >= 3
    run = run_extraction(chunks, OV, ProviderConfig())
    stitched = stitch_continuations(run.results, chunks)
    assert len(stitched) == 5
    merged = stitched[1]
    truth = rep.baseline[1]
    for name in ("name", "cves", "solution", "impact", "references", "host", "port", "cvss_score"):
        assert getattr(merged, name) == getattr(truth, name), name
    # Section text cut across a chunk boundary stays with its first part.
    assert truth.description.startswith(merged.description[:200])


def test_stitch_passes_ordinary_chunks_through():
    rep = generate_openvas_report(3, seed=0)
    chunks = build_chunks(segment_records(rep.text, OV), rep.text, ChunkConfig())
    res = [ExtractionResult(c.id, "x", "m", [_r(f"c{c.id}", name="n")], "") for c in chunks]
    assert [r.id for r in stitch_continuations(res, chunks)] == [f"c{c.id}" for c in chunks]


@given(st.integers(0, 10_000), st.integers(0, 30))
def test_consolidate_properties(seed, n):
    rng = random.Random(seed)
    base = [random_record(rng, i) for i in range(n)]
    cands = base + [replace(r, id=f"d{i}") for i, r in enumerate(base) if rng.random() < 0.3]
    rng.shuffle(cands)
    first = consolidate(cands)
    assert len(first.records) + first.dropped_duplicates == len(cands)
    assert len({dedup_key(r) for r in first.records}) == len(first.records)
    assert consolidate(first.records).records == first.records
