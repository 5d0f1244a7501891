from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vulnx.errors import ReportEncodingError, UnreadablePdf
from vulnx.ingest import ReportFormat, ScannerKind, decode_lossy, detect_scanner, normalize_text, read_report
from vulnx.synth import generate_openvas_report, generate_tenable_report, paginate


def test_read_text_report(tmp_path):
    p = tmp_path / "r.txt"
    p.write_bytes("NVT: x\r\nline\r\n".encode())
    raw = read_report(p)
    assert raw.format is ReportFormat.TEXT
    assert raw.replaced_bytes == 0
    assert normalize_text(raw).text == "NVT: x\nline\n"


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_report(tmp_path / "nope.txt")


def test_invalid_utf8_is_replaced_and_counted(tmp_path):
    p = tmp_path / "r.txt"
    p.write_bytes(b"NVT: caf\xe9 finding\nmore text here\n")
    raw = read_report(p)
    assert raw.replaced_bytes == 1
    assert "�" in raw.content


def test_mostly_binary_text_rejected(tmp_path):
    p = tmp_path / "r.txt"
    p.write_bytes(b"\xff\xfe\xfd\xfc" * 50)
    with pytest.raises(ReportEncodingError):
        read_report(p)


def test_nul_bytes_removed(tmp_path):
    p = tmp_path / "r.txt"
    p.write_bytes(b"NVT: a\x00b\n")
    raw = read_report(p)
    assert raw.content == "NVT: ab\n" and raw.replaced_bytes == 1


def test_format_sniffed_from_magic(tmp_path):
    p = tmp_path / "report.bin"
    p.write_bytes(b"%PDF-1.4 garbage")
    with pytest.raises(UnreadablePdf):
        read_report(p)


def test_pdf_text_layer(pdf_report):
    path, n_records = pdf_report
    raw = read_report(path)
    assert raw.format is ReportFormat.PDF and raw.page_count > 1
    norm = normalize_text(raw)
    assert norm.text.count("\nNVT:") + norm.text.startswith("NVT:") == n_records
    assert "Page 1" not in norm.text


def test_image_only_pdf_rejected(tmp_path):
    from reportlab.pdfgen import canvas

    path = tmp_path / "blank.pdf"
    c = canvas.Canvas(str(path))
    c.rect(10, 10, 100, 100)
    c.showPage()
    c.save()
    with pytest.raises(UnreadablePdf):
        read_report(path)


def test_page_furniture_removed():
    rep = generate_openvas_report(6, seed=1)
    paged = paginate(rep.text, lines_per_page=20, running_header="ACME Corp scan {n}")
    norm = normalize_text(paged)
    assert "ACME Corp" not in norm.text
    assert norm.removed_artifacts > 0
    # Every record header survives untouched.
    assert [ln for ln in norm.text.splitlines() if ln.startswith("NVT:")] == [
        ln for ln in rep.text.splitlines() if ln.startswith("NVT:")
    ]


def test_labels_at_page_tops_are_kept():
    pages = [f"Solution:\n  text {i}\nmore {i}" for i in range(6)]
    norm = normalize_text("\f".join(pages))
    assert norm.text.count("Solution:") == 6


def test_page_number_lines_removed():
    norm = normalize_text("a\nPage 3 of 9\nb\n\n\n\nc")
    assert norm.text == "a\nb\n\nc"
    assert norm.line_count == 4


@given(st.text(st.characters(blacklist_categories=("Cs",)), max_size=300))
def test_normalize_idempotent_and_clean(text):
    once = normalize_text(text).text
    assert "\r" not in once
    assert all(ln == ln.rstrip() for ln in once.split("\n"))
    assert "\n\n\n" not in once
    assert normalize_text(once).text == once


@given(st.binary(max_size=200))
def test_decode_lossy_roundtrips_valid_utf8(data):
    text, bad = decode_lossy(data)
    if bad == 0:
        assert text.encode("utf-8") == data


def test_detect_scanner():
    assert detect_scanner(generate_openvas_report(3).text) is ScannerKind.OPENVAS
    assert detect_scanner(generate_tenable_report(3).text) is ScannerKind.TENABLE_WAS
    assert detect_scanner("nothing to see here") is ScannerKind.UNKNOWN


def test_detect_scanner_tie_is_unknown():
    assert detect_scanner("Tenable OpenVAS") is ScannerKind.UNKNOWN
