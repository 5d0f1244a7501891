from __future__ import annotations

import os
from contextlib import contextmanager

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion name -> (passed, detail)
_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion's outcome."""

    @contextmanager
    def record(name: str):
        detail: dict[str, str] = {}
        try:
            yield detail
        except BaseException as exc:
            _ACCEPTANCE[name] = (False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        else:
            _ACCEPTANCE[name] = (True, detail.get("info", ""))
        finally:
            passed, info = _ACCEPTANCE[name]
            print(f"[{'PASS' if passed else 'FAIL'}] {name}  {info}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, info) in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {info}".rstrip())


@pytest.fixture(scope="session")
def pdf_report(tmp_path_factory):
    """A paginated 34-record OpenVAS report rendered to PDF with reportlab."""
    from reportlab.lib.pagesizes import A4
    from reportlab.pdfgen import canvas

    from vulnx.synth import generate_openvas_report, paginate

    rep = generate_openvas_report(34, seed=3)
    path = tmp_path_factory.mktemp("pdf") / "openvas.pdf"
    c = canvas.Canvas(str(path), pagesize=A4)
    for page in paginate(rep.text, 70).split("\f"):
        y = A4[1] - 40
        for line in page.split("\n"):
            c.setFont("Courier", 7)
            c.drawString(30, y, line)
            y -= 9
        c.showPage()
    c.save()
    return path, 34
