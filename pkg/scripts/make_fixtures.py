"""Write synthetic OpenVAS / Tenable WAS reports and their baselines to a directory.

    python3 scripts/make_fixtures.py out/ --records 34 --seed 0 [--pdf]
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from vulnx.dataset import write_dataset
from vulnx.synth import generate_openvas_report, generate_tenable_report, paginate

log = logging.getLogger("make_fixtures")


def write_pdf(text: str, path: Path) -> None:
    """One PDF page per form-feed page; needs reportlab."""
    from reportlab.lib.pagesizes import A4
    from reportlab.pdfgen import canvas

    c = canvas.Canvas(str(path), pagesize=A4)
    _, height = A4
    for page in text.split("\f"):
        y = height - 40
        for line in page.split("\n"):
            c.setFont("Courier", 7)
            c.drawString(30, y, line)
            y -= 9
        c.showPage()
    c.save()


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--records", type=int, default=34)
    ap.add_argument("--tenable-records", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--oversize", type=int, nargs="*", default=[], help="OpenVAS record indices to pad past the chunk limit")
    ap.add_argument("--pdf", action="store_true", help="also write paginated PDFs (reportlab)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ov = generate_openvas_report(args.records, args.seed, oversize=tuple(args.oversize))
    tw = generate_tenable_report(args.tenable_records, args.seed)
    for name, rep in (("openvas", ov), ("tenable", tw)):
        (out / f"{name}.txt").write_text(rep.text, encoding="utf-8")
        write_dataset(out / f"{name}_baseline.json", rep.baseline, {"source": f"{name}.txt", "seed": args.seed})
        if args.pdf:
            write_pdf(paginate(rep.text, 70), out / f"{name}.pdf")
        log.info("%s: %d records", name, len(rep.baseline))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
