"""Corrupt k records' fields and watch the ROUGE-L buckets degrade.

    python3 scripts/perturbation_sweep.py --field solution --ks 0 5 10 17 34 [--csv sweep.csv]

Each k corrupts a nested prefix of a seeded record order, so larger k
always includes the smaller sets.
"""

from __future__ import annotations

import argparse
import csv
import random
import sys
from dataclasses import replace

from vulnx.evaluation import evaluate
from vulnx.schema import NULLABLE_FIELDS
from vulnx.synth import generate_openvas_report

NOISE = "quartz velvet nimbus orbit glyph ember lattice cobalt prism".split()


def sweep(field: str, ks: list[int], n_records: int = 34, seed: int = 0) -> list[dict]:
    rep = generate_openvas_report(n_records, seed)
    order = list(range(n_records))
    random.Random(seed + 1).shuffle(order)
    rng = random.Random(seed + 2)
    garbage = {i: " ".join(rng.choices(NOISE, k=12)) for i in order}
    rows = []
    for k in ks:
        hit = set(order[:k])
        cands = [replace(r, **{field: garbage[i]}) if i in hit else r for i, r in enumerate(rep.baseline)]
        ev = evaluate(cands, rep.baseline)
        rows.append({"k": k, "overall_mean": round(ev.overall_mean, 4), "below_highly_pct": round(ev.below_highly_pct, 2), **ev.bucket_counts})
    return rows


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--field", default="solution", choices=[f for f in NULLABLE_FIELDS if f != "cvss_score"])
    ap.add_argument("--ks", type=int, nargs="+", default=[0, 5, 10, 17, 34])
    ap.add_argument("--records", type=int, default=34)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="write rows here instead of stdout")
    args = ap.parse_args(argv)
    if max(args.ks) > args.records:
        ap.error("k cannot exceed --records")
    rows = sweep(args.field, args.ks, args.records, args.seed)
    fh = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else sys.stdout
    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if args.csv:
        fh.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
