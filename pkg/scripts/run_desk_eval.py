"""Desk-scale end-to-end run: synthetic reports -> extract -> eval, per scanner.

    python3 scripts/run_desk_eval.py --out runs/desk --seed 0 [--provider mock --mock-script s.json]

Writes datasets, eval reports and a summary.json under --out.
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path

from vulnx.cli import RunConfig, cmd_eval, cmd_extract
from vulnx.dataset import write_dataset
from vulnx.synth import generate_openvas_report, generate_tenable_report

log = logging.getLogger("desk_eval")


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--records", type=int, default=34)
    ap.add_argument("--provider", choices=["rule", "mock", "http"], default="rule")
    ap.add_argument("--model-name", default="rule-v1")
    ap.add_argument("--mock-script")
    ap.add_argument("--endpoint")
    ap.add_argument("--target-chars", type=int, default=9000)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, rep in (
        ("openvas", generate_openvas_report(args.records, args.seed)),
        ("tenable", generate_tenable_report(6, args.seed)),
    ):
        report_path = out / f"{name}.txt"
        report_path.write_text(rep.text, encoding="utf-8")
        write_dataset(out / f"{name}_baseline.json", rep.baseline, {"seed": args.seed})
        cfg = RunConfig(
            input_path=str(report_path),
            output_path=str(out / f"{name}_dataset.json"),
            provider=args.provider,
            model_name=args.model_name,
            mock_script=args.mock_script,
            endpoint=args.endpoint,
            target_chars=args.target_chars,
            hard_max_chars=max(args.target_chars, 12000),
            seed=args.seed,
        )
        t0 = time.perf_counter()
        rc = cmd_extract(cfg)
        if rc == 1:
            log.error("%s: extraction failed", name)
            summary[name] = {"exit_code": rc}
            continue
        eval_path = out / f"{name}_eval.json"
        cmd_eval(cfg.output_path, str(out / f"{name}_baseline.json"), str(eval_path), str(out / f"{name}_scores.csv"))
        ev = json.loads(eval_path.read_text(encoding="utf-8"))
        summary[name] = {
            "exit_code": rc,
            "seconds": round(time.perf_counter() - t0, 2),
            "overall_mean": ev["overall_mean"],
            "below_highly_pct": ev["below_highly_pct"],
            "bucket_counts": ev["bucket_counts"],
            "per_field_mean": ev["per_field_mean"],
        }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
