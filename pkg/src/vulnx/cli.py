"""Command-line entry point: ``vulnx extract | eval | chunk | detect``.

Exit codes: 0 success, 1 fatal error, 2 partial success (``extract`` wrote
a dataset but some chunks failed; the gaps are listed in the file).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .chunking import ChunkConfig, build_chunks, segment_records, validate_chunks, write_chunk_dump
from .consolidation import FieldConflict, consolidate, stitch_continuations
from .dataset import load_dataset, records_to_csv, write_dataset
from .errors import EmptyBaseline, NoRecordsFound, ParseError, VulnxError
from .evaluation import EvalConfig, evaluate
from .extraction import (
    MockProvider,
    ProviderConfig,
    ProviderKind,
    default_template,
    load_template,
    run_extraction,
)
from .ingest import NormalizedText, detect_scanner, normalize_text, read_report
from .schema import ScannerKind, default_mapping, dumps_canonical

logger = logging.getLogger("vulnx")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

_SCANNER_CHOICES = {
    "auto": None,
    "openvas": ScannerKind.OPENVAS,
    "tenable": ScannerKind.TENABLE_WAS,
}


@dataclass
class RunConfig:
    input_path: str
    output_path: str = "dataset.json"
    scanner: str = "auto"
    provider: str = "rule"
    model_name: str = "rule-v1"
    temperature: float = 0.2
    target_chars: int = 9000
    hard_max_chars: int = 12000
    overlap_chars: int = 500
    prompt_template: str | None = None
    parallelism: int = 4
    seed: int = 0
    max_retries: int = 3
    timeout_seconds: int = 60
    endpoint: str | None = None
    mock_script: str | None = None
    format_hint: str | None = None
    csv_path: str | None = None

    def __post_init__(self) -> None:
        if self.scanner not in _SCANNER_CHOICES:
            raise ValueError(f"scanner must be one of {sorted(_SCANNER_CHOICES)}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be positive")
        ProviderKind(self.provider)

    def chunk_config(self) -> ChunkConfig:
        return ChunkConfig(self.target_chars, self.hard_max_chars, self.overlap_chars)

    def provider_config(self) -> ProviderConfig:
        return ProviderConfig(
            kind=ProviderKind(self.provider),
            model_name=self.model_name,
            temperature=self.temperature,
            max_retries=self.max_retries,
            timeout_seconds=self.timeout_seconds,
            endpoint=self.endpoint if self.provider == "http" else None,
        )

    def reproducible_view(self) -> dict:
        """Everything that affects the output, minus where it is written."""
        view = asdict(self)
        for key in ("output_path", "csv_path", "parallelism"):
            view.pop(key)
        return view


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _load_text(path: str, format_hint: str | None) -> NormalizedText:
    return normalize_text(read_report(path, format_hint))


def _resolve_scanner(norm: NormalizedText, choice: str) -> ScannerKind:
    kind = _SCANNER_CHOICES[choice] or detect_scanner(norm)
    if kind is ScannerKind.UNKNOWN:
        raise NoRecordsFound("no OpenVAS or Tenable WAS markers found; pass --scanner explicitly")
    return kind


def cmd_extract(cfg: RunConfig) -> int:
    norm = _load_text(cfg.input_path, cfg.format_hint)
    kind = _resolve_scanner(norm, cfg.scanner)
    chunk_cfg = cfg.chunk_config()
    spans = segment_records(norm, kind)
    chunks = build_chunks(spans, norm, chunk_cfg)
    report = validate_chunks(chunks, spans)
    if not report.coverage_complete:
        raise VulnxError("chunk coverage incomplete: " + "; ".join(report.problems))

    provider_cfg = cfg.provider_config()
    template = load_template(cfg.prompt_template) if cfg.prompt_template else default_template()
    provider = None
    if provider_cfg.kind is ProviderKind.MOCK:
        provider = MockProvider.from_file(cfg.mock_script) if cfg.mock_script else MockProvider()
    mapping = default_mapping(kind)
    run = run_extraction(
        chunks, kind, provider_cfg, mapping=mapping, template=template, provider=provider, parallelism=cfg.parallelism
    )
    if not run.results:
        for f in run.failures:
            print(f"chunk {f.chunk_id}: {f.error} ({f.kind}): {f.message}", file=sys.stderr)
        print("error: every chunk failed; no dataset written", file=sys.stderr)
        return EXIT_FATAL

    conflicts: list[FieldConflict] = []
    candidates = stitch_continuations(run.results, chunks, conflicts)
    split_records = {c.continuation_of[0] for c in chunks if c.continuation_of}
    result = consolidate(candidates, stitched_continuations=len(split_records))

    chunk_records = {c.id: list(c.record_indices) for c in chunks}
    gaps = [{**asdict(f), "record_indices": chunk_records[f.chunk_id]} for f in run.failures]
    view = cfg.reproducible_view()
    metadata = {
        "tool": "vulnx",
        "tool_version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "input_sha256": _sha256_file(cfg.input_path),
        "scanner": kind.value,
        "provider": provider_cfg.kind.value,
        "model": provider_cfg.model_name,
        "temperature": provider_cfg.temperature,
        "template_version": template.version,
        "config": view,
        "config_digest": hashlib.sha256(dumps_canonical(view).encode("utf-8")).hexdigest(),
        "counts": {
            "records_segmented": len(spans),
            "chunks": len(chunks),
            "chunks_failed": len(run.failures),
            "candidates": len(candidates),
            "records": len(result.records),
            "dropped_duplicates": result.dropped_duplicates,
            "stitched_continuations": result.stitched_continuations,
            "stitch_conflicts": len(conflicts),
            "invalid_records": len(result.invalid_records),
        },
        "chunking": {
            "mean_chunk_chars": report.mean_chunk_chars,
            "max_chunk_chars": report.max_chunk_chars,
            "records_split": report.records_split,
        },
    }
    invalid = [
        {"id": rid, "violations": [asdict(v) for v in issues]} for rid, issues in result.invalid_records
    ]
    write_dataset(cfg.output_path, result.records, metadata, gaps=gaps, invalid_records=invalid)
    if cfg.csv_path:
        Path(cfg.csv_path).write_text(records_to_csv(result.records), encoding="utf-8")

    print(f"{len(result.records)} records from {len(chunks)} chunks -> {cfg.output_path}")
    if run.failures:
        for f in run.failures:
            print(f"warning: chunk {f.chunk_id} failed ({f.kind}); records {chunk_records[f.chunk_id]} missing", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_eval(extracted_path: str, baseline_path: str, report_path: str | None, csv_path: str | None, cfg: EvalConfig | None = None) -> int:
    extracted, _ = load_dataset(extracted_path)
    baseline, _ = load_dataset(baseline_path)
    report = evaluate(extracted, baseline, cfg)
    if report_path:
        Path(report_path).write_text(dumps_canonical(report.to_dict()), encoding="utf-8")
    if csv_path:
        Path(csv_path).write_text(report.to_csv(), encoding="utf-8")
    print(f"overall_mean {report.overall_mean:.4f}")
    print(f"below_highly_pct {report.below_highly_pct:.2f}")
    print("buckets " + " ".join(f"{k}={v}" for k, v in report.bucket_counts.items()))
    return EXIT_OK


def cmd_chunk(input_path: str, chunk_cfg: ChunkConfig, dump_dir: str, scanner: str = "auto", format_hint: str | None = None) -> int:
    norm = _load_text(input_path, format_hint)
    kind = _resolve_scanner(norm, scanner)
    spans = segment_records(norm, kind)
    chunks = build_chunks(spans, norm, chunk_cfg)
    report = validate_chunks(chunks, spans)
    manifest = write_chunk_dump(chunks, dump_dir, report)
    print(f"{report.chunk_count} chunks, mean {report.mean_chunk_chars:.0f} chars, {report.records_split} records split -> {manifest}")
    return EXIT_OK if report.coverage_complete else EXIT_FATAL


def cmd_detect(input_path: str, format_hint: str | None = None) -> int:
    print(detect_scanner(_load_text(input_path, format_hint)).value)
    return EXIT_OK


def _add_chunk_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target-chars", type=int, default=9000)
    p.add_argument("--hard-max-chars", type=int, default=12000)
    p.add_argument("--overlap-chars", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulnx", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="report -> unified dataset")
    p.add_argument("input_path")
    p.add_argument("-o", "--output", dest="output_path", default="dataset.json")
    p.add_argument("--csv", dest="csv_path")
    p.add_argument("--scanner", choices=sorted(_SCANNER_CHOICES), default="auto")
    p.add_argument("--provider", choices=[k.value for k in ProviderKind], default="rule")
    p.add_argument("--model-name", default=None)
    p.add_argument("--temperature", type=float, default=0.2)
    _add_chunk_flags(p)
    p.add_argument("--prompt-template")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--timeout-seconds", type=int, default=60)
    p.add_argument("--endpoint", help="chat-completions base URL (VULNX_API_BASE overrides)")
    p.add_argument("--mock-script", help="JSON script for the mock provider")
    p.add_argument("--format", dest="format_hint", choices=["pdf", "text"])

    p = sub.add_parser("eval", help="score a dataset against a baseline")
    p.add_argument("extracted_path")
    p.add_argument("baseline_path")
    p.add_argument("--report", dest="report_path", default="eval_report.json")
    p.add_argument("--csv", dest="csv_path", default="eval_scores.csv")

    p = sub.add_parser("chunk", help="dump chunks and a manifest for inspection")
    p.add_argument("input_path")
    p.add_argument("--dump-dir", default="chunks")
    p.add_argument("--scanner", choices=sorted(_SCANNER_CHOICES), default="auto")
    p.add_argument("--format", dest="format_hint", choices=["pdf", "text"])
    _add_chunk_flags(p)

    p = sub.add_parser("detect", help="print which scanner produced a report")
    p.add_argument("input_path")
    p.add_argument("--format", dest="format_hint", choices=["pdf", "text"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "extract":
            model = args.model_name or ("rule-v1" if args.provider == "rule" else args.provider)
            cfg = RunConfig(
                input_path=args.input_path,
                output_path=args.output_path,
                scanner=args.scanner,
                provider=args.provider,
                model_name=model,
                temperature=args.temperature,
                target_chars=args.target_chars,
                hard_max_chars=args.hard_max_chars,
                overlap_chars=args.overlap_chars,
                prompt_template=args.prompt_template,
                parallelism=args.parallelism,
                seed=args.seed,
                max_retries=args.max_retries,
                timeout_seconds=args.timeout_seconds,
                endpoint=args.endpoint,
                mock_script=args.mock_script,
                format_hint=args.format_hint,
                csv_path=args.csv_path,
            )
            return cmd_extract(cfg)
        if args.command == "eval":
            return cmd_eval(args.extracted_path, args.baseline_path, args.report_path, args.csv_path)
        if args.command == "chunk":
            cfg = ChunkConfig(args.target_chars, args.hard_max_chars, args.overlap_chars)
            return cmd_chunk(args.input_path, cfg, args.dump_dir, args.scanner, args.format_hint)
        return cmd_detect(args.input_path, args.format_hint)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except EmptyBaseline as exc:
        print(f"error: EmptyBaseline: {exc}", file=sys.stderr)
    except ParseError as exc:
        print(f"error: ParseError: {exc}", file=sys.stderr)
    except NoRecordsFound as exc:
        print(f"error: NoRecordsFound: {exc}", file=sys.stderr)
    except (VulnxError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
