"""ROUGE-L scoring of extracted records against an analyst baseline."""

from __future__ import annotations

import csv
import io
import re
import statistics
import unicodedata
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

from .consolidation import ConsolidatedSet, dedup_key
from .errors import ConfigError, EmptyBaseline
from .schema import UnifiedVulnerability


class Bucket(str, Enum):
    DIVERGENT = "divergent"
    SLIGHTLY = "slightly"
    MODERATELY = "moderately"
    HIGHLY = "highly"


DEFAULT_COMPARED_FIELDS = (
    "name",
    "description",
    "impact",
    "solution",
    "detection_method",
    "references",
    "fixed_version",
    "installed_version",
)

ALIGN_NAME_FLOOR = 0.3


@dataclass(frozen=True)
class EvalConfig:
    divergent_max: float = 0.4
    slightly_max: float = 0.6
    moderately_max: float = 0.7
    beta: float = 1.0
    compared_fields: tuple[str, ...] = DEFAULT_COMPARED_FIELDS

    def __post_init__(self) -> None:
        if not 0 < self.divergent_max < self.slightly_max < self.moderately_max < 1:
            raise ConfigError("bucket thresholds must satisfy 0 < divergent < slightly < moderately < 1")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        object.__setattr__(self, "compared_fields", tuple(self.compared_fields))


@dataclass(frozen=True)
class FieldScore:
    record_key: str
    field: str
    score: float
    bucket: Bucket | None
    both_null: bool = False


@dataclass
class EvalReport:
    per_field_mean: dict[str, float]
    overall_mean: float
    bucket_counts: dict[str, int]
    below_highly_pct: float
    unmatched_candidates: int
    unmatched_baseline: int
    scored_fields: int
    both_null_fields: int
    per_record_mean: dict[str, float] = field(default_factory=dict)
    record_text_mean: float = 0.0
    diagnostics: list[tuple[str, str]] = field(default_factory=list)
    scores: list[FieldScore] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scores"] = [
            {**asdict(s), "bucket": s.bucket.value if s.bucket else None} for s in self.scores
        ]
        d["diagnostics"] = [list(x) for x in self.diagnostics]
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["record_key", "field", "score", "bucket"])
        for s in self.scores:
            if not s.both_null:
                w.writerow([s.record_key, s.field, f"{s.score:.6f}", s.bucket.value])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Tokens and LCS
# ---------------------------------------------------------------------------

_URL_TOKEN = re.compile(r"^(?:[a-z][a-z0-9+.-]*://|www\.)", re.IGNORECASE)
_URL_LEAD = "([{<\"'"
_URL_TRAIL = ".,;:!?)]}>\"'"


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def tokenize(text: str | None) -> list[str]:
    """Lowercased whitespace tokens with edge punctuation removed.

    Only edges are touched, so CVE ids and versions survive whole
    ("CVE-2017-9798," -> "cve-2017-9798"). URLs lose only wrapping brackets
    and sentence punctuation, keeping a trailing slash or fragment.
    """
    if not text:
        return []
    out = []
    for raw in text.lower().split():
        core = raw.lstrip(_URL_LEAD)
        if _URL_TOKEN.match(core):
            tok = core.rstrip(_URL_TRAIL)
        else:
            tok = _strip_punct(raw)
        if tok:
            out.append(tok)
    return out


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest common subsequence length; O(len(a)*len(b)) time, O(min) space."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                left, up = cur[j], prev[j + 1]
                cur.append(left if left > up else up)
        prev = cur
    return prev[-1]


def rouge_l_tokens(cand: Sequence[str], ref: Sequence[str], beta: float = 1.0) -> float:
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    b2 = beta * beta
    return (1 + b2) * p * r / (r + b2 * p)


def rouge_l(candidate: str | None, reference: str | None, cfg: EvalConfig | None = None) -> float:
    beta = cfg.beta if cfg else 1.0
    return rouge_l_tokens(tokenize(candidate), tokenize(reference), beta)


def classify_similarity(score: float, cfg: EvalConfig | None = None) -> Bucket:
    cfg = cfg or EvalConfig()
    if score <= cfg.divergent_max:
        return Bucket.DIVERGENT
    if score <= cfg.slightly_max:
        return Bucket.SLIGHTLY
    if score <= cfg.moderately_max:
        return Bucket.MODERATELY
    return Bucket.HIGHLY


# ---------------------------------------------------------------------------
# Alignment and scoring
# ---------------------------------------------------------------------------


def _name_score(a: UnifiedVulnerability, b: UnifiedVulnerability) -> float:
    if not a.name or not b.name:
        return 0.0
    return rouge_l(a.name, b.name)


@dataclass
class Alignment:
    pairs: list[tuple[int, int]]  # (candidate index, baseline index)
    unmatched_candidates: list[int]
    unmatched_baseline: list[int]


def align_records(candidates: Sequence[UnifiedVulnerability], baseline: Sequence[UnifiedVulnerability]) -> Alignment:
    """Pair records: shared CVE first, then greedy by name similarity (>= 0.3).

    Within each stage the highest name score is taken first; exact ties go
    to the lowest (candidate, baseline) indices.
    """
    used_c: set[int] = set()
    used_b: set[int] = set()
    pairs: list[tuple[int, int]] = []
    names = {}

    def score(i: int, j: int) -> float:
        if (i, j) not in names:
            names[(i, j)] = _name_score(candidates[i], baseline[j])
        return names[(i, j)]

    def greedy(options: list[tuple[int, int]]) -> None:
        for i, j in sorted(options, key=lambda ij: (-score(*ij), ij)):
            if i not in used_c and j not in used_b:
                used_c.add(i)
                used_b.add(j)
                pairs.append((i, j))

    base_cves = [set(b.cves) for b in baseline]
    greedy([(i, j) for i, c in enumerate(candidates) for j in range(len(baseline)) if set(c.cves) & base_cves[j]])
    greedy(
        [
            (i, j)
            for i in range(len(candidates))
            if i not in used_c
            for j in range(len(baseline))
            if j not in used_b and score(i, j) >= ALIGN_NAME_FLOOR
        ]
    )
    pairs.sort(key=lambda ij: ij[1])
    return Alignment(
        pairs,
        [i for i in range(len(candidates)) if i not in used_c],
        [j for j in range(len(baseline)) if j not in used_b],
    )


def field_text(rec: UnifiedVulnerability, name: str) -> str | None:
    value = getattr(rec, name)
    if isinstance(value, tuple):
        return " ".join(value) if value else None
    if value is None:
        return None
    return str(value)


def _record_key(rec: UnifiedVulnerability, j: int) -> str:
    return rec.id or f"baseline-{j + 1:04d}"


def _ends_mid_sentence(text: str) -> bool:
    return not text.rstrip().endswith((".", "!", "?", ")", "]", ":"))


def evaluate(
    extracted: ConsolidatedSet | Sequence[UnifiedVulnerability],
    baseline: Sequence[UnifiedVulnerability],
    cfg: EvalConfig | None = None,
) -> EvalReport:
    cfg = cfg or EvalConfig()
    if not baseline:
        raise EmptyBaseline("baseline has no records")
    candidates = list(extracted.records if isinstance(extracted, ConsolidatedSet) else extracted)
    align = align_records(candidates, baseline)
    diagnostics: list[tuple[str, str]] = []
    scores: list[FieldScore] = []
    text_scores: list[float] = []

    for i, j in align.pairs:
        cand, ref = candidates[i], baseline[j]
        key = _record_key(ref, j)
        for name in cfg.compared_fields:
            c_text, r_text = field_text(cand, name), field_text(ref, name)
            if c_text is None and r_text is None:
                scores.append(FieldScore(key, name, 1.0, None, both_null=True))
                continue
            if c_text is None or r_text is None:
                s = 0.0
            else:
                c_tok, r_tok = tokenize(c_text), tokenize(r_text)
                s = rouge_l_tokens(c_tok, r_tok, cfg.beta)
                if 0 < len(c_tok) < len(r_tok) and r_tok[: len(c_tok)] == c_tok and _ends_mid_sentence(c_text):
                    diagnostics.append((key, f"truncation_suspected:{name}"))
            scores.append(FieldScore(key, name, s, classify_similarity(s, cfg)))
        c_all = " ".join(filter(None, (field_text(cand, n) for n in cfg.compared_fields)))
        r_all = " ".join(filter(None, (field_text(ref, n) for n in cfg.compared_fields)))
        text_scores.append(rouge_l(c_all, r_all, cfg))

    for j in align.unmatched_baseline:
        key = _record_key(baseline[j], j)
        diagnostics.append((key, "omission"))
        text_scores.append(0.0)
        for name in cfg.compared_fields:
            scores.append(FieldScore(key, name, 0.0, classify_similarity(0.0, cfg)))

    matched_keys = {dedup_key(candidates[i]) for i, _ in align.pairs}
    for i in align.unmatched_candidates:
        cand = candidates[i]
        key = f"candidate:{cand.id or i}"
        near = any(_name_score(cand, baseline[j]) > cfg.moderately_max for _, j in align.pairs)
        if near or dedup_key(cand) in matched_keys:
            diagnostics.append((key, "duplicate_suspected"))
        else:
            diagnostics.append((key, "unmatched_candidate"))

    scores.sort(key=lambda s: (s.record_key, s.field))
    diagnostics.sort()
    scored = [s for s in scores if not s.both_null]
    counts = {b.value: 0 for b in Bucket}
    for s in scored:
        counts[s.bucket.value] += 1
    per_field = {
        name: statistics.fmean(vals)
        for name in cfg.compared_fields
        if (vals := [s.score for s in scored if s.field == name])
    }
    per_record: dict[str, list[float]] = {}
    for s in scored:
        per_record.setdefault(s.record_key, []).append(s.score)
    overall = statistics.fmean(s.score for s in scored) if scored else 0.0
    below = 100.0 * (len(scored) - counts[Bucket.HIGHLY.value]) / len(scored) if scored else 0.0
    return EvalReport(
        per_field_mean=per_field,
        overall_mean=overall,
        bucket_counts=counts,
        below_highly_pct=below,
        unmatched_candidates=len(align.unmatched_candidates),
        unmatched_baseline=len(align.unmatched_baseline),
        scored_fields=len(scored),
        both_null_fields=len(scores) - len(scored),
        per_record_mean={k: statistics.fmean(v) for k, v in sorted(per_record.items())},
        record_text_mean=statistics.fmean(text_scores) if text_scores else 0.0,
        diagnostics=diagnostics,
        scores=scores,
        config={**asdict(cfg), "compared_fields": list(cfg.compared_fields), "variant": "rouge-l sentence-level F-measure"},
    )
