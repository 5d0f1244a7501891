"""Hypothesis strategies and small builders shared by the test modules."""

from __future__ import annotations

import random

from hypothesis import strategies as st

from vulnx.schema import CVSS_VERSIONS, OPENVAS_LABELS, OTHER_KEY, SEVERITY_LABELS, ScannerKind, UnifiedVulnerability

# Printable text: no control characters except newline and tab, never empty.
_chars = st.characters(blacklist_categories=("Cc", "Cs"), blacklist_characters="\x00") | st.sampled_from("\n\t")
texts = st.text(_chars, min_size=1, max_size=60)
opt_texts = st.none() | texts

cves = st.builds(
    lambda y, n: f"CVE-{y}-{n}",
    st.integers(1999, 2030),
    st.integers(0, 9_999_999).map(lambda n: f"{n:04d}"),
)
urls = st.builds(lambda h, p: f"https://{h}.example.org/{p}", st.from_regex(r"[a-z]{1,10}", fullmatch=True), st.from_regex(r"[a-z0-9_]{0,12}", fullmatch=True))
scores = st.none() | st.floats(0.0, 10.0, allow_nan=False, allow_infinity=False)
raw_keys = st.sampled_from(OPENVAS_LABELS + (OTHER_KEY,))


@st.composite
def records(draw, scanner: ScannerKind | None = None) -> UnifiedVulnerability:
    kind = scanner or draw(st.sampled_from([ScannerKind.OPENVAS, ScannerKind.TENABLE_WAS]))
    score = draw(scores)
    return UnifiedVulnerability(
        id=draw(st.from_regex(r"[a-z_]{1,12}-\d{4}", fullmatch=True)),
        scanner=kind,
        name=draw(opt_texts),
        cves=tuple(draw(st.lists(cves, max_size=3, unique=True))),
        description=draw(opt_texts),
        installed_version=draw(st.none() | st.from_regex(r"\d{1,2}(\.\d{1,3}){1,3}", fullmatch=True)),
        fixed_version=draw(st.none() | st.from_regex(r"\d{1,2}(\.\d{1,3}){1,3}", fullmatch=True)),
        impact=draw(opt_texts),
        severity_label=draw(st.none() | st.sampled_from(SEVERITY_LABELS)),
        cvss_score=score,
        cvss_version=draw(st.none() | st.sampled_from(CVSS_VERSIONS)) if score is not None else None,
        solution=draw(opt_texts),
        detection_method=draw(opt_texts),
        family=draw(opt_texts),
        references=tuple(draw(st.lists(urls, max_size=3, unique=True))),
        host=draw(st.none() | st.from_regex(r"[a-z]{1,8}\.example\.com", fullmatch=True)),
        port=draw(st.none() | st.from_regex(r"\d{1,5}/tcp", fullmatch=True)),
        raw_fields=draw(st.dictionaries(raw_keys, texts, max_size=3)),
    )


WORDS = "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima mike november oscar".split()


def random_record(rng: random.Random, i: int, kind: ScannerKind = ScannerKind.OPENVAS) -> UnifiedVulnerability:
    """A plain random record for consolidation tests; some fields left null."""

    def maybe(value):
        return value if rng.random() < 0.7 else None

    return UnifiedVulnerability(
        id=f"c-{i}",
        scanner=kind,
        name=f"{rng.choice(WORDS)} {rng.choice(WORDS)} {rng.randint(0, 40)}",
        cves=tuple(sorted({f"CVE-20{rng.randint(10, 24)}-{rng.randint(1000, 1020)}" for _ in range(rng.randint(0, 2))})),
        description=maybe(" ".join(rng.choices(WORDS, k=8))),
        solution=maybe(" ".join(rng.choices(WORDS, k=5))),
        impact=maybe(" ".join(rng.choices(WORDS, k=5))),
        cvss_score=maybe(round(rng.uniform(0, 10), 1)),
        host=rng.choice(["10.0.0.1", "10.0.0.2", None]),
        port=rng.choice(["80/tcp", "443/tcp", None]),
    )
