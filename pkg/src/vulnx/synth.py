"""Synthetic OpenVAS / Tenable WAS text reports with known ground truth.

The generator builds each finding from structured values, renders it in the
scanner's text layout, and builds the expected ``UnifiedVulnerability``
directly from the same values (not through ``map_fields``), so a report and
its baseline can be used to check the extraction pipeline end to end.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .schema import ScannerKind, UnifiedVulnerability

_WORDS = (
    "attacker remote request server module configuration memory buffer header "
    "session cookie response handler parser input validation directive access "
    "privilege process thread socket certificate cipher protocol negotiation "
    "client daemon service component library function parameter boundary "
    "overflow disclosure injection traversal authentication token timeout "
    "resource allocation record packet stream payload network interface "
    "crafted malicious unauthenticated sensitive arbitrary specific default "
    "affected vulnerable insecure improper incorrect missing weak legacy"
).split()

_HOSTS = ("192.168.56.101", "192.168.56.102", "10.0.0.15", "10.0.0.23")
_PORTS = ("80/tcp", "443/tcp", "22/tcp", "3306/tcp", "8080/tcp", "25/tcp")
_FAMILIES = (
    "Web Server Vulnerability",
    "Web application abuses",
    "SSL and TLS",
    "Denial of Service",
    "Databases",
    "General",
    "Product detection",
)
_PRODUCTS = (
    "Apache HTTP Server",
    "nginx",
    "OpenSSH",
    "MySQL Server",
    "PHP",
    "OpenSSL",
    "Postfix SMTP Server",
    "jQuery",
    "Microsoft IIS",
    "Tomcat",
)
_FLAWS = (
    "Information Disclosure Vulnerability",
    "Denial of Service Vulnerability",
    "Remote Code Execution Vulnerability",
    "Cross-Site Scripting Vulnerability",
    "Privilege Escalation Vulnerability",
    "Memory Corruption Vulnerability",
    "Security Bypass Vulnerability",
    "Multiple Vulnerabilities",
)
_TLS_FINDINGS = (
    "SSL/TLS: Report Weak Cipher Suites",
    "SSL/TLS: Deprecated TLSv1.0 and TLSv1.1 Protocol Detection",
    "SSL/TLS: Certificate Expired",
    "SSL/TLS: Diffie-Hellman Key Exchange Insufficient DH Group Strength Vulnerability",
)

OPTIONSBLEED_OPENVAS = {
    "name": "Apache HTTP Server OPTIONS Memory Leak Vulnerability (OptionsBleed)",
    "oid": "1.3.6.1.4.1.25623.1.0.812033",
    "severity": "Medium",
    "cvss": "5.0",
    "port": "80/tcp",
    "family": "Web Server Vulnerability",
    "host": "192.168.56.101",
    "summary": [
        "Apache HTTP Server allows remote attackers to read data from process",
        "memory if the Limit directive can be set in a user's .htaccess file,",
        "or if httpd.conf has certain misconfigurations, aka Optionsbleed.",
    ],
    "installed": "2.2.8",
    "fixed_line": "2.4.28 (or equivalent patch for 2.2.34)",
    "fixed": "2.4.28",
    "impact": ["Allows unauthorized reading of memory blocks from the server."],
    "solution": [
        "Solution type: VendorFix",
        "Update to Apache HTTP Server 2.4.28 or later. For Apache HTTP Server",
        "running version 2.2.34 apply the patch linked in the references.",
    ],
    "affected": ["Apache HTTP Server 2.2.x versions up to 2.2.34 and 2.4.x up to 2.4.27."],
    "insight": [
        "The flaw exists because of a use-after-free error in the OPTIONS",
        "request handling when an invalid method is referenced by a Limit",
        "directive.",
    ],
    "method": [
        "Checks if a vulnerable version is present on the target host.",
        "Details: Apache Web Server Detection (OID: 1.3.6.1.4.1.25623.1.0.900498)",
    ],
    "log_method": [
        "Details: Apache HTTP Server OPTIONS Memory Leak Vulnerability (OptionsBleed)",
        "Version used: 2023-07-14T05:06:08Z",
    ],
    "cves": ["CVE-2017-9798"],
    "bids": ["100872"],
    "urls": [
        "http://openwall.com/lists/oss-security/2017/09/18/2",
        "https://blog.fuzzing-project.org/60-Optionsbleed-HTTP-OPTIONS-method-can-leak-Apaches-server-memory.html",
    ],
    "advisories": ["CERT-Bund: CB-K17/1622"],
}

OPTIONSBLEED_TENABLE = {
    "plugin_id": "98913",
    "name": "Apache 2.4.x < 2.4.28 HTTP Vulnerability (OptionsBleed)",
    "family": "Component Vulnerability",
    "url": "https://www.example.com/",
    "host": "www.example.com",
    "installed": "2.4.7",
    "fixed": "2.4.28",
    "description": [
        "Versions of Apache 2.4.x prior to 2.4.28 are affected by a vulnerability",
        "that allows remote attackers to read secret data from process memory",
        "when the Limit directive is used in an .htaccess file.",
    ],
    "solution": ["Update to Apache HTTP Server 2.4.28 or later."],
    "see_also": ["https://httpd.apache.org/security/vulnerabilities_24.html#2.4.28"],
    "properties": ["Severity: High", "Exploit Available: true", "Published: 2017-09-18"],
    "discovery": ["First Discovered: 2024-03-04", "Last Observed: 2024-05-12"],
    "vpr": ["Threat Recency: No recorded events", "Product Coverage: Medium"],
    "plugin_details": ["Plugin ID 98913", "Publication Date: 2017-09-20", "Plugin Version: 1.8"],
    "risk": [
        "Risk Factor: High",
        "CVSSv3 Base Score: 7.5",
        "CVSSv3 Vector: CVSS:3.0/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N",
        "CVSSv2 Base Score: 5.0",
        "CVSSv2 Vector: CVSS2#AV:N/AC:L/Au:N/C:P/I:N/A:N",
    ],
    "cves": ["CVE-2017-9798"],
    "bids": ["100872"],
}


@dataclass
class SyntheticReport:
    kind: ScannerKind
    text: str
    baseline: list[UnifiedVulnerability]
    # source label -> text per record, as the rule extractor should see it
    sources: list[dict[str, str]] = field(default_factory=list)


def _sentence(rng: random.Random, lo: int = 8, hi: int = 18) -> str:
    words = [rng.choice(_WORDS) for _ in range(rng.randint(lo, hi))]
    return words[0].capitalize() + " " + " ".join(words[1:]) + "."


def _paragraph(rng: random.Random, sentences: int, width: int = 76) -> list[str]:
    text = " ".join(_sentence(rng) for _ in range(sentences))
    lines, line = [], ""
    for word in text.split():
        if line and len(line) + 1 + len(word) > width:
            lines.append(line)
            line = word
        else:
            line = f"{line} {word}" if line else word
    if line:
        lines.append(line)
    return lines


def _severity(score: float) -> str:
    if score >= 9.0:
        return "Critical"
    if score >= 7.0:
        return "High"
    if score >= 4.0:
        return "Medium"
    return "Low"


def _version(rng: random.Random) -> str:
    return f"{rng.randint(1, 9)}.{rng.randint(0, 12)}.{rng.randint(0, 40)}"


def _cve(rng: random.Random) -> str:
    return f"CVE-{rng.randint(2012, 2024)}-{rng.randint(1000, 49999)}"


def _random_openvas(rng: random.Random, i: int) -> dict:
    product = rng.choice(_PRODUCTS)
    if i % 9 == 4:
        name = f"{rng.choice(_TLS_FINDINGS)}"
    else:
        name = f"{product} {rng.choice(_FLAWS)} ({rng.randint(100, 999)}-{i:02d})"
    score = round(rng.choice([rng.uniform(0.5, 3.9), rng.uniform(4.0, 6.9), rng.uniform(7.0, 8.9), rng.uniform(9.0, 10.0)]), 1)
    has_versions = rng.random() < 0.75
    installed = _version(rng) if has_versions else None
    fixed = _version(rng) if has_versions else None
    n_cves = rng.choice([0, 1, 1, 2, 3])
    rec = {
        "name": name,
        "oid": f"1.3.6.1.4.1.25623.1.0.{rng.randint(100000, 999999)}",
        "severity": _severity(score),
        "cvss": f"{score:.1f}",
        "port": rng.choice(_PORTS),
        "family": rng.choice(_FAMILIES),
        "host": rng.choice(_HOSTS),
        "summary": _paragraph(rng, rng.randint(2, 4)),
        "installed": installed,
        "fixed_line": fixed,
        "fixed": fixed,
        "impact": _paragraph(rng, rng.randint(1, 3)) if rng.random() < 0.85 else None,
        "solution": ["Solution type: VendorFix"] + _paragraph(rng, rng.randint(1, 3)) if rng.random() < 0.95 else None,
        "affected": (
            [f"{product} version {installed} and prior."] if has_versions else [f"{product} on all platforms."]
        )
        if rng.random() < 0.8
        else None,
        "insight": _paragraph(rng, rng.randint(3, 9)) if rng.random() < 0.9 else None,
        "method": _paragraph(rng, rng.randint(1, 2))
        + [f"Details: {product} Detection (OID: 1.3.6.1.4.1.25623.1.0.{rng.randint(100000, 999999)})"],
        "log_method": [f"Details: {name}", f"Version used: 2024-0{rng.randint(1, 9)}-1{rng.randint(0, 9)}T08:00:00Z"]
        if rng.random() < 0.7
        else None,
        "cves": sorted({_cve(rng) for _ in range(n_cves)}),
        "bids": [str(rng.randint(10000, 109999)) for _ in range(rng.randint(0, 2))],
        "urls": [
            f"https://{rng.choice(['security-tracker.debian.org', 'www.securityfocus.com', 'nvd.nist.gov', 'ubuntu.com'])}/{rng.choice(_WORDS)}/{rng.randint(1000, 99999)}"
            for _ in range(rng.randint(1, 5))
        ],
        "advisories": [f"CERT-Bund: CB-K{rng.randint(14, 23)}/{rng.randint(100, 1999)}" for _ in range(rng.randint(0, 2))],
    }
    return rec


def _indent(lines: list[str]) -> str:
    return "".join(f"  {ln}\n" for ln in lines)


def _openvas_sections(rec: dict) -> dict[str, list[str] | None]:
    detection = None
    if rec.get("installed") or rec.get("host"):
        detection = []
        if rec.get("installed"):
            detection += [f"Installed version: {rec['installed']}", f"Fixed version:     {rec['fixed_line']}"]
        if rec.get("host"):
            detection.append(f"Host: {rec['host']}")
    refs = None
    if rec["cves"] or rec["bids"] or rec["urls"] or rec["advisories"]:
        refs = []
        if rec["cves"]:
            refs.append("CVE: " + ", ".join(rec["cves"]))
        refs += [f"BID: {b}" for b in rec["bids"]]
        refs += [f"URL: {u}" for u in rec["urls"]]
        refs += list(rec["advisories"])
    return {
        "Summary": rec.get("summary"),
        "Vulnerability Detection Result": detection,
        "Impact": rec.get("impact"),
        "Solution": rec.get("solution"),
        "Affected Software/OS": rec.get("affected"),
        "Vulnerability Insight": rec.get("insight"),
        "Vulnerability Detection Method": rec.get("method"),
        "Log Method": rec.get("log_method"),
        "References": refs,
    }


def render_openvas_record(rec: dict) -> str:
    out = [
        f"NVT: {rec['name']}\n",
        f"OID: {rec['oid']}\n",
        f"Threat: {rec['severity']} (CVSS: {rec['cvss']})\n",
        f"Port: {rec['port']}\n",
        f"Family: {rec['family']}\n",
        "\n",
    ]
    for label, lines in _openvas_sections(rec).items():
        if lines:
            out.append(f"{label}:\n{_indent(lines)}\n")
    return "".join(out)


def _join(lines: list[str] | None) -> str | None:
    return "\n".join(lines) if lines else None


def openvas_truth(rec: dict, record_id: str) -> UnifiedVulnerability:
    sections = _openvas_sections(rec)
    description = "\n\n".join(p for p in (_join(rec.get("summary")), _join(rec.get("insight"))) if p) or None
    raw = {
        label: _join(sections[label])
        for label in ("Vulnerability Detection Result", "Affected Software/OS", "Log Method")
        if sections[label]
    }
    raw["Other"] = f"OID: {rec['oid']}"
    refs = [f"BID: {b}" for b in rec["bids"]] + list(rec["urls"]) + list(rec["advisories"])
    return UnifiedVulnerability(
        id=record_id,
        scanner=ScannerKind.OPENVAS,
        name=rec["name"],
        cves=tuple(rec["cves"]),
        description=description,
        installed_version=rec.get("installed"),
        fixed_version=rec.get("fixed"),
        impact=_join(rec.get("impact")),
        severity_label=rec["severity"].lower(),
        cvss_score=float(rec["cvss"]),
        cvss_version=None,
        solution=_join(rec.get("solution")),
        detection_method=_join(rec.get("method")),
        family=rec["family"],
        references=tuple(refs),
        host=rec.get("host"),
        port=rec["port"],
        raw_fields=raw,
    )


_PREAMBLE_OPENVAS = (
    "Scan Report\n"
    "===========\n"
    "\n"
    "Summary\n"
    "\n"
    "This document reports on the results of an automatic security scan.\n"
    "The scan started at Mon Mar 4 10:02:11 2024 UTC and ended at Mon Mar 4 11:47:53 2024 UTC.\n"
    "The report first summarises the results found. Then, for each host,\n"
    "the report describes every issue found.\n"
    "\n"
)


def generate_openvas_report(
    n_records: int = 34,
    seed: int = 0,
    include_optionsbleed: bool = True,
    oversize: tuple[int, ...] = (),
    oversize_chars: int = 15000,
) -> SyntheticReport:
    """An OpenVAS text report with ``n_records`` findings and its baseline.

    Indices in ``oversize`` get their insight padded past ``oversize_chars``
    so chunking has to split them.
    """
    rng = random.Random(seed)
    recs = []
    for i in range(n_records):
        if i == 0 and include_optionsbleed:
            recs.append(dict(OPTIONSBLEED_OPENVAS))
        else:
            recs.append(_random_openvas(rng, i))
    for i in oversize:
        rec = recs[i]
        insight = list(rec.get("insight") or [])
        while len(render_openvas_record({**rec, "insight": insight})) < oversize_chars:
            insight += _paragraph(rng, 4)
        rec["insight"] = insight

    text = _PREAMBLE_OPENVAS + "".join(render_openvas_record(r) for r in recs)
    baseline = [openvas_truth(r, f"openvas-{i + 1:04d}") for i, r in enumerate(recs)]
    sources = []
    for r in recs:
        src = {label: _join(lines) for label, lines in _openvas_sections(r).items() if lines}
        src.update(NVT=r["name"], OID=r["oid"], Threat=f"{r['severity']} (CVSS: {r['cvss']})", Port=r["port"], Family=r["family"])
        sources.append(src)
    return SyntheticReport(ScannerKind.OPENVAS, text, baseline, sources)


def _tenable_sections(rec: dict) -> dict[str, list[str] | None]:
    asset = [f"URL: {rec['url']}"]
    if rec.get("installed"):
        asset += [f"Installed version: {rec['installed']}", f"Fixed version: {rec['fixed']}"]
    asset.append("First Detected: 2024-03-04")
    refs = [f"CVE: {c}" for c in rec["cves"]] + [f"BID: {b}" for b in rec["bids"]]
    return {
        "Affected Application": asset,
        "Description": rec["description"],
        "Solution": rec["solution"],
        "See Also": rec["see_also"],
        "Vulnerability Properties": rec["properties"],
        "Discovery": rec["discovery"],
        "VPR Key Drivers": rec["vpr"],
        "Plugin Details": rec["plugin_details"],
        "Risk Information": rec["risk"],
        "Reference Information": refs or None,
    }


def render_tenable_record(rec: dict) -> str:
    out = [f"Plugin ID {rec['plugin_id']} - {rec['name']}\n", f"Family: {rec['family']}\n", "\n"]
    for label, lines in _tenable_sections(rec).items():
        if lines:
            out.append(f"{label}:\n{_indent(lines)}\n")
    return "".join(out)


def _random_tenable(rng: random.Random, i: int) -> dict:
    product = rng.choice(_PRODUCTS)
    score = round(rng.uniform(2.0, 10.0), 1)
    sev = _severity(score)
    installed, fixed = _version(rng), _version(rng)
    host = f"app{i}.example.org"
    cves = sorted({_cve(rng) for _ in range(rng.randint(0, 2))})
    return {
        "plugin_id": str(98000 + rng.randint(0, 1999)),
        "name": f"{product} < {fixed} {rng.choice(_FLAWS)} ({i})",
        "family": rng.choice(["Component Vulnerability", "Web Servers", "Cross Site Scripting", "Injection"]),
        "url": f"https://{host}/",
        "host": host,
        "installed": installed,
        "fixed": fixed,
        "description": _paragraph(rng, rng.randint(2, 5)),
        "solution": [f"Update {product} to version {fixed} or later."],
        "see_also": [f"https://www.tenable.com/plugins/was/{rng.randint(98000, 99999)}"],
        "properties": [f"Severity: {sev}", "Exploit Available: false"],
        "discovery": ["First Discovered: 2024-03-04", "Last Observed: 2024-05-12"],
        "vpr": ["Threat Recency: No recorded events"],
        "plugin_details": [f"Plugin ID {98000 + i}", "Plugin Version: 1.0"],
        "risk": [f"Risk Factor: {sev}", f"CVSSv3 Base Score: {score}"],
        "cves": cves,
        "bids": [],
    }


def tenable_truth(rec: dict, record_id: str) -> UnifiedVulnerability:
    sections = _tenable_sections(rec)
    raw = {
        label: _join(sections[label])
        for label in ("Affected Application", "Vulnerability Properties", "Discovery", "VPR Key Drivers", "Risk Information")
    }
    raw["Other"] = f"Plugin ID: {rec['plugin_id']}"
    score_line = next(ln for ln in rec["risk"] if ln.startswith("CVSSv3 Base Score"))
    return UnifiedVulnerability(
        id=record_id,
        scanner=ScannerKind.TENABLE_WAS,
        name=rec["name"],
        cves=tuple(rec["cves"]),
        description=_join(rec["description"]),
        installed_version=rec.get("installed"),
        fixed_version=rec.get("fixed"),
        impact=None,
        severity_label=rec["properties"][0].split(": ", 1)[1].lower(),
        cvss_score=float(score_line.rsplit(" ", 1)[1]),
        cvss_version="v3",
        solution=_join(rec["solution"]),
        detection_method=_join(rec["plugin_details"]),
        family=rec["family"],
        references=tuple(rec["see_also"]) + tuple(f"BID: {b}" for b in rec["bids"]),
        host=rec["host"],
        port=None,
        raw_fields=raw,
    )


def generate_tenable_report(n_records: int = 6, seed: int = 0, include_optionsbleed: bool = True) -> SyntheticReport:
    rng = random.Random(seed)
    recs = [
        dict(OPTIONSBLEED_TENABLE) if i == 0 and include_optionsbleed else _random_tenable(rng, i)
        for i in range(n_records)
    ]
    text = (
        "Tenable Web App Scanning\nScan Results\n\nTarget: https://www.example.com/\n\n"
        + "".join(render_tenable_record(r) for r in recs)
    )
    baseline = [tenable_truth(r, f"tenable_was-{i + 1:04d}") for i, r in enumerate(recs)]
    return SyntheticReport(ScannerKind.TENABLE_WAS, text, baseline)


def paginate(text: str, lines_per_page: int = 50, running_header: str | None = "Scan Report  Page {n}") -> str:
    """Insert form feeds and a running header, as a PDF text layer would."""
    lines = text.split("\n")
    pages = []
    for n, i in enumerate(range(0, len(lines), lines_per_page), start=1):
        body = lines[i : i + lines_per_page]
        if running_header:
            body = [running_header.format(n=n), ""] + body
        pages.append("\n".join(body))
    return "\f".join(pages)
