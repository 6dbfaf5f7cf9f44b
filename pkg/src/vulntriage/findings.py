"""Scanner output parsing and CVE-keyed deduplication.

Trivy, Grype, and Snyk JSON reports are flattened into RawFindings; a
regex extractor covers unstructured text (an LLM-backed extractor can be
plugged in behind the same signature). Deduplication collapses findings
into one CanonicalFinding per CVE; findings without a CVE id are grouped
by normalized description text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum


class MalformedReport(ValueError):
    """Payload is not valid JSON or lacks the tool's root structure."""


class UnknownTool(ValueError):
    pass


class SourceTool(str, Enum):
    TRIVY = "trivy"
    GRYPE = "grype"
    SNYK = "snyk"
    UNSTRUCTURED = "unstructured"


CVE_PATTERN = re.compile(r"CVE-\d{4}-\d{4,}")
_CVE_SCAN = re.compile(CVE_PATTERN.pattern, re.IGNORECASE)

_PUNCT = re.compile(r"[^\w\s]")
_WHITESPACE = re.compile(r"\s+")


@dataclass(frozen=True, slots=True)
class RawFinding:
    """One vulnerability entry as reported by a single tool."""

    source_tool: SourceTool
    cve_id: str | None
    package_name: str
    package_version: str
    fixed_version: str | None
    description: str
    reported_severity: str | None
    artifact_path: str

    def __post_init__(self):
        if self.cve_id is not None and not CVE_PATTERN.fullmatch(self.cve_id):
            raise ValueError(f"malformed CVE id {self.cve_id!r}")


@dataclass(frozen=True, slots=True)
class ParseIssue:
    """A report entry that could not be turned into a RawFinding."""

    index: int
    location: str
    reason: str


@dataclass(slots=True)
class ParseResult:
    findings: list[RawFinding] = field(default_factory=list)
    issues: list[ParseIssue] = field(default_factory=list)


@dataclass(frozen=True, slots=True)
class CanonicalFinding:
    """A deduplicated finding keyed by CVE id (or normalized description)."""

    cve_id: str | None
    descriptions: tuple[str, ...]
    affected_packages: frozenset[tuple[str, str, str | None]]
    sources: frozenset[SourceTool]
    duplicate_count: int

    @property
    def dedup_key(self) -> str:
        if self.cve_id is not None:
            return self.cve_id
        return "desc:" + normalize_description(self.descriptions[0] if self.descriptions else "")

    @property
    def description(self) -> str:
        """Longest merged description; the text used for prediction."""
        if not self.descriptions:
            return ""
        return max(self.descriptions, key=lambda d: (len(d), d))


def normalize_description(text: str) -> str:
    """Lowercase, punctuation-stripped, whitespace-collapsed text. Idempotent."""
    return _WHITESPACE.sub(" ", _PUNCT.sub(" ", text)).strip().lower()


def _clean_cve(value) -> str | None:
    if not isinstance(value, str):
        return None
    candidate = value.strip().upper()
    return candidate if CVE_PATTERN.fullmatch(candidate) else None


def _text(value) -> str:
    return value.strip() if isinstance(value, str) else ""


def _opt_text(value) -> str | None:
    text = _text(value)
    return text or None


def parse_scanner_report(payload: bytes | str, tool: SourceTool | str,
                         artifact_path: str = "") -> ParseResult:
    """Parse one scanner JSON report into RawFindings.

    Order is preserved and nothing is dropped silently: entries that
    cannot be parsed are returned as ParseIssues alongside the findings.
    """
    tool = SourceTool(tool)
    if tool is SourceTool.UNSTRUCTURED:
        raise UnknownTool("unstructured text goes through extract_unstructured()")

    if isinstance(payload, bytes):
        payload = payload.decode("utf-8", errors="replace")
    try:
        document = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise MalformedReport(f"{tool.value} report is not valid JSON: {exc}") from exc

    if tool is SourceTool.TRIVY:
        return _parse_trivy(document, artifact_path)
    if tool is SourceTool.GRYPE:
        return _parse_grype(document, artifact_path)
    return _parse_snyk(document, artifact_path)


def _parse_trivy(document, artifact_path: str) -> ParseResult:
    if not isinstance(document, dict) or not isinstance(document.get("Results"), list):
        raise MalformedReport("trivy report lacks a Results array")
    result = ParseResult()
    index = 0
    for res_no, res in enumerate(document["Results"]):
        vulns = res.get("Vulnerabilities") if isinstance(res, dict) else None
        if vulns is None:
            continue
        for entry in vulns:
            location = f"Results[{res_no}]"
            if not isinstance(entry, dict):
                result.issues.append(ParseIssue(index, location, "vulnerability entry is not an object"))
            else:
                result.findings.append(RawFinding(
                    source_tool=SourceTool.TRIVY,
                    cve_id=_clean_cve(entry.get("VulnerabilityID")),
                    package_name=_text(entry.get("PkgName")),
                    package_version=_text(entry.get("InstalledVersion")),
                    fixed_version=_opt_text(entry.get("FixedVersion")),
                    description=_text(entry.get("Description")),
                    reported_severity=_opt_text(entry.get("Severity")),
                    artifact_path=artifact_path,
                ))
            index += 1
    return result


def _parse_grype(document, artifact_path: str) -> ParseResult:
    if not isinstance(document, dict) or not isinstance(document.get("matches"), list):
        raise MalformedReport("grype report lacks a matches array")
    result = ParseResult()
    for index, entry in enumerate(document["matches"]):
        if not isinstance(entry, dict):
            result.issues.append(ParseIssue(index, "matches", "match entry is not an object"))
            continue
        vuln = entry.get("vulnerability") or {}
        artifact = entry.get("artifact") or {}
        if not isinstance(vuln, dict) or not isinstance(artifact, dict):
            result.issues.append(ParseIssue(index, "matches", "vulnerability/artifact is not an object"))
            continue
        fix = vuln.get("fix") or {}
        versions = fix.get("versions") if isinstance(fix, dict) else None
        fixed = versions[0] if isinstance(versions, list) and versions else None
        result.findings.append(RawFinding(
            source_tool=SourceTool.GRYPE,
            cve_id=_clean_cve(vuln.get("id")),
            package_name=_text(artifact.get("name")),
            package_version=_text(artifact.get("version")),
            fixed_version=_opt_text(fixed),
            description=_text(vuln.get("description")),
            reported_severity=_opt_text(vuln.get("severity")),
            artifact_path=artifact_path,
        ))
    return result


def _parse_snyk(document, artifact_path: str) -> ParseResult:
    if not isinstance(document, dict) or not isinstance(document.get("vulnerabilities"), list):
        raise MalformedReport("snyk report lacks a vulnerabilities array")
    result = ParseResult()
    for index, entry in enumerate(document["vulnerabilities"]):
        if not isinstance(entry, dict):
            result.issues.append(ParseIssue(index, "vulnerabilities", "entry is not an object"))
            continue
        identifiers = entry.get("identifiers") or {}
        cves = identifiers.get("CVE") if isinstance(identifiers, dict) else None
        cve = cves[0] if isinstance(cves, list) and cves else None
        fixed_in = entry.get("fixedIn")
        fixed = fixed_in[0] if isinstance(fixed_in, list) and fixed_in else None
        result.findings.append(RawFinding(
            source_tool=SourceTool.SNYK,
            cve_id=_clean_cve(cve),
            package_name=_text(entry.get("packageName")),
            package_version=_text(entry.get("version")),
            fixed_version=_opt_text(fixed),
            description=_text(entry.get("description")),
            reported_severity=_opt_text(entry.get("severity")),
            artifact_path=artifact_path,
        ))
    return result


def extract_unstructured(text: str, artifact_path: str = "unstructured") -> list[RawFinding]:
    """Pull CVE mentions out of free text (CLI logs, prose).

    One finding per distinct CVE id; the first line mentioning it is
    kept as the description. Total function: no matches, no findings.
    """
    found: dict[str, str] = {}
    for line in text.splitlines():
        for match in _CVE_SCAN.finditer(line):
            cve = match.group(0).upper()
            found.setdefault(cve, line.strip())
    return [
        RawFinding(
            source_tool=SourceTool.UNSTRUCTURED,
            cve_id=cve,
            package_name="",
            package_version="",
            fixed_version=None,
            description=context,
            reported_severity=None,
            artifact_path=artifact_path,
        )
        for cve, context in found.items()
    ]


def deduplicate(findings: list[RawFinding]) -> list[CanonicalFinding]:
    """Collapse findings into unique CVE-keyed canonical records.

    Findings without a CVE id are grouped by exact normalized-description
    match. Output order is deterministic: CVE-keyed findings ascending by
    id, then description-keyed ones ascending by normalized text.
    """
    groups: dict[tuple[int, str], dict] = {}
    for finding in findings:
        if finding.cve_id is not None:
            key = (0, finding.cve_id)
        else:
            key = (1, normalize_description(finding.description))
        group = groups.setdefault(key, {
            "cve_id": finding.cve_id,
            "descriptions": set(),
            "packages": set(),
            "sources": set(),
            "count": 0,
        })
        if finding.description:
            group["descriptions"].add(finding.description)
        group["packages"].add((finding.package_name, finding.package_version,
                               finding.fixed_version))
        group["sources"].add(finding.source_tool)
        group["count"] += 1

    canonical = []
    for key in sorted(groups):
        group = groups[key]
        canonical.append(CanonicalFinding(
            cve_id=group["cve_id"],
            # sorted so that permuting the input never changes the output value
            descriptions=tuple(sorted(group["descriptions"])),
            affected_packages=frozenset(group["packages"]),
            sources=frozenset(group["sources"]),
            duplicate_count=group["count"],
        ))
    return canonical
