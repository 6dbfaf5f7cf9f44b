"""Validation gate: advisory cross-referencing plus relevance filtering.

Filtering is deterministic pattern/dependency matching, never learned:
the point of this stage is transparent, repeatable false-positive
reduction. Missing context fails open (no filtering); missing severity
data fails closed (the finding is routed to prediction, never dropped).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fnmatch import fnmatch
from pathlib import Path

from .advisories import AdvisoryIndex, AdvisoryRecord, KevEntry
from .findings import CanonicalFinding


class AssessmentStatus(str, Enum):
    VALIDATED = "validated"
    IRRELEVANT = "irrelevant"
    NEEDS_PREDICTION = "needs_prediction"


@dataclass(frozen=True, slots=True)
class ProjectContext:
    """Declared dependencies and allow/deny package patterns."""

    dependencies: frozenset[tuple[str, str]] = frozenset()
    asset_tags: tuple[str, ...] = ()
    allow_patterns: tuple[str, ...] = ()
    deny_patterns: tuple[str, ...] = ()

    @property
    def dependency_names(self) -> frozenset[str]:
        return frozenset(name for name, _ in self.dependencies)

    @classmethod
    def empty(cls) -> "ProjectContext":
        return cls()

    @classmethod
    def from_file(cls, path) -> "ProjectContext":
        """Line format: ``dep NAME VERSION``, ``allow PAT``, ``deny PAT``, ``tag TEXT``.

        Blank lines and ``#`` comments are ignored.
        """
        dependencies = set()
        tags: list[str] = []
        allow: list[str] = []
        deny: list[str] = []
        for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            keyword, _, rest = line.partition(" ")
            rest = rest.strip()
            if keyword == "dep" and rest:
                name, _, version = rest.partition(" ")
                if not name:
                    raise ValueError(f"{path}:{line_no}: dependency name missing")
                dependencies.add((name, version.strip()))
            elif keyword == "allow" and rest:
                allow.append(rest)
            elif keyword == "deny" and rest:
                deny.append(rest)
            elif keyword == "tag" and rest:
                tags.append(rest)
            else:
                raise ValueError(f"{path}:{line_no}: cannot parse {line!r}")
        return cls(dependencies=frozenset(dependencies), asset_tags=tuple(tags),
                   allow_patterns=tuple(allow), deny_patterns=tuple(deny))


@dataclass(frozen=True, slots=True)
class AssessedFinding:
    finding: CanonicalFinding
    nvd: AdvisoryRecord | None
    euvd: AdvisoryRecord | None
    kev: KevEntry | None
    status: AssessmentStatus
    rationale: str


def _match(patterns, names):
    for pattern in patterns:
        for name in names:
            if fnmatch(name, pattern):
                return pattern, name
    return None


def assess(finding: CanonicalFinding, context: ProjectContext,
           index: AdvisoryIndex) -> AssessedFinding:
    """Annotate one finding with advisory hits and a relevance verdict.

    Total function: a finding is only irrelevant when a deny rule fires
    or its packages are provably absent from the declared dependencies;
    anything without an advisory vector degrades to needs_prediction.
    """
    hits = index.lookup(finding.cve_id)
    names = {name for name, _, _ in finding.affected_packages if name}

    def build(status, rationale):
        return AssessedFinding(finding=finding, nvd=hits.nvd, euvd=hits.euvd,
                               kev=hits.kev, status=status, rationale=rationale)

    allowed = _match(context.allow_patterns, names)
    if allowed is None:
        denied = _match(context.deny_patterns, names)
        if denied is not None:
            pattern, name = denied
            return build(AssessmentStatus.IRRELEVANT,
                         f"deny rule {pattern!r} matched package {name!r}")
        declared = context.dependency_names
        if declared and names and not names & declared:
            listed = ", ".join(sorted(names))
            return build(AssessmentStatus.IRRELEVANT,
                         f"packages [{listed}] absent from declared dependencies")

    if hits.any_vector is not None:
        source = "nvd" if (hits.nvd and hits.nvd.cvss_vector) else "euvd"
        return build(AssessmentStatus.VALIDATED, f"cvss vector supplied by {source}")
    return build(AssessmentStatus.NEEDS_PREDICTION,
                 "no advisory source supplied a cvss vector")
