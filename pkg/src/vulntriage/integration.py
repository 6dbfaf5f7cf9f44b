"""Record assembly: merge assessment and prediction into validated records.

Source precedence for the vector is NVD, then EUVD, then the model
prediction. The base score is always recomputed from the chosen vector
so a record can never carry a score that disagrees with its own vector,
even when the upstream feed does.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from . import cvss
from .assessment import AssessedFinding, AssessmentStatus
from .findings import SourceTool
from .predictor import Prediction

RECORD_SCHEMA_VERSION = 1


class ScoreProvenance(str, Enum):
    NVD = "nvd"
    EUVD = "euvd"
    PREDICTED = "predicted"


class IncompleteRecord(Exception):
    """A mandatory field cannot be filled; the record is quarantined."""

    def __init__(self, cve_id: str | None, reason_code: str, detail: str):
        super().__init__(f"{cve_id or '<no-cve>'}: {reason_code}: {detail}")
        self.cve_id = cve_id
        self.reason_code = reason_code
        self.detail = detail


class MissingPrediction(Exception):
    pass


@dataclass(frozen=True, slots=True)
class VulnerabilityRecord:
    cve_id: str
    description: str
    vector: cvss.CvssVector
    base_score: float
    severity: cvss.SeverityBand
    score_provenance: ScoreProvenance
    prediction_confidence: float | None
    kev_listed: bool
    affected_packages: frozenset[tuple[str, str, str | None]]
    sources: frozenset[SourceTool]
    published: str | None
    modified: str | None
    conflict_note: str | None = None
    analyst_note: str | None = None


def integrate(assessed: AssessedFinding,
              prediction: Prediction | None = None,
              analyst_note: str | None = None) -> VulnerabilityRecord:
    """Build one complete record from an assessed finding.

    Raises MissingPrediction when the finding needs one and none was
    supplied, and IncompleteRecord (with a machine-readable reason) when
    a mandatory field cannot be filled.
    """
    if assessed.status is AssessmentStatus.IRRELEVANT:
        raise ValueError("irrelevant findings are filtered out before integration")

    finding = assessed.finding
    if finding.cve_id is None:
        raise IncompleteRecord(None, "cve_id_missing",
                               "finding is keyed by description only")

    description = finding.description
    if not description:
        for advisory in (assessed.nvd, assessed.euvd):
            if advisory is not None and advisory.description:
                description = advisory.description
                break
    if not description.strip():
        raise IncompleteRecord(finding.cve_id, "description_missing",
                               "no scanner or advisory description available")

    nvd_vector = assessed.nvd.cvss_vector if assessed.nvd else None
    euvd_vector = assessed.euvd.cvss_vector if assessed.euvd else None

    conflict_note = None
    if nvd_vector is not None and euvd_vector is not None and nvd_vector != euvd_vector:
        conflict_note = (f"nvd vector {nvd_vector.to_string()} overrides "
                         f"euvd vector {euvd_vector.to_string()}")

    prediction_confidence = None
    if nvd_vector is not None:
        vector, provenance, advisory = nvd_vector, ScoreProvenance.NVD, assessed.nvd
    elif euvd_vector is not None:
        vector, provenance, advisory = euvd_vector, ScoreProvenance.EUVD, assessed.euvd
    else:
        if assessed.status is not AssessmentStatus.NEEDS_PREDICTION:
            raise IncompleteRecord(finding.cve_id, "vector_missing",
                                   "validated finding carries no advisory vector")
        if prediction is None:
            raise MissingPrediction(f"{finding.cve_id} needs a prediction")
        vector, provenance, advisory = prediction.vector, ScoreProvenance.PREDICTED, None
        prediction_confidence = prediction.min_confidence

    score = cvss.base_score(vector)
    return VulnerabilityRecord(
        cve_id=finding.cve_id,
        description=description,
        vector=vector,
        base_score=score,
        severity=cvss.severity(score),
        score_provenance=provenance,
        prediction_confidence=prediction_confidence,
        kev_listed=assessed.kev is not None,
        affected_packages=finding.affected_packages,
        sources=finding.sources,
        published=advisory.published if advisory else None,
        modified=advisory.modified if advisory else None,
        conflict_note=conflict_note,
        analyst_note=analyst_note,
    )


def validate_record(record: VulnerabilityRecord) -> list[str]:
    """Invariant audit; violations come back as data, not exceptions."""
    violations = []
    if not record.cve_id:
        violations.append("cve_id missing")
    if not record.description.strip():
        violations.append("description missing")
    if record.vector is None:
        violations.append("vector missing")
        return violations
    expected = cvss.base_score(record.vector)
    if record.base_score != expected:
        violations.append(f"score/vector mismatch: {record.base_score} != {expected}")
    else:
        if record.severity is not cvss.severity(expected):
            violations.append("severity does not match base score")
    if record.score_provenance is ScoreProvenance.PREDICTED:
        if record.prediction_confidence is None:
            violations.append("predicted record lacks prediction_confidence")
    elif record.prediction_confidence is not None:
        violations.append("advisory-sourced record carries prediction_confidence")
    return violations


def record_to_dict(record: VulnerabilityRecord) -> dict:
    return {
        "schema_version": RECORD_SCHEMA_VERSION,
        "cve_id": record.cve_id,
        "description": record.description,
        "vector": record.vector.to_string(),
        "base_score": record.base_score,
        "severity": record.severity.label,
        "score_provenance": record.score_provenance.value,
        "prediction_confidence": record.prediction_confidence,
        "kev_listed": record.kev_listed,
        "affected_packages": [
            {"name": n, "version": v, "fixed_version": f}
            for n, v, f in sorted(record.affected_packages,
                                  key=lambda p: (p[0], p[1], p[2] or ""))
        ],
        "sources": sorted(s.value for s in record.sources),
        "published": record.published,
        "modified": record.modified,
        "conflict_note": record.conflict_note,
        "analyst_note": record.analyst_note,
    }


def record_from_dict(payload: dict) -> VulnerabilityRecord:
    if payload.get("schema_version") != RECORD_SCHEMA_VERSION:
        raise ValueError(f"unsupported record schema {payload.get('schema_version')!r}")
    vector = cvss.parse_vector(payload["vector"])
    return VulnerabilityRecord(
        cve_id=payload["cve_id"],
        description=payload["description"],
        vector=vector,
        base_score=payload["base_score"],
        severity=cvss.severity(payload["base_score"]),
        score_provenance=ScoreProvenance(payload["score_provenance"]),
        prediction_confidence=payload.get("prediction_confidence"),
        kev_listed=payload["kev_listed"],
        affected_packages=frozenset(
            (p["name"], p["version"], p.get("fixed_version"))
            for p in payload["affected_packages"]
        ),
        sources=frozenset(SourceTool(s) for s in payload["sources"]),
        published=payload.get("published"),
        modified=payload.get("modified"),
        conflict_note=payload.get("conflict_note"),
        analyst_note=payload.get("analyst_note"),
    )


def write_records(records, path) -> None:
    """Line-delimited export; one JSON record per line, schema-versioned."""
    with open(path, "w") as handle:
        for record in records:
            handle.write(json.dumps(record_to_dict(record), sort_keys=True) + "\n")


def read_records(path) -> list[VulnerabilityRecord]:
    records = []
    with open(path) as handle:
        for line in handle:
            if line.strip():
                records.append(record_from_dict(json.loads(line)))
    return records
