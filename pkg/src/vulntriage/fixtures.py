"""Deterministic synthetic corpora and scenario bundles.

Everything here is seeded: the same profile and seed always produce the
same files, reports, and snapshots, which keeps funnel tests and demo
runs reproducible.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from . import cvss
from .metrics import StageCounts
from .predictor import LabeledRecord, train

# Keyword rules for generating description text from a vector. Each value
# carries its own discriminative wording so a bag-of-words learner can
# recover the rule from examples.
METRIC_PHRASES: dict[str, dict[str, str]] = {
    "AV": {
        "N": "exploitable remotely across the internet",
        "A": "requires adjacent lan segment reachability",
        "L": "requires a local shell on the host",
        "P": "requires physical console contact",
    },
    "AC": {
        "L": "attack succeeds trivially and repeatably",
        "H": "attack hinges on winning a fragile race",
    },
    "PR": {
        "N": "works without any account",
        "L": "needs an ordinary user account",
        "H": "needs administrator credentials",
    },
    "UI": {
        "N": "succeeds with zero victim involvement",
        "R": "victim must open a crafted document",
    },
    "S": {
        "U": "damage stays confined inside the vulnerable component",
        "C": "damage escapes into neighbouring components",
    },
    "C": {
        "H": "discloses highly sensitive secrets wholesale",
        "L": "leaks marginal fragments of information",
        "N": "confidentiality untouched",
    },
    "I": {
        "H": "permits wholesale tampering of stored records",
        "L": "permits slight modification of a few fields",
        "N": "integrity untouched",
    },
    "A": {
        "H": "knocks the service completely offline",
        "L": "causes intermittent slowdown",
        "N": "availability untouched",
    },
}

_NOISE = ("upstream", "package", "release", "advisory", "deployment", "instance")


def description_for_vector(vector: cvss.CvssVector, rng: random.Random | None = None) -> str:
    parts = [METRIC_PHRASES[m][v] for m, v in vector.as_dict().items()]
    if rng is not None:
        parts.append(rng.choice(_NOISE))
    return " ".join(parts)


def all_vector_pool() -> list[cvss.CvssVector]:
    pool = []
    for av in cvss.METRIC_VALUES["AV"]:
        for ac in cvss.METRIC_VALUES["AC"]:
            for pr in cvss.METRIC_VALUES["PR"]:
                for ui in cvss.METRIC_VALUES["UI"]:
                    for s in cvss.METRIC_VALUES["S"]:
                        for c in cvss.METRIC_VALUES["C"]:
                            for i in cvss.METRIC_VALUES["I"]:
                                for a in cvss.METRIC_VALUES["A"]:
                                    pool.append(cvss.CvssVector(av, ac, pr, ui, s, c, i, a))
    return pool


def rule_corpus(n: int, seed: int) -> list[LabeledRecord]:
    """N labeled records whose text encodes the vector by keyword rules.

    The generating rule doubles as the oracle: a learner that recovers
    the keywords must reproduce the labels on held-out data.
    """
    rng = random.Random(seed)
    pool = all_vector_pool()
    records = []
    for i in range(n):
        vector = rng.choice(pool)
        records.append(LabeledRecord(
            cve_id=f"CVE-1990-{10000 + i}",
            description=description_for_vector(vector, rng),
            vector=vector,
        ))
    return records


@dataclass(frozen=True, slots=True)
class ScenarioProfile:
    """Shape of one synthetic scenario: every downstream count is implied."""

    name: str
    seed: int
    raw_findings: int
    unique_cves: int
    nvd_hits: int
    euvd_hits: int
    needs_prediction: int
    high_severity: int       # records scoring >= 7.0, predicted ones included
    kev_listed: int          # subset of the advisory-covered high-severity CVEs

    def __post_init__(self):
        if self.nvd_hits + self.needs_prediction != self.unique_cves:
            raise ValueError("nvd_hits + needs_prediction must equal unique_cves")
        if self.euvd_hits > self.nvd_hits:
            raise ValueError("euvd coverage cannot exceed nvd coverage here")
        if self.high_severity < self.needs_prediction:
            raise ValueError("predicted CVEs are engineered high severity")
        if self.kev_listed > self.high_severity - self.needs_prediction:
            raise ValueError("kev entries must be advisory-covered high CVEs")

    def expected_counts(self) -> StageCounts:
        return StageCounts(
            raw_detection=self.raw_findings,
            unique_cves=self.unique_cves,
            nvd_hits=self.nvd_hits,
            euvd_hits=self.euvd_hits,
            needs_prediction=self.needs_prediction,
            predicted=self.needs_prediction,
            prediction_failed=0,
            integrated=self.unique_cves,
            with_cvss=self.unique_cves,
            prioritized=self.high_severity,
            below_threshold=self.unique_cves - self.high_severity,
            rec_cisa=self.kev_listed,
            rec_llm=self.high_severity - self.kev_listed,
            rec_total=self.high_severity,
        )


PROFILES = {
    "prediction_test": ScenarioProfile(
        name="prediction_test", seed=104, raw_findings=6, unique_cves=6,
        nvd_hits=4, euvd_hits=4, needs_prediction=2, high_severity=4, kev_listed=2),
    "train_ticket": ScenarioProfile(
        name="train_ticket", seed=101, raw_findings=3983, unique_cves=155,
        nvd_hits=155, euvd_hits=144, needs_prediction=0, high_severity=82, kev_listed=4),
    "online_boutique": ScenarioProfile(
        name="online_boutique", seed=102, raw_findings=118, unique_cves=34,
        nvd_hits=34, euvd_hits=34, needs_prediction=0, high_severity=17, kev_listed=0),
    "beer_shop": ScenarioProfile(
        name="beer_shop", seed=103, raw_findings=1746, unique_cves=146,
        nvd_hits=146, euvd_hits=135, needs_prediction=0, high_severity=82, kev_listed=1),
    "online_boutique_baseline": ScenarioProfile(
        name="online_boutique_baseline", seed=105, raw_findings=32, unique_cves=9,
        nvd_hits=9, euvd_hits=9, needs_prediction=0, high_severity=6, kev_listed=0),
}

_SERVICES = (
    "auth-service", "order-service", "payment-service", "inventory-service",
    "gateway", "notification-service", "catalog-service", "billing-service",
)
_PACKAGES = (
    ("libssl", "1.1.1k", "1.1.1t"), ("log4j-core", "2.14.0", "2.17.1"),
    ("jackson-databind", "2.9.10", "2.13.4"), ("spring-web", "5.2.0", "5.3.21"),
    ("openssl", "3.0.1", "3.0.8"), ("busybox", "1.33.0", "1.35.0"),
    ("zlib", "1.2.11", "1.2.13"), ("glibc", "2.31", "2.35"),
    ("protobuf-java", "3.11.0", "3.19.6"), ("netty-codec", "4.1.42", "4.1.77"),
)

PREDICTED_VECTOR = cvss.CvssVector("N", "L", "N", "N", "U", "H", "H", "H")  # scores 9.8


def _vector_pools(seed: int):
    rng = random.Random(seed)
    high = [v for v in all_vector_pool() if cvss.base_score(v) >= 7.0]
    low = [v for v in all_vector_pool() if 0.0 < cvss.base_score(v) < 7.0]
    rng.shuffle(high)
    rng.shuffle(low)
    return high, low


@dataclass(slots=True)
class ScenarioBundle:
    root: Path
    config_path: Path
    profile: ScenarioProfile
    expected_counts: StageCounts


def build_scenario(profile: ScenarioProfile, root) -> ScenarioBundle:
    """Materialize reports, snapshots, a trained model, and a run config.

    The bundle reproduces the profile's funnel exactly: raw findings
    collapse to unique_cves, advisory coverage and severity splits match,
    and the needs-prediction CVEs carry rule-corpus wording that the
    bundled model maps onto a critical vector.
    """
    root = Path(root)
    rng = random.Random(profile.seed)
    (root / "reports").mkdir(parents=True, exist_ok=True)
    (root / "snapshots").mkdir(exist_ok=True)
    (root / "model").mkdir(exist_ok=True)

    high_pool, low_pool = _vector_pools(profile.seed)
    advisory_high = profile.high_severity - profile.needs_prediction
    advisory_low = profile.nvd_hits - advisory_high

    cves = []
    for i in range(profile.unique_cves):
        cve_id = f"CVE-2024-{20000 + i}"
        if i < advisory_high:
            vector, covered = high_pool[i % len(high_pool)], True
        elif i < advisory_high + advisory_low:
            vector, covered = low_pool[i % len(low_pool)], True
        else:
            vector, covered = PREDICTED_VECTOR, False
        packages = rng.sample(_PACKAGES, k=rng.randint(1, 3))
        cves.append({
            "cve_id": cve_id,
            "vector": vector,
            "covered": covered,
            "description": description_for_vector(vector),
            "packages": packages,
            "service": rng.choice(_SERVICES),
        })

    euvd_covered = {c["cve_id"] for c in cves if c["covered"]}
    euvd_covered = set(sorted(euvd_covered)[:profile.euvd_hits])
    kev_covered = {c["cve_id"] for c in cves[:profile.kev_listed]}

    occurrences = _spread_raw_findings(cves, profile.raw_findings, rng)
    _write_reports(root / "reports", occurrences)
    _write_nvd(root / "snapshots" / "nvd.json", [c for c in cves if c["covered"]])
    _write_euvd(root / "snapshots" / "euvd.json",
                [c for c in cves if c["cve_id"] in euvd_covered])
    _write_kev(root / "snapshots" / "kev.json",
               [c for c in cves if c["cve_id"] in kev_covered])

    model = train(rule_corpus(600, seed=profile.seed), seed=profile.seed)
    model.save(root / "model" / "predictor.json")

    config = {
        "reports": [["reports/trivy.json", "trivy"],
                    ["reports/grype.json", "grype"],
                    ["reports/snyk.json", "snyk"]],
        "snapshots": {"nvd": "snapshots/nvd.json",
                      "euvd": "snapshots/euvd.json",
                      "kev": "snapshots/kev.json"},
        "context": None,
        "model": "model/predictor.json",
        "gate_threshold": 0.5,
        "priority_threshold": 7.0,
        "client_mode": "disabled",
        "replay_log": None,
        "seed": profile.seed,
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=1))
    return ScenarioBundle(root=root, config_path=config_path, profile=profile,
                          expected_counts=profile.expected_counts())


def _spread_raw_findings(cves, total, rng):
    """One occurrence per CVE, remainder distributed at random."""
    counts = [1] * len(cves)
    for _ in range(total - len(cves)):
        counts[rng.randrange(len(cves))] += 1
    occurrences = []
    for cve, count in zip(cves, counts):
        for _ in range(count):
            name, version, fixed = rng.choice(cve["packages"])
            occurrences.append({
                "cve": cve,
                "tool": rng.choice(("trivy", "grype", "snyk")),
                "package": (name, version, fixed),
            })
    return occurrences


def _write_reports(reports_dir, occurrences):
    by_target: dict[str, list] = {}
    grype_matches = []
    snyk_vulns = []
    for occ in occurrences:
        cve = occ["cve"]
        name, version, fixed = occ["package"]
        if occ["tool"] == "trivy":
            by_target.setdefault(cve["service"], []).append({
                "VulnerabilityID": cve["cve_id"],
                "PkgName": name,
                "InstalledVersion": version,
                "FixedVersion": fixed,
                "Severity": "UNKNOWN",
                "Description": cve["description"],
            })
        elif occ["tool"] == "grype":
            grype_matches.append({
                "vulnerability": {
                    "id": cve["cve_id"],
                    "severity": "Unknown",
                    "description": cve["description"],
                    "fix": {"versions": [fixed]},
                },
                "artifact": {"name": name, "version": version},
            })
        else:
            snyk_vulns.append({
                "identifiers": {"CVE": [cve["cve_id"]]},
                "packageName": name,
                "version": version,
                "fixedIn": [fixed],
                "severity": "unknown",
                "description": cve["description"],
            })
    trivy = {"SchemaVersion": 2, "Results": [
        {"Target": target, "Vulnerabilities": vulns}
        for target, vulns in sorted(by_target.items())
    ]}
    (reports_dir / "trivy.json").write_text(json.dumps(trivy))
    (reports_dir / "grype.json").write_text(json.dumps({"matches": grype_matches}))
    (reports_dir / "snyk.json").write_text(json.dumps({"vulnerabilities": snyk_vulns}))


def _write_nvd(path, cves):
    entries = []
    for cve in cves:
        vector = cve["vector"]
        entries.append({"cve": {
            "id": cve["cve_id"],
            "descriptions": [{"lang": "en", "value": cve["description"]}],
            "metrics": {"cvssMetricV31": [{"cvssData": {
                "vectorString": vector.to_string(),
                "baseScore": cvss.base_score(vector),
            }}]},
            "published": "2024-01-02T00:00:00",
            "lastModified": "2024-03-04T00:00:00",
        }})
    path.write_text(json.dumps({"vulnerabilities": entries}))


def _write_euvd(path, cves):
    items = []
    for cve in cves:
        vector = cve["vector"]
        items.append({
            "aliases": [cve["cve_id"]],
            "description": cve["description"],
            "baseScoreVector": vector.to_string(),
            "baseScore": cvss.base_score(vector),
            "datePublished": "2024-01-02",
            "dateUpdated": "2024-03-04",
        })
    path.write_text(json.dumps({"items": items}))


def _write_kev(path, cves):
    entries = [{
        "cveID": cve["cve_id"],
        "vendorProject": "UpstreamVendor",
        "product": cve["packages"][0][0],
        "requiredAction": "Apply updates per vendor instructions.",
        "dateAdded": "2024-02-01",
    } for cve in cves]
    path.write_text(json.dumps({"vulnerabilities": entries}))
