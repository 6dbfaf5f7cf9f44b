"""Advisory snapshot loading and lookup (NVD, EUVD, CISA KEV).

Snapshots are local JSON files so runs are reproducible offline. The
optional remote refresh always materializes to a snapshot file first and
then goes through the same loader. An index is immutable once built;
refreshes produce a new fragment that callers merge and swap atomically.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

import requests

from . import cvss
from .findings import CVE_PATTERN

logger = logging.getLogger(__name__)


class SnapshotUnreadable(Exception):
    """File missing, empty, or not JSON."""


class SchemaMismatch(Exception):
    """Valid JSON but not the declared source's snapshot format."""


class NetworkUnavailable(Exception):
    pass


class RemoteSchemaChanged(Exception):
    pass


class RateLimited(Exception):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class AdvisorySource(str, Enum):
    NVD = "nvd"
    EUVD = "euvd"


@dataclass(frozen=True, slots=True)
class AdvisoryRecord:
    cve_id: str
    source: AdvisorySource
    description: str
    cvss_vector: cvss.CvssVector | None
    base_score: float | None
    published: str | None
    modified: str | None


@dataclass(frozen=True, slots=True)
class KevEntry:
    cve_id: str
    vendor_project: str
    product: str
    required_action: str
    date_added: str


@dataclass(frozen=True, slots=True)
class SnapshotMetadata:
    source: str
    origin: str
    loaded_at: float
    record_count: int
    skipped_count: int
    score_mismatch_count: int


@dataclass(frozen=True, slots=True)
class LookupResult:
    """Per-source hit or None; lookups are total and never raise."""

    nvd: AdvisoryRecord | None
    euvd: AdvisoryRecord | None
    kev: KevEntry | None

    @property
    def any_vector(self) -> cvss.CvssVector | None:
        for record in (self.nvd, self.euvd):
            if record is not None and record.cvss_vector is not None:
                return record.cvss_vector
        return None


@dataclass(frozen=True)
class AdvisoryIndex:
    records: dict[AdvisorySource, dict[str, AdvisoryRecord]] = field(
        default_factory=lambda: {s: {} for s in AdvisorySource})
    kev: dict[str, KevEntry] = field(default_factory=dict)
    snapshots: tuple[SnapshotMetadata, ...] = ()

    def merge(self, other: "AdvisoryIndex") -> "AdvisoryIndex":
        """New index with the other fragment layered on top."""
        merged = {s: {**self.records[s], **other.records.get(s, {})}
                  for s in AdvisorySource}
        return AdvisoryIndex(
            records=merged,
            kev={**self.kev, **other.kev},
            snapshots=self.snapshots + other.snapshots,
        )

    def lookup(self, cve_id: str | None) -> LookupResult:
        if cve_id is None:
            return LookupResult(None, None, None)
        return LookupResult(
            nvd=self.records[AdvisorySource.NVD].get(cve_id),
            euvd=self.records[AdvisorySource.EUVD].get(cve_id),
            kev=self.kev.get(cve_id),
        )


def lookup(index: AdvisoryIndex, cve_id: str | None) -> LookupResult:
    return index.lookup(cve_id)


def default_euvd_mapping() -> dict:
    text = resources.files("vulntriage").joinpath("data/euvd_mapping.json").read_text()
    return json.loads(text)


def _dig(obj, dotted: str):
    """Resolve a dotted path; integer segments index into lists."""
    current = obj
    for segment in dotted.split("."):
        if isinstance(current, list):
            try:
                current = current[int(segment)]
            except (ValueError, IndexError):
                return None
        elif isinstance(current, dict):
            current = current.get(segment)
        else:
            return None
        if current is None:
            return None
    return current


def _read_snapshot(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SnapshotUnreadable(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise SnapshotUnreadable(f"{path} is empty")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotUnreadable(f"{path} is not valid JSON: {exc}") from exc
    return document


def _finalize_scores(cve_id: str, vector_string, stored_score):
    """Parse the vector and reconcile it with the stored score.

    Returns (vector, score, mismatch_flag). The vector wins on
    disagreement; the score is always the recomputed one.
    """
    if vector_string is None:
        score = float(stored_score) if isinstance(stored_score, (int, float)) else None
        return None, score, False
    vector = cvss.parse_vector(vector_string)
    recomputed = cvss.base_score(vector)
    mismatch = (isinstance(stored_score, (int, float))
                and abs(float(stored_score) - recomputed) >= 0.05)
    if mismatch:
        logger.warning("%s: stored base score %s disagrees with vector (%s); vector wins",
                       cve_id, stored_score, recomputed)
    return vector, recomputed, mismatch


def load_snapshot(path: str | Path, source: str,
                  euvd_mapping: dict | None = None) -> AdvisoryIndex:
    """Load one snapshot file into an index fragment.

    Well-formed records are indexed; malformed ones are counted as
    skipped in the snapshot metadata, never fatal.
    """
    document = _read_snapshot(path)
    if source in ("nvd", "euvd"):
        src = AdvisorySource(source)
        if src is AdvisorySource.NVD:
            records, skipped, mismatches = _load_nvd(document, path)
        else:
            records, skipped, mismatches = _load_euvd(document, path, euvd_mapping)
        meta = SnapshotMetadata(source=source, origin=str(path), loaded_at=time.time(),
                                record_count=len(records), skipped_count=skipped,
                                score_mismatch_count=mismatches)
        fragment = AdvisoryIndex(snapshots=(meta,))
        fragment.records[src].update(records)
        return fragment
    if source == "kev":
        entries, skipped = _load_kev(document, path)
        meta = SnapshotMetadata(source="kev", origin=str(path), loaded_at=time.time(),
                                record_count=len(entries), skipped_count=skipped,
                                score_mismatch_count=0)
        fragment = AdvisoryIndex(snapshots=(meta,))
        fragment.kev.update(entries)
        return fragment
    raise ValueError(f"unknown advisory source {source!r}")


def _entries_or_mismatch(document, path, key="vulnerabilities") -> list:
    if not isinstance(document, dict) or not isinstance(document.get(key), list):
        raise SchemaMismatch(f"{path}: expected an object with a {key!r} array")
    return document[key]


def _load_nvd(document, path):
    entries = _entries_or_mismatch(document, path)
    records: dict[str, AdvisoryRecord] = {}
    skipped = mismatches = 0
    for entry in entries:
        cve = entry.get("cve") if isinstance(entry, dict) else None
        if not isinstance(cve, dict):
            skipped += 1
            continue
        cve_id = cve.get("id")
        if not isinstance(cve_id, str) or not CVE_PATTERN.fullmatch(cve_id):
            skipped += 1
            continue
        description = ""
        for desc in cve.get("descriptions") or []:
            if isinstance(desc, dict) and desc.get("lang") == "en":
                description = desc.get("value") or ""
                break
        metric = _dig(cve, "metrics.cvssMetricV31.0.cvssData") or {}
        try:
            vector, score, mismatch = _finalize_scores(
                cve_id, metric.get("vectorString"), metric.get("baseScore"))
        except cvss.VectorError:
            skipped += 1
            continue
        mismatches += mismatch
        records[cve_id] = AdvisoryRecord(
            cve_id=cve_id, source=AdvisorySource.NVD, description=description,
            cvss_vector=vector, base_score=score,
            published=cve.get("published"), modified=cve.get("lastModified"),
        )
    if entries and not records:
        raise SchemaMismatch(f"{path}: no entry matches the NVD feed layout")
    return records, skipped, mismatches


def _load_euvd(document, path, mapping: dict | None):
    mapping = mapping or default_euvd_mapping()
    records_path = mapping.get("records", "items")
    fields = mapping["fields"]
    entries = _entries_or_mismatch(document, path, key=records_path)
    records: dict[str, AdvisoryRecord] = {}
    skipped = mismatches = 0
    for entry in entries:
        if not isinstance(entry, dict):
            skipped += 1
            continue
        cve_id = _dig(entry, fields["cve_id"])
        if not isinstance(cve_id, str) or not CVE_PATTERN.fullmatch(cve_id):
            skipped += 1
            continue
        try:
            vector, score, mismatch = _finalize_scores(
                cve_id, _dig(entry, fields["vector"]), _dig(entry, fields["base_score"]))
        except cvss.VectorError:
            skipped += 1
            continue
        mismatches += mismatch
        records[cve_id] = AdvisoryRecord(
            cve_id=cve_id, source=AdvisorySource.EUVD,
            description=_dig(entry, fields["description"]) or "",
            cvss_vector=vector, base_score=score,
            published=_dig(entry, fields.get("published", "published")),
            modified=_dig(entry, fields.get("modified", "modified")),
        )
    if entries and not records:
        raise SchemaMismatch(f"{path}: no entry matches the EUVD mapping")
    return records, skipped, mismatches


def _load_kev(document, path):
    entries = _entries_or_mismatch(document, path)
    kev: dict[str, KevEntry] = {}
    skipped = 0
    for entry in entries:
        if not isinstance(entry, dict):
            skipped += 1
            continue
        cve_id = entry.get("cveID")
        action = entry.get("requiredAction")
        if not isinstance(cve_id, str) or not CVE_PATTERN.fullmatch(cve_id) \
                or not isinstance(action, str) or not action.strip():
            skipped += 1
            continue
        kev[cve_id] = KevEntry(
            cve_id=cve_id,
            vendor_project=entry.get("vendorProject") or "",
            product=entry.get("product") or "",
            required_action=action.strip(),
            date_added=entry.get("dateAdded") or "",
        )
    if entries and not kev:
        raise SchemaMismatch(f"{path}: no entry matches the KEV catalog layout")
    return kev, skipped


@dataclass(slots=True)
class RefreshConfig:
    url: str
    source: str              # nvd | euvd | kev
    dest_path: str
    api_key_env: str = "NVD_API_KEY"
    request_interval_s: float = 6.0
    timeout_s: float = 30.0
    euvd_mapping: dict | None = None


def refresh_remote(config: RefreshConfig,
                   session: requests.Session | None = None) -> AdvisoryIndex:
    """Download a snapshot, persist it, and load it.

    The feed is paged with the configured request interval between
    pages. An ETag sidecar file makes unchanged feeds a no-op: the
    existing snapshot is reloaded untouched.
    """
    session = session or requests.Session()
    dest = Path(config.dest_path)
    etag_path = dest.with_suffix(dest.suffix + ".etag")

    headers = {}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["apiKey"] = key
    if dest.exists() and etag_path.exists():
        headers["If-None-Match"] = etag_path.read_text().strip()

    response = _fetch(session, config, headers, start_index=0)
    if response.status_code == 304:
        return load_snapshot(dest, config.source, config.euvd_mapping)

    document = _decode_remote(response, config)
    pages = [document]
    total = document.get("totalResults")
    page_size = document.get("resultsPerPage")
    if isinstance(total, int) and isinstance(page_size, int) and page_size > 0:
        fetched = len(document.get("vulnerabilities") or [])
        while fetched < total:
            time.sleep(config.request_interval_s)
            next_page = _decode_remote(
                _fetch(session, config, dict(headers), start_index=fetched), config)
            batch = next_page.get("vulnerabilities") or []
            if not batch:
                break
            pages.append(next_page)
            fetched += len(batch)
        if len(pages) > 1:
            combined = list(document.get("vulnerabilities") or [])
            for page in pages[1:]:
                combined.extend(page.get("vulnerabilities") or [])
            document = {**document, "vulnerabilities": combined}

    tmp = dest.with_suffix(dest.suffix + ".tmp")
    tmp.parent.mkdir(parents=True, exist_ok=True)
    tmp.write_text(json.dumps(document))
    fragment = load_snapshot(tmp, config.source, config.euvd_mapping)
    os.replace(tmp, dest)  # only swap once the payload validated
    etag = response.headers.get("ETag")
    if etag:
        etag_path.write_text(etag)
    return AdvisoryIndex(
        records=fragment.records, kev=fragment.kev,
        snapshots=tuple(replace(m, origin=str(dest)) for m in fragment.snapshots),
    )


def _fetch(session, config: RefreshConfig, headers, start_index: int):
    params = {"startIndex": start_index} if start_index else None
    try:
        response = session.get(config.url, headers=headers, params=params,
                               timeout=config.timeout_s)
    except requests.RequestException as exc:
        raise NetworkUnavailable(f"GET {config.url} failed: {exc}") from exc
    if response.status_code in (304, 200):
        return response
    if response.status_code in (403, 429, 503):
        retry_after = response.headers.get("Retry-After")
        raise RateLimited(
            f"GET {config.url} returned {response.status_code}",
            retry_after=float(retry_after) if retry_after else None,
        )
    raise NetworkUnavailable(f"GET {config.url} returned {response.status_code}")


def _decode_remote(response, config: RefreshConfig) -> dict:
    try:
        document = response.json()
    except ValueError as exc:
        raise RemoteSchemaChanged(f"{config.url}: response is not JSON") from exc
    if not isinstance(document, dict):
        raise RemoteSchemaChanged(f"{config.url}: expected a JSON object")
    records_key = "vulnerabilities"
    if config.source == "euvd":
        records_key = (config.euvd_mapping or default_euvd_mapping()).get("records", "items")
    if not isinstance(document.get(records_key), list):
        raise RemoteSchemaChanged(f"{config.url}: missing {records_key!r} array")
    return document
