"""Snapshot loading, lookups, and the record/replay remote refresh."""

import json

import pytest

from vulntriage import advisories, cvss
from vulntriage.advisories import (
    AdvisoryIndex,
    AdvisorySource,
    NetworkUnavailable,
    RateLimited,
    RefreshConfig,
    RemoteSchemaChanged,
    SchemaMismatch,
    SnapshotUnreadable,
    load_snapshot,
    lookup,
    refresh_remote,
)

CRITICAL = "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"


def nvd_entry(cve="CVE-2021-44228", desc="JNDI RCE", vector=CRITICAL, score=9.8):
    metrics = {}
    if vector is not None:
        metrics = {"cvssMetricV31": [{"cvssData": {"vectorString": vector, "baseScore": score}}]}
    return {"cve": {
        "id": cve,
        "descriptions": [{"lang": "en", "value": desc}],
        "metrics": metrics,
        "published": "2021-12-10T00:00:00",
        "lastModified": "2023-01-01T00:00:00",
    }}


def nvd_file(tmp_path, entries, name="nvd.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"vulnerabilities": entries}))
    return path


def kev_file(tmp_path, entries):
    path = tmp_path / "kev.json"
    path.write_text(json.dumps({"vulnerabilities": entries}))
    return path


def kev_entry(cve="CVE-2021-44228", action="Apply updates per vendor instructions."):
    return {"cveID": cve, "vendorProject": "Apache", "product": "Log4j",
            "requiredAction": action, "dateAdded": "2021-12-10"}


class TestLoadSnapshot:
    def test_three_records(self, tmp_path):
        path = nvd_file(tmp_path, [nvd_entry(cve=f"CVE-2021-{n}") for n in (1001, 1002, 1003)])
        index = load_snapshot(path, "nvd")
        assert index.snapshots[0].record_count == 3
        assert index.snapshots[0].skipped_count == 0
        assert len(index.records[AdvisorySource.NVD]) == 3

    def test_one_malformed_of_four(self, tmp_path):
        entries = [nvd_entry(cve=f"CVE-2021-{n}") for n in (1001, 1002, 1003)]
        entries.insert(1, {"cve": {"id": "not-a-cve"}})
        index = load_snapshot(nvd_file(tmp_path, entries), "nvd")
        assert index.snapshots[0].record_count == 3
        assert index.snapshots[0].skipped_count == 1

    def test_empty_file_unreadable(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        with pytest.raises(SnapshotUnreadable):
            load_snapshot(path, "nvd")

    def test_missing_file_unreadable(self, tmp_path):
        with pytest.raises(SnapshotUnreadable):
            load_snapshot(tmp_path / "nope.json", "nvd")

    def test_wrong_root_schema_mismatch(self, tmp_path):
        path = tmp_path / "wrong.json"
        path.write_text(json.dumps({"cves": []}))
        with pytest.raises(SchemaMismatch):
            load_snapshot(path, "nvd")

    def test_kev_loaded_as_nvd_is_schema_mismatch(self, tmp_path):
        path = kev_file(tmp_path, [kev_entry()])
        with pytest.raises(SchemaMismatch):
            load_snapshot(path, "nvd")

    def test_score_mismatch_flagged_vector_wins(self, tmp_path):
        path = nvd_file(tmp_path, [nvd_entry(score=5.0)])  # vector says 9.8
        index = load_snapshot(path, "nvd")
        record = index.records[AdvisorySource.NVD]["CVE-2021-44228"]
        assert record.base_score == 9.8
        assert index.snapshots[0].score_mismatch_count == 1

    def test_vector_implies_score(self, tmp_path):
        entry = nvd_entry()
        del entry["cve"]["metrics"]["cvssMetricV31"][0]["cvssData"]["baseScore"]
        index = load_snapshot(nvd_file(tmp_path, [entry]), "nvd")
        record = index.records[AdvisorySource.NVD]["CVE-2021-44228"]
        assert record.base_score == cvss.base_score(record.cvss_vector) == 9.8

    def test_euvd_via_mapping(self, tmp_path):
        path = tmp_path / "euvd.json"
        path.write_text(json.dumps({"items": [{
            "aliases": ["CVE-2021-44228"],
            "description": "JNDI RCE",
            "baseScoreVector": CRITICAL,
            "baseScore": 9.8,
            "datePublished": "2021-12-10",
            "dateUpdated": "2023-01-01",
        }]}))
        index = load_snapshot(path, "euvd")
        record = index.records[AdvisorySource.EUVD]["CVE-2021-44228"]
        assert record.source is AdvisorySource.EUVD
        assert record.base_score == 9.8

    def test_kev(self, tmp_path):
        index = load_snapshot(kev_file(tmp_path, [kev_entry()]), "kev")
        entry = index.kev["CVE-2021-44228"]
        assert entry.required_action.startswith("Apply updates")

    def test_kev_empty_action_skipped(self, tmp_path):
        index = load_snapshot(
            kev_file(tmp_path, [kev_entry(), kev_entry(cve="CVE-2024-0001", action=" ")]), "kev")
        assert index.snapshots[0].skipped_count == 1
        assert "CVE-2024-0001" not in index.kev


class TestLookup:
    def build_index(self, tmp_path):
        nvd = load_snapshot(nvd_file(tmp_path, [
            nvd_entry(cve="CVE-2024-1001"), nvd_entry(cve="CVE-2024-1002"),
            nvd_entry(cve="CVE-2024-1003"), nvd_entry(cve="CVE-2024-1004"),
        ]), "nvd")
        kev = load_snapshot(kev_file(tmp_path, [kev_entry(cve="CVE-2024-1001")]), "kev")
        return AdvisoryIndex().merge(nvd).merge(kev)

    def test_four_of_six_found(self, tmp_path):
        index = self.build_index(tmp_path)
        queried = [f"CVE-2024-{n}" for n in (1001, 1002, 1003, 1004, 1005, 1006)]
        hits = [q for q in queried if lookup(index, q).nvd is not None]
        assert len(hits) == 4

    def test_absent_everywhere(self, tmp_path):
        index = self.build_index(tmp_path)
        result = lookup(index, "CVE-1999-9999")
        assert result.nvd is None and result.euvd is None and result.kev is None

    def test_kev_required_action_matches_fixture(self, tmp_path):
        path = kev_file(tmp_path, [kev_entry(cve="CVE-2024-1001")])
        # independent oracle: grep the raw fixture for the action text
        raw_entry = [v for v in json.loads(path.read_text())["vulnerabilities"]
                     if v["cveID"] == "CVE-2024-1001"][0]
        index = self.build_index(tmp_path)
        assert index.lookup("CVE-2024-1001").kev.required_action == raw_entry["requiredAction"]

    def test_lookup_is_pure(self, tmp_path):
        index = self.build_index(tmp_path)
        first = lookup(index, "CVE-2024-1001")
        second = lookup(index, "CVE-2024-1001")
        assert first == second


class FakeResponse:
    def __init__(self, status_code=200, payload=None, headers=None, body=None):
        self.status_code = status_code
        self._payload = payload
        self._body = body
        self.headers = headers or {}

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def get(self, url, headers=None, params=None, timeout=None):
        self.calls.append({"url": url, "headers": dict(headers or {}), "params": params})
        return self.responses.pop(0)


class TestRefreshRemote:
    def config(self, tmp_path):
        return RefreshConfig(url="https://feed.example/api", source="nvd",
                             dest_path=str(tmp_path / "snap.json"),
                             request_interval_s=0.0)

    def test_recorded_page_indexed(self, tmp_path):
        recorded = {"vulnerabilities": [nvd_entry(cve="CVE-2024-1001"),
                                        nvd_entry(cve="CVE-2024-1002")],
                    "totalResults": 2, "resultsPerPage": 2}
        session = FakeSession([FakeResponse(payload=recorded, headers={"ETag": "v1"})])
        index = refresh_remote(self.config(tmp_path), session=session)
        assert len(index.records[AdvisorySource.NVD]) == 2
        assert (tmp_path / "snap.json").exists()
        assert (tmp_path / "snap.json.etag").read_text() == "v1"

    def test_http_403_rate_limited(self, tmp_path):
        session = FakeSession([FakeResponse(status_code=403, headers={"Retry-After": "30"})])
        with pytest.raises(RateLimited) as err:
            refresh_remote(self.config(tmp_path), session=session)
        assert err.value.retry_after == 30.0

    def test_http_500_network_unavailable(self, tmp_path):
        session = FakeSession([FakeResponse(status_code=500)])
        with pytest.raises(NetworkUnavailable):
            refresh_remote(self.config(tmp_path), session=session)

    def test_etag_unchanged_snapshot_untouched(self, tmp_path):
        recorded = {"vulnerabilities": [nvd_entry(cve="CVE-2024-1001")]}
        first = FakeSession([FakeResponse(payload=recorded, headers={"ETag": "v1"})])
        config = self.config(tmp_path)
        refresh_remote(config, session=first)
        before = (tmp_path / "snap.json").read_bytes()

        second = FakeSession([FakeResponse(status_code=304)])
        index = refresh_remote(config, session=second)
        assert second.calls[0]["headers"]["If-None-Match"] == "v1"
        assert (tmp_path / "snap.json").read_bytes() == before
        assert len(index.records[AdvisorySource.NVD]) == 1

    def test_schema_change_rejected_and_not_persisted(self, tmp_path):
        session = FakeSession([FakeResponse(payload={"surprise": []})])
        with pytest.raises(RemoteSchemaChanged):
            refresh_remote(self.config(tmp_path), session=session)
        assert not (tmp_path / "snap.json").exists()

    def test_pagination_merges_pages(self, tmp_path):
        page1 = {"vulnerabilities": [nvd_entry(cve="CVE-2024-1001")],
                 "totalResults": 2, "resultsPerPage": 1}
        page2 = {"vulnerabilities": [nvd_entry(cve="CVE-2024-1002")],
                 "totalResults": 2, "resultsPerPage": 1}
        session = FakeSession([FakeResponse(payload=page1), FakeResponse(payload=page2)])
        index = refresh_remote(self.config(tmp_path), session=session)
        assert len(index.records[AdvisorySource.NVD]) == 2
        assert session.calls[1]["params"] == {"startIndex": 1}
