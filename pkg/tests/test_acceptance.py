"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one pass/fail line (see conftest). Runtime budgets are
asserted inside the tests that carry one.
"""

import json
import math
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

import cvss_oracle
from vulntriage import cvss
from vulntriage.api import create_app
from vulntriage.fixtures import PROFILES, build_scenario, rule_corpus
from vulntriage.metrics import (
    UNDEFINED,
    ClassificationCounts,
    RunCosts,
    alert_reduction,
    classification_metrics,
    funnel_check,
    workflow_metrics,
)
from vulntriage.orchestrator import (
    STAGES,
    PipelineRun,
    RunConfig,
    run_scenario,
)
from vulntriage.predictor import (
    GateDecision,
    LabeledRecord,
    evaluate,
    gate,
    predict,
    prepare_dataset,
    train,
)

CORPUS_PATH = Path(__file__).parent / "data" / "cvss_corpus.json"

TABLE_IV_PREDICTION_TEST = {
    "raw_detection": 6, "unique_cves": 6, "nvd_hits": 4, "euvd_hits": 4,
    "needs_prediction": 2, "predicted": 2, "prediction_failed": 0,
    "integrated": 6, "with_cvss": 6, "prioritized": 4, "below_threshold": 2,
    "rec_cisa": 2, "rec_llm": 2, "rec_total": 4,
}

TABLE_IV_TRAIN_TICKET = {
    "raw_detection": 3983, "unique_cves": 155, "nvd_hits": 155, "euvd_hits": 144,
    "needs_prediction": 0, "predicted": 0, "prediction_failed": 0,
    "integrated": 155, "with_cvss": 155, "prioritized": 82, "below_threshold": 73,
    "rec_cisa": 4, "rec_llm": 78, "rec_total": 82,
}


def test_cvss_oracle_equivalence():
    corpus = json.loads(CORPUS_PATH.read_text())
    assert len(corpus) >= 200
    started = time.perf_counter()
    for entry in corpus:
        vector = cvss.parse_vector(entry["vector"])
        assert abs(cvss.base_score(vector) - entry["score"]) < 0.05, entry["vector"]
    round_trips = 0
    for metrics in cvss_oracle.all_vectors():
        s = cvss_oracle.vector_string(metrics)
        assert cvss.serialize(cvss.parse_vector(s)) == s
        round_trips += 1
    elapsed = time.perf_counter() - started
    assert round_trips == 2592
    assert elapsed < 1.0, f"oracle suite took {elapsed:.2f}s"


def test_split_reproduction_at_published_scale():
    n = 169_883
    vector = cvss.parse_vector("AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H")
    started = time.perf_counter()
    records = [LabeledRecord(cve_id=f"CVE-2015-{100000 + i}",
                             description=f"synthetic record {i}", vector=vector)
               for i in range(n)]
    split = prepare_dataset(records, seed=42)
    elapsed = time.perf_counter() - started
    assert (len(split.train), len(split.validation), len(split.test)) == \
        (135_905, 16_989, 16_989)

    train_ids = {r.cve_id for r in split.train}
    val_ids = {r.cve_id for r in split.validation}
    test_ids = {r.cve_id for r in split.test}
    assert not train_ids & val_ids and not train_ids & test_ids and not val_ids & test_ids
    assert len(train_ids | val_ids | test_ids) == n

    again = prepare_dataset(records, seed=42)
    assert [r.cve_id for r in again.test] == [r.cve_id for r in split.test]
    assert elapsed < 10.0, f"split took {elapsed:.2f}s"


def test_prediction_test_funnel(tmp_path):
    started = time.perf_counter()
    bundle = build_scenario(PROFILES["prediction_test"], tmp_path / "fixture")
    reports = []
    for out in ("run1", "run2"):
        config = RunConfig.from_file(bundle.config_path, out_dir=str(tmp_path / out))
        config.client_mode = "replay"
        reports.append(run_scenario(config))
    elapsed = time.perf_counter() - started

    for report in reports:
        assert report.counts.as_dict() == TABLE_IV_PREDICTION_TEST
        assert report.status == "complete"
        assert funnel_check(report.counts) == []
    assert reports[0].counts == reports[1].counts
    assert (tmp_path / "run1" / "records.jsonl").read_bytes() == \
        (tmp_path / "run2" / "records.jsonl").read_bytes()
    assert elapsed < 5.0, f"prediction-test funnel took {elapsed:.2f}s"


def test_scenario_funnels_at_scale(tmp_path):
    started = time.perf_counter()
    bundle = build_scenario(PROFILES["train_ticket"], tmp_path / "tt")
    config = RunConfig.from_file(bundle.config_path, out_dir=str(tmp_path / "tt_out"))
    report = run_scenario(config)
    tt_elapsed = time.perf_counter() - started
    assert report.counts.as_dict() == TABLE_IV_TRAIN_TICKET
    assert alert_reduction(3983, report.counts.prioritized) == 97.9
    assert tt_elapsed < 30.0, f"train-ticket scenario took {tt_elapsed:.2f}s"

    started = time.perf_counter()
    bundle = build_scenario(PROFILES["online_boutique_baseline"], tmp_path / "ob")
    config = RunConfig.from_file(bundle.config_path, out_dir=str(tmp_path / "ob_out"))
    report = run_scenario(config)
    ob_elapsed = time.perf_counter() - started
    assert report.counts.raw_detection == 32
    assert report.counts.unique_cves == 9
    assert report.counts.prioritized == 6
    assert alert_reduction(32, 6) == 81.3
    assert ob_elapsed < 30.0, f"online-boutique scenario took {ob_elapsed:.2f}s"


def test_metrics_formulas():
    # Eqs. (1)-(4) on a hand-built confusion square
    m = classification_metrics(ClassificationCounts(tp=1, tn=1, fp=1, fn=1))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5, 0.5)
    # 0/0 must surface as typed undefined, not silently 0
    undef = classification_metrics(ClassificationCounts(tp=0, tn=3, fp=0, fn=2))
    assert undef.precision is UNDEFINED and undef.f1 is UNDEFINED
    # F1 identity to 1e-9 wherever P + R > 0
    for tp, fp, fn in ((5, 2, 3), (1, 9, 0), (7, 0, 4), (3, 3, 3)):
        scores = classification_metrics(ClassificationCounts(tp=tp, tn=1, fp=fp, fn=fn))
        expected = 2 * scores.precision * scores.recall / (scores.precision + scores.recall)
        assert abs(scores.f1 - expected) < 1e-9

    # Eqs. (5)-(8) with hand-computed values
    costs = RunCosts(t_start=10.0, t_end=40.0, total_cost_usd=2.0, total_tokens=1000,
                     successful_tasks=10, successful_handoffs=5, expected_handoffs=5)
    w = workflow_metrics(costs)
    assert w.task_completion_seconds == 30.0
    assert w.cost_efficiency_tasks_per_usd == 5.0
    assert w.token_consumption_per_task == 100.0
    assert w.cooperation_pct == 100.0
    zero = workflow_metrics(RunCosts(t_start=0, t_end=1, total_cost_usd=0,
                                     total_tokens=0, successful_tasks=0,
                                     successful_handoffs=0, expected_handoffs=0))
    assert zero.cost_efficiency_tasks_per_usd is UNDEFINED
    assert zero.token_consumption_per_task is UNDEFINED
    assert zero.cooperation_pct is UNDEFINED

    # published alert-reduction values
    assert alert_reduction(3983, 82) == 97.9
    assert alert_reduction(32, 6) == 81.3


def test_predictor_sanity_floor():
    corpus = rule_corpus(5000, seed=77)
    split = prepare_dataset(corpus, seed=77)
    model = train(split.train, seed=77)
    report = evaluate(model, split.test)
    for metric in cvss.METRIC_ORDER:
        accuracy = report.per_metric[metric].accuracy
        assert accuracy >= 0.95, f"{metric} held-out accuracy {accuracy:.3f} < 0.95"

    predictions = [predict(model, r.description) for r in split.test[:200]]
    flagged_sets = []
    for threshold in (0.0, 0.25, 0.5, 0.75, 1.0):
        flagged = {i for i, p in enumerate(predictions)
                   if gate(p, threshold) is GateDecision.FLAG_FOR_REVIEW}
        flagged_sets.append(flagged)
    for smaller, larger in zip(flagged_sets, flagged_sets[1:]):
        assert smaller <= larger, "gate flag set must grow with the threshold"


def test_containment_and_determinism(tmp_path):
    from test_orchestrator import _write_context_report

    clean_dir = tmp_path / "clean"
    corrupt_dir = tmp_path / "corrupt"
    clean_dir.mkdir()
    corrupt_dir.mkdir()
    clean = run_scenario(_write_context_report(clean_dir, corrupt=False))
    corrupt = run_scenario(_write_context_report(corrupt_dir, corrupt=True))

    state = json.loads((corrupt_dir / "out" / "state.json").read_text())
    assert len(state["quarantined"]) == 1
    assert corrupt.counts.prediction_failed == 1
    assert corrupt.counts.raw_detection == clean.counts.raw_detection
    assert corrupt.counts.unique_cves == clean.counts.unique_cves
    assert corrupt.counts.prioritized == clean.counts.prioritized
    clean_queue = json.loads((clean_dir / "out" / "queue.json").read_text())
    corrupt_queue = json.loads((corrupt_dir / "out" / "queue.json").read_text())
    assert clean_queue["prioritized"] == corrupt_queue["prioritized"]
    assert funnel_check(corrupt.counts) == []

    # replay-mode reruns byte-identical
    bundle = build_scenario(PROFILES["prediction_test"], tmp_path / "fixture")
    for out in ("r1", "r2"):
        config = RunConfig.from_file(bundle.config_path, out_dir=str(tmp_path / out))
        config.client_mode = "replay"
        run_scenario(config)
    for name in ("records.jsonl", "counts.json", "recommendations.jsonl", "queue.json"):
        assert (tmp_path / "r1" / name).read_bytes() == \
            (tmp_path / "r2" / name).read_bytes(), name

    # crash-restart mid-run reaches identical final counts
    config = RunConfig.from_file(bundle.config_path, out_dir=str(tmp_path / "crash"))
    run = PipelineRun.create(config)
    for stage in STAGES[:3]:
        getattr(run, f"_stage_{stage}")()
        run.state["completed_stages"].append(stage)
        run.journal()
    del run
    resumed = PipelineRun.resume(tmp_path / "crash")
    report = resumed.execute()
    full_config = RunConfig.from_file(bundle.config_path, out_dir=str(tmp_path / "full"))
    assert report.counts == run_scenario(full_config).counts


def test_review_loop_over_api(tmp_path):
    bundle = build_scenario(PROFILES["prediction_test"], tmp_path / "fixture")
    runs_root = tmp_path / "runs"
    config = RunConfig.from_file(bundle.config_path, out_dir=str(runs_root / "gated"))
    config.gate_threshold = 1.0  # park every prediction
    report = run_scenario(config)
    assert report.status == "partial"

    client = TestClient(create_app(runs_root))
    pending = client.get("/review/pending").json()["items"]
    assert len(pending) == 2
    item = pending[0]
    override = "CVSS:3.1/AV:L/AC:H/PR:H/UI:R/S:U/C:L/I:N/A:N"

    response = client.post(f"/review/{item['item_id']}/decision", json={
        "kind": "override", "vector": override, "analyst": "analyst-7"})
    assert response.status_code == 200

    run = PipelineRun.resume(runs_root / "gated")
    record = run.state["records"][item["key"]]
    assert record["vector"] == override
    assert record["score_provenance"] == "predicted"
    assert "analyst-7" in record["analyst_note"]

    conflict = client.post(f"/review/{item['item_id']}/decision", json={
        "kind": "accept", "analyst": "analyst-8"})
    assert conflict.status_code == 409
    assert conflict.json()["detail"]["error"] == "already_decided"
