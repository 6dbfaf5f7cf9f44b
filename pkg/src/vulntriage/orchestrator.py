"""Six-stage pipeline driver: detection, assessment, prediction,
integration, prioritization, recommendation.

State is journaled to the run directory after every stage, so a killed
run resumes from the journal and finishes with the same counts. Errors
are contained per finding (quarantine with a machine-readable reason),
never run-fatal. Low-confidence predictions and destructive
recommendations park as ReviewItems; the rest of the run proceeds and
the report stays "partial" until every item is decided.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from . import cvss
from .advisories import (
    AdvisoryIndex,
    AdvisoryRecord,
    AdvisorySource,
    KevEntry,
    load_snapshot,
)
from .assessment import AssessedFinding, AssessmentStatus, ProjectContext, assess
from .findings import (
    CanonicalFinding,
    SourceTool,
    deduplicate,
    extract_unstructured,
    parse_scanner_report,
)
from .integration import (
    IncompleteRecord,
    VulnerabilityRecord,
    integrate,
    record_from_dict,
    record_to_dict,
    write_records,
)
from .metrics import (
    UNDEFINED,
    RunCosts,
    StageCounts,
    alert_reduction,
    funnel_check,
    workflow_metrics,
)
from .predictor import (
    EmptyDescription,
    GateDecision,
    Prediction,
    PredictorModel,
    gate,
    predict,
)
from .prioritization import PrioritizationPolicy, prioritize
from .recommendation import (
    ApprovalState,
    DisabledClient,
    GenerationClient,
    LiveClient,
    LiveClientConfig,
    Recommendation,
    RecommendationSource,
    ReplayClient,
    recommend,
)

logger = logging.getLogger(__name__)

STAGES = ("detection", "assessment", "prediction", "integration",
          "prioritization", "recommendation")

STATE_FILE = "state.json"
CONFIG_FILE = "run_config.json"


class ConfigInvalid(Exception):
    pass


class UnknownItem(Exception):
    pass


class AlreadyDecided(Exception):
    def __init__(self, item_id: str, prior: dict):
        super().__init__(f"review item {item_id} already decided")
        self.item_id = item_id
        self.prior = prior


class FindingStage(str, Enum):
    DETECTED = "detected"
    ASSESSED = "assessed"
    AWAITING_REVIEW = "awaiting_review"
    PREDICTED = "predicted"
    INTEGRATED = "integrated"
    PRIORITIZED = "prioritized"
    RECOMMENDED = "recommended"
    QUARANTINED = "quarantined"


class ReviewKind(str, Enum):
    PREDICTION_OVERRIDE = "prediction_override"
    RECOMMENDATION_APPROVAL = "recommendation_approval"


class Route(str, Enum):
    CONTINUE_TO_INTEGRATION = "continue_to_integration"
    PARK_FOR_REVIEW = "park_for_review"


@dataclass(slots=True)
class RunConfig:
    reports: list[tuple[str, str]]
    snapshots: dict[str, str]
    out_dir: str
    context: str | None = None
    model: str | None = None
    gate_threshold: float = 0.5
    priority_threshold: float = 7.0
    client_mode: str = "disabled"
    replay_log: str | None = None
    generation: dict | None = None
    euvd_mapping: str | None = None
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.gate_threshold <= 1.0:
            raise ConfigInvalid(f"gate threshold {self.gate_threshold} outside [0, 1]")
        if not 0.0 <= self.priority_threshold <= 10.0:
            raise ConfigInvalid(f"priority threshold {self.priority_threshold} outside [0, 10]")
        if self.client_mode not in ("disabled", "replay", "live"):
            raise ConfigInvalid(f"unknown client mode {self.client_mode!r}")
        for path, tool in self.reports:
            if tool not in [t.value for t in SourceTool]:
                raise ConfigInvalid(f"unknown tool tag {tool!r}")
            if not Path(path).exists():
                raise ConfigInvalid(f"report {path} does not exist")
        for source, path in self.snapshots.items():
            if source not in ("nvd", "euvd", "kev"):
                raise ConfigInvalid(f"unknown snapshot source {source!r}")
            if not Path(path).exists():
                raise ConfigInvalid(f"snapshot {path} does not exist")
        for attr in ("context", "model", "euvd_mapping"):
            value = getattr(self, attr)
            if value is not None and not Path(value).exists():
                raise ConfigInvalid(f"{attr} path {value} does not exist")

    def as_dict(self) -> dict:
        return {
            "reports": [list(pair) for pair in self.reports],
            "snapshots": dict(self.snapshots),
            "out_dir": self.out_dir,
            "context": self.context,
            "model": self.model,
            "gate_threshold": self.gate_threshold,
            "priority_threshold": self.priority_threshold,
            "client_mode": self.client_mode,
            "replay_log": self.replay_log,
            "generation": self.generation,
            "euvd_mapping": self.euvd_mapping,
            "seed": self.seed,
        }

    def digest(self) -> str:
        # out_dir is where results land, not what the run computes
        payload = {k: v for k, v in self.as_dict().items() if k != "out_dir"}
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, payload: dict, base_dir: Path | None = None,
                  out_dir: str | None = None) -> "RunConfig":
        def resolve(value):
            if value is None or base_dir is None:
                return value
            return str((base_dir / value).resolve())

        reports = [(resolve(path), tool) for path, tool in payload.get("reports", [])]
        snapshots = {src: resolve(path)
                     for src, path in payload.get("snapshots", {}).items()}
        return cls(
            reports=reports,
            snapshots=snapshots,
            out_dir=out_dir or payload.get("out_dir") or "",
            context=resolve(payload.get("context")),
            model=resolve(payload.get("model")),
            gate_threshold=payload.get("gate_threshold", 0.5),
            priority_threshold=payload.get("priority_threshold", 7.0),
            client_mode=payload.get("client_mode", "disabled"),
            replay_log=resolve(payload.get("replay_log")),
            generation=payload.get("generation"),
            euvd_mapping=resolve(payload.get("euvd_mapping")),
            seed=payload.get("seed", 0),
        )

    @classmethod
    def from_file(cls, path, out_dir: str | None = None) -> "RunConfig":
        path = Path(path)
        try:
            payload = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(payload, base_dir=path.parent, out_dir=out_dir)


# ---------------------------------------------------------------------------
# serialization of domain objects into the journaled state


def _finding_to_dict(finding: CanonicalFinding) -> dict:
    return {
        "cve_id": finding.cve_id,
        "descriptions": list(finding.descriptions),
        "affected_packages": [list(p) for p in sorted(
            finding.affected_packages, key=lambda p: (p[0], p[1], p[2] or ""))],
        "sources": sorted(s.value for s in finding.sources),
        "duplicate_count": finding.duplicate_count,
    }


def _finding_from_dict(payload: dict) -> CanonicalFinding:
    return CanonicalFinding(
        cve_id=payload["cve_id"],
        descriptions=tuple(payload["descriptions"]),
        affected_packages=frozenset((p[0], p[1], p[2]) for p in payload["affected_packages"]),
        sources=frozenset(SourceTool(s) for s in payload["sources"]),
        duplicate_count=payload["duplicate_count"],
    )


def _advisory_to_dict(record: AdvisoryRecord | None) -> dict | None:
    if record is None:
        return None
    return {
        "cve_id": record.cve_id,
        "source": record.source.value,
        "description": record.description,
        "vector": record.cvss_vector.to_string() if record.cvss_vector else None,
        "base_score": record.base_score,
        "published": record.published,
        "modified": record.modified,
    }


def _advisory_from_dict(payload: dict | None) -> AdvisoryRecord | None:
    if payload is None:
        return None
    vector = cvss.parse_vector(payload["vector"]) if payload["vector"] else None
    return AdvisoryRecord(
        cve_id=payload["cve_id"], source=AdvisorySource(payload["source"]),
        description=payload["description"], cvss_vector=vector,
        base_score=payload["base_score"], published=payload["published"],
        modified=payload["modified"],
    )


def _kev_to_dict(entry: KevEntry | None) -> dict | None:
    if entry is None:
        return None
    return {
        "cve_id": entry.cve_id, "vendor_project": entry.vendor_project,
        "product": entry.product, "required_action": entry.required_action,
        "date_added": entry.date_added,
    }


def _kev_from_dict(payload: dict | None) -> KevEntry | None:
    if payload is None:
        return None
    return KevEntry(**payload)


def _assessed_to_dict(assessed: AssessedFinding) -> dict:
    return {
        "finding": _finding_to_dict(assessed.finding),
        "nvd": _advisory_to_dict(assessed.nvd),
        "euvd": _advisory_to_dict(assessed.euvd),
        "kev": _kev_to_dict(assessed.kev),
        "status": assessed.status.value,
        "rationale": assessed.rationale,
    }


def _assessed_from_dict(payload: dict) -> AssessedFinding:
    return AssessedFinding(
        finding=_finding_from_dict(payload["finding"]),
        nvd=_advisory_from_dict(payload["nvd"]),
        euvd=_advisory_from_dict(payload["euvd"]),
        kev=_kev_from_dict(payload["kev"]),
        status=AssessmentStatus(payload["status"]),
        rationale=payload["rationale"],
    )


def _prediction_to_dict(prediction: Prediction) -> dict:
    return {
        "vector": prediction.vector.to_string(),
        "per_metric_confidence": dict(prediction.per_metric_confidence),
        "min_confidence": prediction.min_confidence,
    }


def _prediction_from_dict(payload: dict) -> Prediction:
    return Prediction(
        vector=cvss.parse_vector(payload["vector"]),
        per_metric_confidence=dict(payload["per_metric_confidence"]),
        min_confidence=payload["min_confidence"],
    )


def _recommendation_to_dict(rec: Recommendation) -> dict:
    return {
        "cve_id": rec.cve_id,
        "action": rec.action,
        "source": rec.source.value,
        "grounding_refs": [[ref.source_id, ref.quoted] for ref in rec.grounding_refs],
        "requires_approval": rec.requires_approval,
        "approval_state": rec.approval_state.value,
    }


def _recommendation_from_dict(payload: dict) -> Recommendation:
    from .recommendation import GroundingRef

    return Recommendation(
        cve_id=payload["cve_id"],
        action=payload["action"],
        source=RecommendationSource(payload["source"]),
        grounding_refs=tuple(GroundingRef(s, q) for s, q in payload["grounding_refs"]),
        requires_approval=payload["requires_approval"],
        approval_state=ApprovalState(payload["approval_state"]),
    )


@dataclass(slots=True)
class ScenarioReport:
    run_id: str
    status: str
    counts: StageCounts
    manifest: dict
    manifest_digest: str
    workflow: dict
    reductions: dict
    pending_reviews: int
    funnel_problems: list[str]
    out_dir: str

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "status": self.status,
            "counts": self.counts.as_dict(),
            "manifest": self.manifest,
            "manifest_digest": self.manifest_digest,
            "workflow": self.workflow,
            "reductions": self.reductions,
            "pending_reviews": self.pending_reviews,
            "funnel_problems": self.funnel_problems,
            "out_dir": self.out_dir,
        }


class PipelineRun:
    """One scenario execution bound to a run directory."""

    def __init__(self, config: RunConfig, state: dict):
        self.config = config
        self.state = state
        self.out_dir = Path(config.out_dir)
        self._client: GenerationClient | None = None

    # -- construction -------------------------------------------------------

    @classmethod
    def create(cls, config: RunConfig) -> "PipelineRun":
        config.validate()
        out_dir = Path(config.out_dir)
        if (out_dir / STATE_FILE).exists():
            return cls.resume(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = cls._build_manifest(config)
        state = {
            "run_id": "run-" + config.digest()[:12],
            "completed_stages": [],
            "manifest": manifest,
            "t_start": time.time(),
            "t_end": None,
            "raw_count": 0,
            "parse_issues": [],
            "findings": {},      # dedup_key -> canonical dict
            "stage_of": {},      # dedup_key -> FindingStage value
            "assessed": {},      # dedup_key -> assessed dict
            "predictions": {},   # dedup_key -> {prediction, gate, resolved}
            "records": {},       # dedup_key -> record dict
            "quarantined": {},   # dedup_key -> {reason_code, detail, stage}
            "queue": {"prioritized": [], "below_threshold": []},
            "recommendations": {},   # dedup_key -> recommendation dict
            "review_items": {},      # item_id -> item dict
            "review_order": [],
            "handoffs": {"expected": 0, "successful": 0},
            "tasks": 0,
            "usage": {"tokens": 0, "cost_usd": 0.0, "calls": 0},
            "trace": [],
        }
        (out_dir / CONFIG_FILE).write_text(json.dumps(config.as_dict(), indent=1))
        run = cls(config, state)
        run._trace("run", "created", detail=state["run_id"])
        run.journal()
        return run

    @classmethod
    def resume(cls, out_dir) -> "PipelineRun":
        out_dir = Path(out_dir)
        try:
            state = json.loads((out_dir / STATE_FILE).read_text())
            payload = json.loads((out_dir / CONFIG_FILE).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot resume from {out_dir}: {exc}") from exc
        config = RunConfig.from_dict(payload, base_dir=None, out_dir=str(out_dir))
        return cls(config, state)

    @staticmethod
    def _build_manifest(config: RunConfig) -> dict:
        def file_digest(path):
            return hashlib.sha256(Path(path).read_bytes()).hexdigest()

        return {
            "config_digest": config.digest(),
            "snapshot_digests": {src: file_digest(path)
                                 for src, path in sorted(config.snapshots.items())},
            "model_digest": file_digest(config.model) if config.model else None,
            "seed": config.seed,
        }

    # -- infrastructure -----------------------------------------------------

    def journal(self) -> None:
        tmp = self.out_dir / (STATE_FILE + ".tmp")
        tmp.write_text(json.dumps(self.state))
        os.replace(tmp, self.out_dir / STATE_FILE)

    def _trace(self, kind: str, event: str, key: str | None = None, detail: str = ""):
        self.state["trace"].append({
            "seq": len(self.state["trace"]),
            "ts": time.time(),
            "kind": kind,
            "event": event,
            "key": key,
            "detail": detail,
        })

    def _move(self, key: str, to_stage: FindingStage, detail: str = ""):
        prior = self.state["stage_of"].get(key)
        self.state["stage_of"][key] = to_stage.value
        self._trace("stage", f"{prior or 'none'}->{to_stage.value}", key=key,
                    detail=detail)

    def _handoff(self, ok: bool):
        self.state["handoffs"]["expected"] += 1
        if ok:
            self.state["handoffs"]["successful"] += 1

    def _task_done(self):
        self.state["tasks"] += 1

    def _quarantine(self, key: str, stage: str, reason_code: str, detail: str):
        self.state["quarantined"][key] = {
            "reason_code": reason_code, "detail": detail, "stage": stage}
        self._move(key, FindingStage.QUARANTINED,
                   detail=f"{reason_code}: {detail}")

    def client(self) -> GenerationClient:
        if self._client is None:
            mode = self.config.client_mode
            if mode == "replay":
                log = self.config.replay_log or str(self.out_dir / "replay.jsonl")
                self._client = ReplayClient(log)
            elif mode == "live":
                gen = self.config.generation or {}
                if "endpoint" not in gen or "model" not in gen:
                    raise ConfigInvalid("live client mode needs generation.endpoint and .model")
                log = self.config.replay_log or str(self.out_dir / "replay.jsonl")
                self._client = LiveClient(LiveClientConfig(
                    endpoint=gen["endpoint"], model=gen["model"],
                    api_key_env=gen.get("api_key_env", "GENERATION_API_KEY"),
                    temperature=gen.get("temperature", 0.1),
                    max_tokens=gen.get("max_tokens", 3000),
                    cost_per_1k_tokens_usd=gen.get("cost_per_1k_tokens_usd", 0.0),
                ), log)
            else:
                self._client = DisabledClient()
        return self._client

    # -- stages -------------------------------------------------------------

    def execute(self) -> ScenarioReport:
        for stage in STAGES:
            if stage in self.state["completed_stages"]:
                continue
            getattr(self, f"_stage_{stage}")()
            self.state["completed_stages"].append(stage)
            self.journal()
        if self.state["t_end"] is None:
            self.state["t_end"] = time.time()
        self._trace("run", "stages_complete")
        self.journal()
        self.export()
        return self.report()

    def _stage_detection(self):
        raw = []
        for path, tool in self.config.reports:
            if tool == SourceTool.UNSTRUCTURED.value:
                found = extract_unstructured(Path(path).read_text(), artifact_path=path)
                raw.extend(found)
                self._trace("detection", "unstructured_extracted", detail=path)
            else:
                result = parse_scanner_report(Path(path).read_bytes(), tool,
                                              artifact_path=path)
                raw.extend(result.findings)
                for issue in result.issues:
                    self.state["parse_issues"].append({
                        "report": path, "index": issue.index,
                        "location": issue.location, "reason": issue.reason})
                    self._trace("detection", "parse_issue", detail=f"{path}: {issue.reason}")
        self.state["raw_count"] = len(raw)
        canonical = deduplicate(raw)
        for finding in canonical:
            key = finding.dedup_key
            self.state["findings"][key] = _finding_to_dict(finding)
            self._move(key, FindingStage.DETECTED)
            self._task_done()
        self._trace("detection", "deduplicated",
                    detail=f"{len(raw)} raw -> {len(canonical)} canonical")

    def _stage_assessment(self):
        context = (ProjectContext.from_file(self.config.context)
                   if self.config.context else ProjectContext.empty())
        index = AdvisoryIndex()
        euvd_mapping = None
        if self.config.euvd_mapping:
            euvd_mapping = json.loads(Path(self.config.euvd_mapping).read_text())
        for source, path in sorted(self.config.snapshots.items()):
            if source == "euvd":
                fragment = load_snapshot(path, source, euvd_mapping=euvd_mapping)
            else:
                fragment = load_snapshot(path, source)
            index = index.merge(fragment)
        for key in sorted(self.state["findings"]):
            finding = _finding_from_dict(self.state["findings"][key])
            assessed = assess(finding, context, index)
            self.state["assessed"][key] = _assessed_to_dict(assessed)
            self._handoff(True)
            self._move(key, FindingStage.ASSESSED, detail=assessed.rationale)
            self._task_done()

    def _stage_prediction(self):
        model = None
        for key in sorted(self.state["assessed"]):
            assessed = self.state["assessed"][key]
            if assessed["status"] != AssessmentStatus.NEEDS_PREDICTION.value:
                continue
            self._handoff(True)
            if model is None:
                if self.config.model is None:
                    self._quarantine(key, "prediction", "no_model",
                                     "finding needs prediction but no model is configured")
                    continue
                model = PredictorModel.load(self.config.model)
            finding = _finding_from_dict(assessed["finding"])
            try:
                prediction = predict(model, finding.description)
            except EmptyDescription as exc:
                self._quarantine(key, "prediction", "empty_description", str(exc))
                continue
            route = route_after_prediction(prediction, self.config.gate_threshold)
            accepted = route is Route.CONTINUE_TO_INTEGRATION
            self.state["predictions"][key] = {
                "prediction": _prediction_to_dict(prediction),
                "gate": (GateDecision.ACCEPT if accepted
                         else GateDecision.FLAG_FOR_REVIEW).value,
                "resolved": accepted,
                "resolution": "gate_accept" if accepted else None,
                "analyst_note": None,
            }
            if accepted:
                self._move(key, FindingStage.PREDICTED,
                           detail=f"min confidence {prediction.min_confidence:.3f}")
            else:
                self._park_prediction(key, prediction)
            self._task_done()

    def _park_prediction(self, key: str, prediction: Prediction):
        item_id = self._new_item_id()
        finding = _finding_from_dict(self.state["assessed"][key]["finding"])
        self.state["review_items"][item_id] = {
            "item_id": item_id,
            "kind": ReviewKind.PREDICTION_OVERRIDE.value,
            "key": key,
            "cve_id": finding.cve_id,
            "payload": {
                "prediction": _prediction_to_dict(prediction),
                "description": finding.description,
            },
            "decision": None,
        }
        self.state["review_order"].append(item_id)
        self._move(key, FindingStage.AWAITING_REVIEW,
                   detail=f"gate flagged min confidence {prediction.min_confidence:.3f}")
        self._trace("review", "parked", key=key, detail=item_id)

    def _new_item_id(self) -> str:
        return f"{self.state['run_id']}-item{len(self.state['review_items']):04d}"

    def _stage_integration(self):
        for key in sorted(self.state["assessed"]):
            assessed_dict = self.state["assessed"][key]
            status = assessed_dict["status"]
            if status == AssessmentStatus.IRRELEVANT.value:
                self._trace("integration", "skipped_irrelevant", key=key,
                            detail=assessed_dict["rationale"])
                continue
            if key in self.state["quarantined"]:
                continue
            if status == AssessmentStatus.NEEDS_PREDICTION.value:
                entry = self.state["predictions"].get(key)
                if entry is None or not entry["resolved"]:
                    continue  # parked; resumes via review decision
                prediction = _prediction_from_dict(entry["prediction"])
                note = entry.get("analyst_note")
            else:
                prediction, note = None, None
            self._integrate_one(key, prediction, note)

    def _integrate_one(self, key: str, prediction: Prediction | None,
                       analyst_note: str | None):
        assessed = _assessed_from_dict(self.state["assessed"][key])
        self._handoff(True)
        try:
            record = integrate(assessed, prediction, analyst_note=analyst_note)
        except IncompleteRecord as exc:
            self.state["handoffs"]["successful"] -= 1  # the transfer failed
            self._quarantine(key, "integration", exc.reason_code, exc.detail)
            return
        self.state["records"][key] = record_to_dict(record)
        self._move(key, FindingStage.INTEGRATED)
        self._task_done()

    def _stage_prioritization(self):
        records = {key: record_from_dict(payload)
                   for key, payload in self.state["records"].items()}
        policy = PrioritizationPolicy(threshold=self.config.priority_threshold)
        queue = prioritize(list(records.values()), policy)
        key_of = {record.cve_id: key for key, record in records.items()}
        self.state["queue"] = {
            "prioritized": [key_of[r.cve_id] for r in queue.prioritized],
            "below_threshold": [key_of[r.cve_id] for r in queue.below_threshold],
        }
        for key in self.state["records"]:
            self._handoff(True)
            self._move(key, FindingStage.PRIORITIZED,
                       detail="queued" if key in self.state["queue"]["prioritized"]
                       else "below threshold")
            self._task_done()

    def _stage_recommendation(self):
        client = self.client()
        for key in self.state["queue"]["prioritized"]:
            if key in self.state["recommendations"]:
                continue
            self._recommend_one(key, client)

    def _recommend_one(self, key: str, client: GenerationClient):
        record = record_from_dict(self.state["records"][key])
        kev = _kev_from_dict(self.state["assessed"][key]["kev"])
        self._handoff(True)
        before = (client.usage.tokens, client.usage.cost_usd, client.usage.calls)
        rec = recommend(record, kev, client)
        self.state["usage"]["tokens"] += client.usage.tokens - before[0]
        self.state["usage"]["cost_usd"] += client.usage.cost_usd - before[1]
        self.state["usage"]["calls"] += client.usage.calls - before[2]
        self.state["recommendations"][key] = _recommendation_to_dict(rec)
        if rec.requires_approval:
            item_id = self._new_item_id()
            self.state["review_items"][item_id] = {
                "item_id": item_id,
                "kind": ReviewKind.RECOMMENDATION_APPROVAL.value,
                "key": key,
                "cve_id": record.cve_id,
                "payload": {"recommendation": _recommendation_to_dict(rec)},
                "decision": None,
            }
            self.state["review_order"].append(item_id)
            self._move(key, FindingStage.AWAITING_REVIEW,
                       detail=f"approval required: {item_id}")
            self._trace("review", "parked", key=key, detail=item_id)
        else:
            self._move(key, FindingStage.RECOMMENDED, detail=rec.source.value)
            self._task_done()

    # -- review loop --------------------------------------------------------

    def pending_items(self) -> list[dict]:
        return [self.state["review_items"][item_id]
                for item_id in self.state["review_order"]
                if self.state["review_items"][item_id]["decision"] is None]

    def apply_review_decision(self, item_id: str, decision: dict) -> dict:
        """Apply one analyst decision and resume the parked finding.

        decision: {"kind": accept|override|approve|reject,
                   "vector": optional vector string (override only),
                   "analyst": analyst id}
        Re-applying the identical decision is a no-op; a conflicting
        second decision raises AlreadyDecided with the prior one.
        """
        item = self.state["review_items"].get(item_id)
        if item is None:
            raise UnknownItem(f"no review item {item_id}")
        incoming = {"kind": decision["kind"],
                    "vector": decision.get("vector"),
                    "analyst": decision.get("analyst", "unknown")}
        if item["decision"] is not None:
            prior = item["decision"]
            same = all(prior.get(k) == incoming.get(k)
                       for k in ("kind", "vector", "analyst"))
            if same:
                return item  # idempotent no-op
            raise AlreadyDecided(item_id, prior)

        kind = incoming["kind"]
        if item["kind"] == ReviewKind.PREDICTION_OVERRIDE.value:
            if kind not in ("accept", "override"):
                raise ValueError(f"{kind!r} is not a prediction decision")
            self._resolve_prediction(item, incoming)
        else:
            if kind not in ("approve", "reject"):
                raise ValueError(f"{kind!r} is not an approval decision")
            self._resolve_approval(item, incoming)

        item["decision"] = {**incoming, "decided_at": time.time()}
        self._trace("review", "decided", key=item["key"],
                    detail=f"{item_id}: {kind}")
        if self.state["t_end"] is not None:
            self.state["t_end"] = time.time()
        self.journal()
        self.export()
        return item

    def _resolve_prediction(self, item: dict, decision: dict):
        key = item["key"]
        entry = self.state["predictions"][key]
        original = _prediction_from_dict(entry["prediction"])
        analyst = decision["analyst"]
        if decision["kind"] == "override":
            if not decision.get("vector"):
                raise ValueError("override decision needs a vector")
            vector = cvss.parse_vector(decision["vector"])  # invalid vectors raise
            prediction = Prediction(
                vector=vector,
                per_metric_confidence=original.per_metric_confidence,
                min_confidence=original.min_confidence,
            )
            note = f"vector overridden by analyst {analyst}"
        else:
            prediction = original
            note = f"prediction accepted by analyst {analyst}"
        entry["prediction"] = _prediction_to_dict(prediction)
        entry["resolved"] = True
        entry["resolution"] = decision["kind"]
        entry["analyst_note"] = note
        self._move(key, FindingStage.PREDICTED, detail=note)
        self._task_done()
        self._integrate_one(key, prediction, note)
        if key in self.state["records"]:
            self._replace_in_queue(key)
            if key in self.state["queue"]["prioritized"]:
                self._recommend_one(key, self.client())
            else:
                self._move(key, FindingStage.PRIORITIZED, detail="below threshold")
                self._task_done()

    def _replace_in_queue(self, key: str):
        records = {k: record_from_dict(payload)
                   for k, payload in self.state["records"].items()}
        policy = PrioritizationPolicy(threshold=self.config.priority_threshold)
        queue = prioritize(list(records.values()), policy)
        key_of = {record.cve_id: k for k, record in records.items()}
        self.state["queue"] = {
            "prioritized": [key_of[r.cve_id] for r in queue.prioritized],
            "below_threshold": [key_of[r.cve_id] for r in queue.below_threshold],
        }
        self._handoff(True)

    def _resolve_approval(self, item: dict, decision: dict):
        key = item["key"]
        rec = _recommendation_from_dict(self.state["recommendations"][key])
        if decision["kind"] == "approve":
            rec.approval_state = ApprovalState.APPROVED
        else:
            self._trace("review", "rejected_to_template", key=key)
            record = record_from_dict(self.state["records"][key])
            from .recommendation import DEFAULT_DESTRUCTIVE_VERBS, _template

            rec = _template(record, DEFAULT_DESTRUCTIVE_VERBS)
        self.state["recommendations"][key] = _recommendation_to_dict(rec)
        if rec.approval_state is ApprovalState.PENDING:
            # a destructive template fallback needs its own approval round
            item_id = self._new_item_id()
            self.state["review_items"][item_id] = {
                "item_id": item_id,
                "kind": ReviewKind.RECOMMENDATION_APPROVAL.value,
                "key": key,
                "cve_id": rec.cve_id,
                "payload": {"recommendation": _recommendation_to_dict(rec)},
                "decision": None,
            }
            self.state["review_order"].append(item_id)
            self._trace("review", "parked", key=key, detail=item_id)
        else:
            self._move(key, FindingStage.RECOMMENDED, detail=rec.source.value)
            self._task_done()

    # -- reporting ----------------------------------------------------------

    def counts(self) -> StageCounts:
        findings = self.state["findings"]
        assessed = self.state["assessed"]
        predictions = self.state["predictions"]
        quarantined = self.state["quarantined"]
        recs = self.state["recommendations"]

        unique_cves = sum(1 for f in findings.values() if f["cve_id"])
        nvd_hits = sum(1 for a in assessed.values() if a["nvd"] is not None)
        euvd_hits = sum(1 for a in assessed.values() if a["euvd"] is not None)
        needs = sum(1 for a in assessed.values()
                    if a["status"] == AssessmentStatus.NEEDS_PREDICTION.value)
        predicted = sum(1 for p in predictions.values() if p["resolved"])
        failed = sum(1 for q in quarantined.values() if q["stage"] == "prediction")
        final_recs = {k: r for k, r in recs.items()
                      if r["approval_state"] != ApprovalState.PENDING.value}
        rec_cisa = sum(1 for r in final_recs.values()
                       if r["source"] == RecommendationSource.CISA_KEV.value)
        return StageCounts(
            raw_detection=self.state["raw_count"],
            unique_cves=unique_cves,
            nvd_hits=nvd_hits,
            euvd_hits=euvd_hits,
            needs_prediction=needs,
            predicted=predicted,
            prediction_failed=failed,
            integrated=len(self.state["records"]),
            with_cvss=len(self.state["records"]),
            prioritized=len(self.state["queue"]["prioritized"]),
            below_threshold=len(self.state["queue"]["below_threshold"]),
            rec_cisa=rec_cisa,
            rec_llm=len(final_recs) - rec_cisa,
            rec_total=len(final_recs),
        )

    def report(self) -> ScenarioReport:
        counts = self.counts()
        pending = len(self.pending_items())
        status = "partial" if pending else "complete"
        manifest = self.state["manifest"]
        manifest_digest = hashlib.sha256(
            json.dumps(manifest, sort_keys=True).encode()).hexdigest()

        t_end = self.state["t_end"] or time.time()
        usage = self.state["usage"]
        handoffs = self.state["handoffs"]
        costs = RunCosts(
            t_start=self.state["t_start"], t_end=t_end,
            total_cost_usd=usage["cost_usd"], total_tokens=usage["tokens"],
            successful_tasks=self.state["tasks"],
            successful_handoffs=handoffs["successful"],
            expected_handoffs=handoffs["expected"],
        )
        computed = workflow_metrics(costs)

        def plain(value):
            return "undefined" if value is UNDEFINED else value

        workflow = {
            "task_completion_seconds": computed.task_completion_seconds,
            "successful_tasks": costs.successful_tasks,
            "total_tokens": costs.total_tokens,
            "total_cost_usd": costs.total_cost_usd,
            "cost_efficiency_tasks_per_usd": plain(computed.cost_efficiency_tasks_per_usd),
            "token_consumption_per_task": plain(computed.token_consumption_per_task),
            "cooperation_pct": plain(computed.cooperation_pct),
        }

        reductions = {}
        if counts.raw_detection:
            reductions["raw_to_unique"] = alert_reduction(
                counts.raw_detection, counts.unique_cves)
            reductions["raw_to_prioritized"] = alert_reduction(
                counts.raw_detection, counts.prioritized)
        if counts.unique_cves:
            reductions["unique_to_prioritized"] = alert_reduction(
                counts.unique_cves, counts.prioritized)

        problems = funnel_check(counts) if status == "complete" else []
        return ScenarioReport(
            run_id=self.state["run_id"],
            status=status,
            counts=counts,
            manifest=manifest,
            manifest_digest=manifest_digest,
            workflow=workflow,
            reductions=reductions,
            pending_reviews=pending,
            funnel_problems=problems,
            out_dir=str(self.out_dir),
        )

    def export(self) -> None:
        """Deterministic output files: records, queue, recommendations, counts."""
        records = [record_from_dict(self.state["records"][key])
                   for key in sorted(self.state["records"])]
        write_records(records, self.out_dir / "records.jsonl")

        queue_view = {
            "prioritized": [self.state["records"][k]["cve_id"]
                            for k in self.state["queue"]["prioritized"]],
            "below_threshold": [self.state["records"][k]["cve_id"]
                                for k in self.state["queue"]["below_threshold"]],
        }
        (self.out_dir / "queue.json").write_text(json.dumps(queue_view, indent=1))

        with open(self.out_dir / "recommendations.jsonl", "w") as handle:
            for key in sorted(self.state["recommendations"]):
                handle.write(json.dumps(self.state["recommendations"][key],
                                        sort_keys=True) + "\n")

        (self.out_dir / "counts.json").write_text(
            json.dumps(self.counts().as_dict(), indent=1, sort_keys=True))
        (self.out_dir / "report.json").write_text(
            json.dumps(self.report().as_dict(), indent=1, sort_keys=True))
        self.emit_trace()

    def emit_trace(self) -> list[dict]:
        events = list(self.state["trace"])
        with open(self.out_dir / "trace.jsonl", "w") as handle:
            for event in events:
                handle.write(json.dumps(event, sort_keys=True) + "\n")
        return events


def run_scenario(config: RunConfig) -> ScenarioReport:
    """Drive one end-to-end scenario (creating or resuming the run dir)."""
    run = PipelineRun.create(config)
    return run.execute()


def route_after_prediction(prediction: Prediction, threshold: float) -> Route:
    """Routing rule between prediction and integration."""
    if gate(prediction, threshold) is GateDecision.ACCEPT:
        return Route.CONTINUE_TO_INTEGRATION
    return Route.PARK_FOR_REVIEW
