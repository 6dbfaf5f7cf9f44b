"""HTTP+JSON review API over a directory of runs.

Serves run reports, the pending review queue, decision submission, and
score previews. Decisions are applied atomically under a store-wide
lock and are idempotent; every response carries the owning run's
manifest digest for audit.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import cvss
from .orchestrator import STATE_FILE, AlreadyDecided, PipelineRun, UnknownItem


class DecisionBody(BaseModel):
    kind: str
    vector: str | None = None
    analyst: str | None = None


class RunStore:
    """Run directories under one root, each journaled by the orchestrator."""

    def __init__(self, runs_root):
        self.root = Path(runs_root)
        self.lock = threading.Lock()

    def run_dirs(self) -> list[Path]:
        if not self.root.exists():
            return []
        return sorted(p for p in self.root.iterdir() if (p / STATE_FILE).exists())

    def load(self, run_id: str) -> PipelineRun:
        run_dir = self.root / run_id
        if (run_dir / STATE_FILE).exists():
            return PipelineRun.resume(run_dir)
        # directory names are a CLI convention, not a contract
        for candidate in self.run_dirs():
            run = PipelineRun.resume(candidate)
            if run.state["run_id"] == run_id:
                return run
        raise UnknownItem(f"no run {run_id}")

    def find_item(self, item_id: str) -> tuple[PipelineRun, dict]:
        for run_dir in self.run_dirs():
            run = PipelineRun.resume(run_dir)
            item = run.state["review_items"].get(item_id)
            if item is not None:
                return run, item
        raise UnknownItem(f"no review item {item_id}")

    def pending(self) -> list[dict]:
        items = []
        for run_dir in self.run_dirs():
            run = PipelineRun.resume(run_dir)
            digest = run.report().manifest_digest
            for item in run.pending_items():
                items.append({**item, "run_id": run.state["run_id"],
                              "manifest_digest": digest})
        return items


def _item_view(run: PipelineRun, item: dict) -> dict:
    return {**item, "run_id": run.state["run_id"],
            "manifest_digest": run.report().manifest_digest}


def create_app(runs_root) -> FastAPI:
    store = RunStore(runs_root)
    app = FastAPI(title="vulntriage review API")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    @app.get("/runs")
    def list_runs():
        runs = []
        for run_dir in store.run_dirs():
            report = PipelineRun.resume(run_dir).report()
            runs.append({"run_id": report.run_id, "status": report.status,
                         "pending_reviews": report.pending_reviews,
                         "manifest_digest": report.manifest_digest})
        return {"runs": runs}

    @app.get("/runs/{run_id}/report")
    def run_report(run_id: str):
        try:
            report = store.load(run_id).report()
        except UnknownItem as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return report.as_dict()

    @app.get("/review/pending")
    def review_pending():
        return {"items": store.pending()}

    @app.get("/review/{item_id}")
    def review_item(item_id: str):
        try:
            run, item = store.find_item(item_id)
        except UnknownItem as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return _item_view(run, item)

    @app.post("/review/{item_id}/decision")
    def review_decide(item_id: str, body: DecisionBody):
        with store.lock:
            try:
                run, _ = store.find_item(item_id)
                decision = {"kind": body.kind, "vector": body.vector,
                            "analyst": body.analyst or "unknown"}
                item = run.apply_review_decision(item_id, decision)
            except UnknownItem as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            except AlreadyDecided as exc:
                return_payload = {
                    "error": "already_decided",
                    "item_id": item_id,
                    "prior_decision": exc.prior,
                }
                raise HTTPException(status_code=409, detail=return_payload) from exc
            except (ValueError, cvss.VectorError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        return _item_view(run, item)

    @app.get("/score/{vector:path}")
    def score(vector: str):
        try:
            parsed = cvss.parse_vector(vector)
        except cvss.VectorError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        value = cvss.base_score(parsed)
        return {"vector": parsed.to_string(), "base_score": value,
                "severity": cvss.severity(value).label}

    return app
