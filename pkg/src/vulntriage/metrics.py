"""Evaluation quantities: classification metrics, workflow metrics, funnels.

Ratios with a zero denominator are reported as the typed UNDEFINED
sentinel, never silently coerced to 0 or 100 — comparative tables must
not fabricate extremes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from decimal import ROUND_HALF_UP, Decimal


class InvalidCounts(ValueError):
    pass


class _Undefined:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "undefined"

    def __bool__(self):
        return False


UNDEFINED = _Undefined()

Ratio = float | _Undefined


def _ratio(numerator: float, denominator: float) -> Ratio:
    if denominator == 0:
        return UNDEFINED
    return numerator / denominator


@dataclass(frozen=True, slots=True)
class ClassificationCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise InvalidCounts(f"{name} must be non-negative")


@dataclass(frozen=True, slots=True)
class ClassificationMetrics:
    accuracy: Ratio
    precision: Ratio
    recall: Ratio
    f1: Ratio


def classification_metrics(c: ClassificationCounts) -> ClassificationMetrics:
    accuracy = _ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    if precision is UNDEFINED or recall is UNDEFINED or precision + recall == 0:
        f1 = UNDEFINED
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return ClassificationMetrics(accuracy, precision, recall, f1)


@dataclass(frozen=True, slots=True)
class RunCosts:
    t_start: float
    t_end: float
    total_cost_usd: float
    total_tokens: int
    successful_tasks: int
    successful_handoffs: int
    expected_handoffs: int

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise InvalidCounts("t_end precedes t_start")
        if self.total_cost_usd < 0 or self.total_tokens < 0 or self.successful_tasks < 0:
            raise InvalidCounts("costs and task counts must be non-negative")
        if self.successful_handoffs > self.expected_handoffs:
            raise InvalidCounts("successful handoffs exceed expected handoffs")


@dataclass(frozen=True, slots=True)
class WorkflowMetrics:
    task_completion_seconds: float
    cost_efficiency_tasks_per_usd: Ratio
    token_consumption_per_task: Ratio
    cooperation_pct: Ratio


def workflow_metrics(r: RunCosts) -> WorkflowMetrics:
    return WorkflowMetrics(
        task_completion_seconds=r.t_end - r.t_start,
        cost_efficiency_tasks_per_usd=_ratio(r.successful_tasks, r.total_cost_usd),
        token_consumption_per_task=_ratio(r.total_tokens, r.successful_tasks),
        cooperation_pct=(
            UNDEFINED if r.expected_handoffs == 0
            else 100.0 * r.successful_handoffs / r.expected_handoffs
        ),
    )


def alert_reduction(raw: int, final: int) -> float:
    """Percentage shrinkage from raw detections to the final queue, one decimal."""
    if raw <= 0:
        raise InvalidCounts("raw count must be positive")
    if final < 0 or final > raw:
        raise InvalidCounts("final count must be in [0, raw]")
    pct = Decimal(100) * (Decimal(raw) - Decimal(final)) / Decimal(raw)
    return float(pct.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True, slots=True)
class StageCounts:
    """Per-stage funnel counters for one scenario run."""

    raw_detection: int = 0
    unique_cves: int = 0
    nvd_hits: int = 0
    euvd_hits: int = 0
    needs_prediction: int = 0
    predicted: int = 0
    prediction_failed: int = 0
    integrated: int = 0
    with_cvss: int = 0
    prioritized: int = 0
    below_threshold: int = 0
    rec_cisa: int = 0
    rec_llm: int = 0
    rec_total: int = 0

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def funnel_check(s: StageCounts) -> list[str]:
    """Run-level self-audit; empty list means the funnel is consistent.

    Integration only emits records for relevant, non-quarantined
    findings, so the prioritization partition must cover the integrated
    set exactly.
    """
    problems = []
    for name, value in s.as_dict().items():
        if value < 0:
            problems.append(f"{name} is negative")
    if s.unique_cves > s.raw_detection:
        problems.append("unique_cves exceeds raw_detection")
    if s.nvd_hits > s.unique_cves:
        problems.append("nvd_hits exceeds unique_cves")
    if s.euvd_hits > s.unique_cves:
        problems.append("euvd_hits exceeds unique_cves")
    if s.predicted + s.prediction_failed != s.needs_prediction:
        problems.append("predicted + prediction_failed != needs_prediction")
    if s.integrated > s.unique_cves:
        problems.append("integrated exceeds unique_cves")
    if s.with_cvss > s.integrated:
        problems.append("with_cvss exceeds integrated")
    if s.prioritized + s.below_threshold != s.integrated:
        problems.append("prioritized + below_threshold != integrated")
    if s.rec_cisa + s.rec_llm != s.rec_total:
        problems.append("rec_cisa + rec_llm != rec_total")
    if s.rec_total != s.prioritized:
        problems.append("rec_total != prioritized")
    return problems
