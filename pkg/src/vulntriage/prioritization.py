"""Threshold filtering and deterministic ordering of validated records.

KEV listing is analyst-facing enrichment: it breaks ordering ties but
never moves a record across the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .integration import VulnerabilityRecord

DEFAULT_THRESHOLD = 7.0


@dataclass(frozen=True, slots=True)
class PrioritizationPolicy:
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 10.0:
            raise ValueError(f"threshold {self.threshold} outside [0.0, 10.0]")


@dataclass(slots=True)
class PrioritizedQueue:
    prioritized: list[VulnerabilityRecord] = field(default_factory=list)
    below_threshold: list[VulnerabilityRecord] = field(default_factory=list)


def _order(record: VulnerabilityRecord):
    return (-record.base_score, not record.kev_listed, record.cve_id)


def prioritize(records: list[VulnerabilityRecord],
               policy: PrioritizationPolicy) -> PrioritizedQueue:
    """Partition records at the threshold (inclusive: score == threshold
    lands in the actionable queue) and order each side by score
    descending, KEV-listed first, then CVE id."""
    queue = PrioritizedQueue()
    for record in records:
        if record.base_score >= policy.threshold:
            queue.prioritized.append(record)
        else:
            queue.below_threshold.append(record)
    queue.prioritized.sort(key=_order)
    queue.below_threshold.sort(key=_order)
    return queue
