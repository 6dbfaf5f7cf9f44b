"""Provenance-tracked remediation advice.

KEV first: a CISA-listed CVE gets the catalog's required action
verbatim. Otherwise a pluggable text-generation client produces advice
that must quote something from the supplied context (a cheap lexical
hallucination guard); ungrounded output is rejected and the
deterministic template takes over. Destructive wording always demands
human approval.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import requests

from .advisories import KevEntry
from .integration import VulnerabilityRecord

logger = logging.getLogger(__name__)

DEFAULT_DESTRUCTIVE_VERBS = frozenset({
    "delete", "remove", "drop", "disable", "shutdown", "restart", "reboot",
    "terminate", "kill", "format", "purge", "wipe", "uninstall", "revoke",
})

DEFAULT_TEMPERATURE = 0.1
DEFAULT_MAX_TOKENS = 3000


class RecommendationSource(str, Enum):
    CISA_KEV = "cisa_kev"
    GENERATED = "generated"
    TEMPLATE = "template"


class ApprovalState(str, Enum):
    PENDING = "pending"
    APPROVED = "approved"
    REJECTED = "rejected"


class UngroundedGeneration(Exception):
    pass


@dataclass(frozen=True, slots=True)
class GroundingRef:
    source_id: str
    quoted: str


@dataclass(slots=True)
class Recommendation:
    cve_id: str
    action: str
    source: RecommendationSource
    grounding_refs: tuple[GroundingRef, ...]
    requires_approval: bool
    approval_state: ApprovalState


@dataclass(frozen=True, slots=True)
class GenerationResult:
    text: str
    tokens: int
    cost_usd: float


@dataclass(slots=True)
class ClientUsage:
    calls: int = 0
    tokens: int = 0
    cost_usd: float = 0.0

    def add(self, result: GenerationResult) -> None:
        self.calls += 1
        self.tokens += result.tokens
        self.cost_usd += result.cost_usd


class GenerationClient:
    """Pluggable text generation. mode is one of live, replay, disabled."""

    mode = "disabled"

    def __init__(self):
        self.usage = ClientUsage()

    def generate(self, context: str) -> GenerationResult | None:
        """Return generated text, or None to force the template fallback."""
        raise NotImplementedError


class DisabledClient(GenerationClient):
    mode = "disabled"

    def generate(self, context: str) -> GenerationResult | None:
        return None


def context_digest(context: str) -> str:
    return hashlib.sha256(context.encode()).hexdigest()


class ReplayClient(GenerationClient):
    """Deterministic playback of a recorded exchange log.

    A context absent from the log falls back to the template path so
    replay runs stay total; the miss is logged.
    """

    mode = "replay"

    def __init__(self, log_path):
        super().__init__()
        self.log_path = Path(log_path)
        self._responses: dict[str, GenerationResult] = {}
        if self.log_path.exists():
            for line in self.log_path.read_text().splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                self._responses[row["context_digest"]] = GenerationResult(
                    text=row["response"], tokens=row["tokens"], cost_usd=row["cost_usd"])

    def generate(self, context: str) -> GenerationResult | None:
        result = self._responses.get(context_digest(context))
        if result is None:
            logger.info("replay miss for context digest %s; falling back to template",
                        context_digest(context)[:12])
            return None
        self.usage.add(result)
        return result


@dataclass(slots=True)
class LiveClientConfig:
    endpoint: str
    model: str
    api_key_env: str = "GENERATION_API_KEY"
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    cost_per_1k_tokens_usd: float = 0.0
    timeout_s: float = 60.0


class LiveClient(GenerationClient):
    """HTTP chat-completion client that records every exchange.

    The append-only replay log makes any live run repeatable offline via
    ReplayClient.
    """

    mode = "live"

    def __init__(self, config: LiveClientConfig, log_path,
                 session: requests.Session | None = None):
        super().__init__()
        self.config = config
        self.log_path = Path(log_path)
        self.session = session or requests.Session()

    def generate(self, context: str) -> GenerationResult | None:
        import os

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": [{"role": "user", "content": context}],
        }
        response = self.session.post(self.config.endpoint, json=payload,
                                     headers=headers, timeout=self.config.timeout_s)
        response.raise_for_status()
        body = response.json()
        text = body["choices"][0]["message"]["content"]
        tokens = int(body.get("usage", {}).get("total_tokens", 0))
        result = GenerationResult(
            text=text, tokens=tokens,
            cost_usd=tokens / 1000.0 * self.config.cost_per_1k_tokens_usd)
        self.usage.add(result)
        with open(self.log_path, "a") as handle:
            handle.write(json.dumps({
                "context_digest": context_digest(context),
                "response": result.text,
                "tokens": result.tokens,
                "cost_usd": result.cost_usd,
            }) + "\n")
        return result


def build_context(record: VulnerabilityRecord) -> str:
    """Deterministic prompt context; also the grounding universe."""
    packages = sorted(record.affected_packages, key=lambda p: (p[0], p[1], p[2] or ""))
    lines = [
        f"cve: {record.cve_id}",
        f"severity: {record.severity.label} ({record.base_score})",
        f"description: {record.description}",
    ]
    for name, version, fixed in packages:
        line = f"package: {name} {version}".rstrip()
        if fixed:
            line += f" (fixed in {fixed})"
        lines.append(line)
    if record.kev_listed:
        lines.append("listed in the CISA KEV catalog")
    lines.append("Write one concrete remediation action for this vulnerability.")
    return "\n".join(lines)


def _quotables(record: VulnerabilityRecord) -> list[tuple[str, str]]:
    quotes = [(f"record:{record.cve_id}", record.cve_id)]
    for name, _, fixed in sorted(record.affected_packages,
                                 key=lambda p: (p[0], p[1], p[2] or "")):
        if name:
            quotes.append((f"record:{record.cve_id}/package", name))
        if fixed:
            quotes.append((f"record:{record.cve_id}/fixed_version", fixed))
    return quotes


def _grounding(record: VulnerabilityRecord, text: str) -> tuple[GroundingRef, ...]:
    lowered = text.lower()
    refs = tuple(GroundingRef(source_id, quoted)
                 for source_id, quoted in _quotables(record)
                 if quoted.lower() in lowered)
    return refs


def requires_approval(action: str, destructive_verbs=DEFAULT_DESTRUCTIVE_VERBS) -> bool:
    words = set(re.findall(r"[a-z]+", action.lower()))
    return bool(words & destructive_verbs)


def _finalize(cve_id, action, source, refs, destructive_verbs) -> Recommendation:
    needs_approval = requires_approval(action, destructive_verbs)
    return Recommendation(
        cve_id=cve_id,
        action=action,
        source=source,
        grounding_refs=refs,
        requires_approval=needs_approval,
        # non-destructive advice is final on creation
        approval_state=ApprovalState.PENDING if needs_approval else ApprovalState.APPROVED,
    )


def _template(record: VulnerabilityRecord, destructive_verbs) -> Recommendation:
    fixable = sorted(
        (p for p in record.affected_packages if p[2]),
        key=lambda p: (p[0], p[1], p[2]),
    )
    if fixable:
        name, version, fixed = fixable[0]
        action = f"Upgrade {name} from {version} to {fixed}."
        refs = (GroundingRef(f"record:{record.cve_id}/package", name),
                GroundingRef(f"record:{record.cve_id}/fixed_version", fixed))
    else:
        source = record.score_provenance.value
        excerpt = record.description[:160]
        action = (f"Review the {record.cve_id} advisory ({source} scored "
                  f"{record.base_score}) and apply the vendor mitigation: {excerpt}")
        refs = (GroundingRef(f"record:{record.cve_id}", record.cve_id),
                GroundingRef(f"{source}:{record.cve_id}/description", excerpt))
    return _finalize(record.cve_id, action, RecommendationSource.TEMPLATE,
                     refs, destructive_verbs)


def _generate_grounded(record: VulnerabilityRecord, client: GenerationClient,
                       destructive_verbs) -> Recommendation | None:
    result = client.generate(build_context(record))
    if result is None:
        return None
    refs = _grounding(record, result.text)
    if not refs:
        raise UngroundedGeneration(
            f"{record.cve_id}: generated advice cites nothing from its context")
    return _finalize(record.cve_id, result.text,
                     RecommendationSource.GENERATED, refs, destructive_verbs)


def recommend(record: VulnerabilityRecord, kev: KevEntry | None,
              client: GenerationClient,
              destructive_verbs=DEFAULT_DESTRUCTIVE_VERBS) -> Recommendation:
    """Produce exactly one grounded recommendation for a validated record."""
    if kev is not None:
        refs = (GroundingRef(f"kev:{kev.cve_id}/required_action", kev.required_action),)
        return _finalize(record.cve_id, kev.required_action,
                         RecommendationSource.CISA_KEV, refs, destructive_verbs)

    try:
        generated = _generate_grounded(record, client, destructive_verbs)
    except UngroundedGeneration as exc:
        logger.warning("%s; falling back to template", exc)
        generated = None
    if generated is not None:
        return generated
    return _template(record, destructive_verbs)
