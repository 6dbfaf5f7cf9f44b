"""CVSS vector inference from description text, with confidence gating.

The baseline is a per-metric multinomial bag-of-words classifier:
deterministic, dependency-free, trainable at desk scale. Anything that
honors the same train/predict surface (e.g. a transformer backbone) can
be swapped in behind PredictorModel.

Posterior probabilities double as the confidence signal; the gate takes
the minimum across the eight metrics, since a single wrong metric is
enough to corrupt the score.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import warnings
from dataclasses import dataclass
from enum import Enum

from . import cvss
from .findings import normalize_description
from .metrics import UNDEFINED, ClassificationCounts, Ratio, classification_metrics

MODEL_FORMAT_VERSION = 1
MAX_TOKENS = 256
_SMOOTHING = 1.0


class EmptyCorpus(ValueError):
    pass


class EmptyDescription(ValueError):
    pass


class DegenerateLabel(UserWarning):
    """A metric with a single observed value trains a constant classifier."""


@dataclass(frozen=True, slots=True)
class LabeledRecord:
    cve_id: str
    description: str
    vector: cvss.CvssVector

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError(f"{self.cve_id}: description must be non-empty")


@dataclass(slots=True)
class DatasetSplit:
    train: list[LabeledRecord]
    validation: list[LabeledRecord]
    test: list[LabeledRecord]
    seed: int


def tokenize(text: str) -> list[str]:
    return normalize_description(text).split()[:MAX_TOKENS]


def prepare_dataset(records: list[LabeledRecord], seed: int) -> DatasetSplit:
    """CVE-level 80/10/10 split, deterministic for a fixed seed.

    Duplicate cve_ids are collapsed (first occurrence wins) before
    assignment, and validation/test each take ceil(0.1 * N) records so
    the split sizes match plain-count bookkeeping exactly.
    """
    unique: dict[str, LabeledRecord] = {}
    for record in records:
        unique.setdefault(record.cve_id, record)
    if not unique:
        raise EmptyCorpus("no records to split")

    ordered = [unique[cve] for cve in sorted(unique)]
    random.Random(seed).shuffle(ordered)

    n = len(ordered)
    n_eval = math.ceil(0.1 * n)
    test = ordered[:n_eval]
    validation = ordered[n_eval:2 * n_eval]
    train = ordered[2 * n_eval:]
    return DatasetSplit(train=train, validation=validation, test=test, seed=seed)


@dataclass(slots=True)
class _MetricClassifier:
    """Multinomial counts for one CVSS metric."""

    values: tuple[str, ...]
    class_counts: dict[str, int]
    token_counts: dict[str, dict[str, int]]
    token_totals: dict[str, int]

    def posteriors(self, tokens: list[str], vocab_size: int,
                   total_docs: int) -> dict[str, float]:
        """Normalized posterior over the metric's legal values.

        Values never observed in training get probability 0: a metric
        trained on a single value must stay a constant classifier
        instead of losing to smoothing asymmetry on unseen tokens.
        """
        observed = [v for v in self.values if self.class_counts.get(v, 0) > 0]
        scores = {}
        for value in observed:
            log_prior = math.log(self.class_counts[value] / total_docs)
            counts = self.token_counts.get(value, {})
            denom = self.token_totals.get(value, 0) + _SMOOTHING * (vocab_size + 1)
            score = log_prior
            for token in tokens:
                score += math.log((counts.get(token, 0) + _SMOOTHING) / denom)
            scores[value] = score
        peak = max(scores.values())
        total = sum(math.exp(s - peak) for s in scores.values())
        posterior = {v: 0.0 for v in self.values}
        posterior.update({v: math.exp(s - peak) / total for v, s in scores.items()})
        return posterior


@dataclass(slots=True)
class PredictorModel:
    classifiers: dict[str, _MetricClassifier]
    vocabulary: set[str]
    total_docs: int
    seed: int
    corpus_digest: str
    format_version: int = MODEL_FORMAT_VERSION

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def to_json(self) -> str:
        payload = {
            "format_version": self.format_version,
            "seed": self.seed,
            "corpus_digest": self.corpus_digest,
            "total_docs": self.total_docs,
            "vocabulary": sorted(self.vocabulary),
            "classifiers": {
                metric: {
                    "values": list(clf.values),
                    "class_counts": {v: clf.class_counts[v]
                                     for v in sorted(clf.class_counts)},
                    "token_counts": {v: dict(sorted(clf.token_counts[v].items()))
                                     for v in sorted(clf.token_counts)},
                    "token_totals": {v: clf.token_totals[v]
                                     for v in sorted(clf.token_totals)},
                }
                for metric, clf in self.classifiers.items()
            },
        }
        return json.dumps(payload, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as handle:
            handle.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PredictorModel":
        with open(path) as handle:
            payload = json.load(handle)
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {payload.get('format_version')!r}")
        classifiers = {
            metric: _MetricClassifier(
                values=tuple(spec["values"]),
                class_counts=spec["class_counts"],
                token_counts=spec["token_counts"],
                token_totals=spec["token_totals"],
            )
            for metric, spec in payload["classifiers"].items()
        }
        return cls(classifiers=classifiers, vocabulary=set(payload["vocabulary"]),
                   total_docs=payload["total_docs"], seed=payload["seed"],
                   corpus_digest=payload["corpus_digest"])


@dataclass(frozen=True, slots=True)
class Prediction:
    vector: cvss.CvssVector
    per_metric_confidence: dict[str, float]
    min_confidence: float


def corpus_digest(records: list[LabeledRecord]) -> str:
    hasher = hashlib.sha256()
    for record in sorted(records, key=lambda r: r.cve_id):
        line = f"{record.cve_id}\t{record.description}\t{record.vector.to_string()}\n"
        hasher.update(line.encode())
    return hasher.hexdigest()


def train(records: list[LabeledRecord], seed: int = 0) -> PredictorModel:
    """Fit the eight per-metric classifiers.

    Deterministic given the corpus and seed; metrics with only one
    observed value emit a DegenerateLabel warning and train a constant
    classifier.
    """
    if not records:
        raise EmptyCorpus("cannot train on an empty corpus")

    vocabulary: set[str] = set()
    classifiers: dict[str, _MetricClassifier] = {}
    tokenized = [(tokenize(r.description), r.vector.as_dict()) for r in records]
    for tokens, _ in tokenized:
        vocabulary.update(tokens)

    for metric in cvss.METRIC_ORDER:
        class_counts: dict[str, int] = {}
        token_counts: dict[str, dict[str, int]] = {}
        token_totals: dict[str, int] = {}
        for tokens, labels in tokenized:
            value = labels[metric]
            class_counts[value] = class_counts.get(value, 0) + 1
            bucket = token_counts.setdefault(value, {})
            for token in tokens:
                bucket[token] = bucket.get(token, 0) + 1
            token_totals[value] = token_totals.get(value, 0) + len(tokens)
        if len(class_counts) < 2:
            only = next(iter(class_counts))
            warnings.warn(f"metric {metric} saw only value {only!r}; "
                          "classifier is constant", DegenerateLabel)
        classifiers[metric] = _MetricClassifier(
            values=cvss.METRIC_VALUES[metric],
            class_counts=class_counts,
            token_counts=token_counts,
            token_totals=token_totals,
        )

    return PredictorModel(
        classifiers=classifiers,
        vocabulary=vocabulary,
        total_docs=len(records),
        seed=seed,
        corpus_digest=corpus_digest(records),
    )


def predict(model: PredictorModel, description: str) -> Prediction:
    """Predict all eight metrics for one description, with confidences."""
    tokens = tokenize(description)
    if not tokens:
        raise EmptyDescription("description is empty after normalization")

    chosen: dict[str, str] = {}
    confidence: dict[str, float] = {}
    vocab_size = len(model.vocabulary)
    for metric in cvss.METRIC_ORDER:
        posterior = model.classifiers[metric].posteriors(
            tokens, vocab_size, model.total_docs)
        # deterministic argmax: ties resolve in declared value order
        best = max(model.classifiers[metric].values, key=lambda v: posterior[v])
        chosen[metric] = best
        confidence[metric] = posterior[best]

    return Prediction(
        vector=cvss.CvssVector.from_dict(chosen),
        per_metric_confidence=confidence,
        min_confidence=min(confidence.values()),
    )


class GateDecision(str, Enum):
    ACCEPT = "accept"
    FLAG_FOR_REVIEW = "flag_for_review"


def gate(p: Prediction, threshold: float) -> GateDecision:
    """Accept iff the weakest per-metric confidence clears the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    if p.min_confidence >= threshold:
        return GateDecision.ACCEPT
    return GateDecision.FLAG_FOR_REVIEW


@dataclass(frozen=True, slots=True)
class MetricScores:
    accuracy: Ratio
    precision: Ratio
    recall: Ratio
    f1: Ratio


@dataclass(slots=True)
class EvaluationReport:
    """Per-metric scores in AV..A order plus their mean as 'overall'."""

    per_metric: dict[str, MetricScores]
    overall: MetricScores

    def rows(self) -> list[tuple[str, MetricScores]]:
        ordered = [(m, self.per_metric[m]) for m in cvss.METRIC_ORDER]
        ordered.append(("Overall", self.overall))
        return ordered


def _macro(values):
    defined = [v for v in values if v is not UNDEFINED]
    if not defined:
        return UNDEFINED
    return sum(defined) / len(defined)


def evaluate(model: PredictorModel, records: list[LabeledRecord]) -> EvaluationReport:
    """Accuracy plus macro-averaged precision/recall/F1 for each metric.

    Macro averages run over classes with test support; a class's F1
    degrades to 0.0 when precision and recall are both zero.
    """
    if not records:
        raise EmptyCorpus("cannot evaluate on an empty test set")

    predictions = [predict(model, r.description).vector.as_dict() for r in records]
    truths = [r.vector.as_dict() for r in records]

    per_metric: dict[str, MetricScores] = {}
    for metric in cvss.METRIC_ORDER:
        truth_col = [t[metric] for t in truths]
        pred_col = [p[metric] for p in predictions]
        hits = sum(t == p for t, p in zip(truth_col, pred_col))
        accuracy = hits / len(truth_col)

        precisions, recalls, f1s = [], [], []
        for value in cvss.METRIC_VALUES[metric]:
            support = truth_col.count(value)
            if support == 0:
                continue
            tp = sum(t == value and p == value for t, p in zip(truth_col, pred_col))
            fp = sum(t != value and p == value for t, p in zip(truth_col, pred_col))
            fn = support - tp
            tn = len(truth_col) - tp - fp - fn
            scores = classification_metrics(ClassificationCounts(tp, tn, fp, fn))
            precisions.append(0.0 if scores.precision is UNDEFINED else scores.precision)
            recalls.append(0.0 if scores.recall is UNDEFINED else scores.recall)
            f1s.append(0.0 if scores.f1 is UNDEFINED else scores.f1)
        per_metric[metric] = MetricScores(
            accuracy=accuracy,
            precision=_macro(precisions),
            recall=_macro(recalls),
            f1=_macro(f1s),
        )

    overall = MetricScores(
        accuracy=_macro([per_metric[m].accuracy for m in cvss.METRIC_ORDER]),
        precision=_macro([per_metric[m].precision for m in cvss.METRIC_ORDER]),
        recall=_macro([per_metric[m].recall for m in cvss.METRIC_ORDER]),
        f1=_macro([per_metric[m].f1 for m in cvss.METRIC_ORDER]),
    )
    return EvaluationReport(per_metric=per_metric, overall=overall)


def save_dataset(records: list[LabeledRecord], path) -> None:
    """Line-delimited records of (cve_id, description, vector string)."""
    with open(path, "w") as handle:
        for record in records:
            handle.write(json.dumps({
                "cve_id": record.cve_id,
                "description": record.description,
                "vector": record.vector.to_string(),
            }) + "\n")


def load_dataset(path) -> list[LabeledRecord]:
    records = []
    with open(path) as handle:
        for line in handle:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(LabeledRecord(
                cve_id=row["cve_id"],
                description=row["description"],
                vector=cvss.parse_vector(row["vector"]),
            ))
    return records
