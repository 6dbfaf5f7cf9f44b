"""CVSS v3.1 base vectors: parsing, serialization, scoring, severity bands.

The canonical vector string (``CVSS:3.1/AV:_/AC:_/PR:_/UI:_/S:_/C:_/I:_/A:_``)
is the wire and storage representation for vectors everywhere in this
package.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class VectorError(ValueError):
    """Base class for vector string problems."""


class MissingMetric(VectorError):
    pass


class UnknownMetricValue(VectorError):
    pass


class DuplicateMetric(VectorError):
    pass


class OutOfRange(ValueError):
    pass


PREFIX = "CVSS:3.1"

METRIC_ORDER = ("AV", "AC", "PR", "UI", "S", "C", "I", "A")

METRIC_VALUES = {
    "AV": ("N", "A", "L", "P"),
    "AC": ("L", "H"),
    "PR": ("N", "L", "H"),
    "UI": ("N", "R"),
    "S": ("U", "C"),
    "C": ("H", "L", "N"),
    "I": ("H", "L", "N"),
    "A": ("H", "L", "N"),
}

_AV_WEIGHT = {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2}
_AC_WEIGHT = {"L": 0.77, "H": 0.44}
_PR_WEIGHT = {
    # scope unchanged / scope changed
    "N": (0.85, 0.85),
    "L": (0.62, 0.68),
    "H": (0.27, 0.5),
}
_UI_WEIGHT = {"N": 0.85, "R": 0.62}
_IMPACT_WEIGHT = {"H": 0.56, "L": 0.22, "N": 0.0}

_EXPLOITABILITY_COEFF = 8.22


@dataclass(frozen=True, slots=True)
class CvssVector:
    """The eight CVSS v3.1 base metrics."""

    av: str
    ac: str
    pr: str
    ui: str
    s: str
    c: str
    i: str
    a: str

    def __post_init__(self):
        for metric, value in zip(METRIC_ORDER, self.values()):
            if value not in METRIC_VALUES[metric]:
                raise UnknownMetricValue(f"{metric}:{value} is not a valid CVSS v3.1 value")

    def values(self) -> tuple[str, ...]:
        return (self.av, self.ac, self.pr, self.ui, self.s, self.c, self.i, self.a)

    def as_dict(self) -> dict[str, str]:
        return dict(zip(METRIC_ORDER, self.values()))

    def to_string(self) -> str:
        """Canonical-ordered vector string with the CVSS:3.1 prefix."""
        body = "/".join(f"{m}:{v}" for m, v in zip(METRIC_ORDER, self.values()))
        return f"{PREFIX}/{body}"

    @classmethod
    def from_dict(cls, metrics: dict[str, str]) -> "CvssVector":
        missing = [m for m in METRIC_ORDER if m not in metrics]
        if missing:
            raise MissingMetric(f"missing metric(s): {', '.join(missing)}")
        return cls(*(metrics[m] for m in METRIC_ORDER))


def parse_vector(s: str) -> CvssVector:
    """Parse a vector string; prefix optional, metric order free."""
    body = s.strip()
    if body.upper().startswith("CVSS:3.1/"):
        body = body[len("CVSS:3.1/"):]
    elif body.upper().startswith("CVSS:"):
        # wrong version prefix is a malformed vector, not a missing metric
        raise UnknownMetricValue(f"unsupported CVSS prefix in {s!r}")

    seen: dict[str, str] = {}
    for part in body.split("/"):
        if not part:
            continue
        name, sep, value = part.partition(":")
        name = name.strip().upper()
        if not sep or name not in METRIC_VALUES:
            raise UnknownMetricValue(f"unknown metric {part!r}")
        value = value.strip().upper()
        if value not in METRIC_VALUES[name]:
            raise UnknownMetricValue(f"{name}:{value} is not a valid CVSS v3.1 value")
        if name in seen:
            raise DuplicateMetric(f"metric {name} given twice")
        seen[name] = value
    return CvssVector.from_dict(seen)


def serialize(v: CvssVector) -> str:
    return v.to_string()


def _roundup(value: float) -> float:
    # Integer-scaling workaround from the standard: score arithmetic in
    # binary floats can land a hair under the true decimal value, so
    # scale to 1e5, snap to the nearest integer, then ceil to one decimal.
    scaled = int(value * 100_000 + 0.5)
    whole, remainder = divmod(scaled, 10_000)
    if remainder == 0:
        return scaled / 100_000
    return (whole + 1) / 10.0


def base_score(v: CvssVector) -> float:
    """Base score in [0.0, 10.0], one decimal, per the v3.1 standard."""
    iss = 1.0 - (
        (1.0 - _IMPACT_WEIGHT[v.c])
        * (1.0 - _IMPACT_WEIGHT[v.i])
        * (1.0 - _IMPACT_WEIGHT[v.a])
    )
    scope_changed = v.s == "C"
    if scope_changed:
        impact = 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15
    else:
        impact = 6.42 * iss

    if impact <= 0:
        return 0.0

    exploitability = (
        _EXPLOITABILITY_COEFF
        * _AV_WEIGHT[v.av]
        * _AC_WEIGHT[v.ac]
        * _PR_WEIGHT[v.pr][1 if scope_changed else 0]
        * _UI_WEIGHT[v.ui]
    )
    raw = impact + exploitability
    if scope_changed:
        raw = 1.08 * raw
    return _roundup(min(raw, 10.0))


class SeverityBand(Enum):
    """Official CVSS v3.1 qualitative severity ratings."""

    NONE = ("None", 0.0, 0.0)
    LOW = ("Low", 0.1, 3.9)
    MEDIUM = ("Medium", 4.0, 6.9)
    HIGH = ("High", 7.0, 8.9)
    CRITICAL = ("Critical", 9.0, 10.0)

    def __init__(self, label: str, low: float, high: float):
        self.label = label
        self.low = low
        self.high = high


def severity(score: float) -> SeverityBand:
    """Map a one-decimal base score to its severity band."""
    if not 0.0 <= score <= 10.0:
        raise OutOfRange(f"score {score} outside [0.0, 10.0]")
    if score == 0.0:
        return SeverityBand.NONE
    if score < 4.0:
        return SeverityBand.LOW
    if score < 7.0:
        return SeverityBand.MEDIUM
    if score < 9.0:
        return SeverityBand.HIGH
    return SeverityBand.CRITICAL
