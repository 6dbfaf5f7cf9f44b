"""Independent CVSS v3.1 base-score oracle.

Direct transliteration of the first.org reference calculator
(cvsscalc31.js). Kept deliberately separate from the package
implementation: this module is the second route of the dual-route
check and must never import from vulntriage.
"""

import itertools
import math

WEIGHT = {
    "AV": {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2},
    "AC": {"H": 0.44, "L": 0.77},
    # PR weight depends on Scope
    "PR": {
        "U": {"N": 0.85, "L": 0.62, "H": 0.27},
        "C": {"N": 0.85, "L": 0.68, "H": 0.5},
    },
    "UI": {"N": 0.85, "R": 0.62},
    "S": {"U": 6.42, "C": 7.52},
    "C": {"N": 0.0, "L": 0.22, "H": 0.56},
    "I": {"N": 0.0, "L": 0.22, "H": 0.56},
    "A": {"N": 0.0, "L": 0.22, "H": 0.56},
}

EXPLOITABILITY_COEFFICIENT = 8.22
SCOPE_COEFFICIENT = 1.08

METRIC_VALUES = {
    "AV": "NALP",
    "AC": "LH",
    "PR": "NLH",
    "UI": "NR",
    "S": "UC",
    "C": "HLN",
    "I": "HLN",
    "A": "HLN",
}


def _js_round(x: float) -> int:
    # JS Math.round: half away from zero for positive input
    return math.floor(x + 0.5)


def round_up1(value: float) -> float:
    """Roundup() from the reference implementation, appendix A."""
    int_input = _js_round(value * 100000)
    if int_input % 10000 == 0:
        return int_input / 100000.0
    return (math.floor(int_input / 10000) + 1) / 10.0


def base_score(metrics: dict) -> float:
    """Base score per the reference calculateCVSSFromMetrics()."""
    av = WEIGHT["AV"][metrics["AV"]]
    ac = WEIGHT["AC"][metrics["AC"]]
    pr = WEIGHT["PR"][metrics["S"]][metrics["PR"]]
    ui = WEIGHT["UI"][metrics["UI"]]
    c = WEIGHT["C"][metrics["C"]]
    i = WEIGHT["I"][metrics["I"]]
    a = WEIGHT["A"][metrics["A"]]

    iss = 1 - ((1 - c) * (1 - i) * (1 - a))
    if metrics["S"] == "U":
        impact = WEIGHT["S"]["U"] * iss
    else:
        impact = WEIGHT["S"]["C"] * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15

    exploitability = EXPLOITABILITY_COEFFICIENT * av * ac * pr * ui

    if impact <= 0:
        return 0.0
    if metrics["S"] == "U":
        return round_up1(min(impact + exploitability, 10))
    return round_up1(min(SCOPE_COEFFICIENT * (impact + exploitability), 10))


def base_score_from_string(vector: str) -> float:
    metrics = {}
    for part in vector.removeprefix("CVSS:3.1/").split("/"):
        key, _, value = part.partition(":")
        metrics[key] = value
    return base_score(metrics)


def all_vectors():
    """Every one of the 2,592 valid base-metric combinations."""
    keys = list(METRIC_VALUES)
    for combo in itertools.product(*(METRIC_VALUES[k] for k in keys)):
        yield dict(zip(keys, combo))


def vector_string(metrics: dict) -> str:
    return "CVSS:3.1/" + "/".join(f"{k}:{metrics[k]}" for k in METRIC_VALUES)
