"""Build the frozen CVSS score corpus from the oracle.

Run once; the output (data/cvss_corpus.json) is committed and the
implementation is tested against it. Regenerate only if the sampling
scheme changes.

    python tests/make_cvss_corpus.py
"""

import json
import random
from pathlib import Path

import cvss_oracle

SEED = 20260810
SAMPLE_SIZE = 300

# Hand-checked anchors: the canonical critical vector and an S:C case.
ANCHORS = [
    "CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H",
    "CVSS:3.1/AV:L/AC:H/PR:L/UI:R/S:C/C:L/I:L/A:N",
    "CVSS:3.1/AV:P/AC:H/PR:H/UI:R/S:U/C:N/I:N/A:N",
]


def main() -> None:
    rng = random.Random(SEED)
    everything = [cvss_oracle.vector_string(m) for m in cvss_oracle.all_vectors()]
    sample = rng.sample(everything, SAMPLE_SIZE)
    for anchor in ANCHORS:
        if anchor not in sample:
            sample.append(anchor)

    corpus = [
        {"vector": v, "score": cvss_oracle.base_score_from_string(v)}
        for v in sorted(sample)
    ]
    out = Path(__file__).parent / "data" / "cvss_corpus.json"
    out.write_text(json.dumps(corpus, indent=1) + "\n")
    print(f"wrote {len(corpus)} vectors to {out}")


if __name__ == "__main__":
    main()
