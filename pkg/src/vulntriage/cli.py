"""Command-line interface.

Subcommands: run, review list/decide, report, train-predictor, score,
serve, make-fixture.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import cvss
from .orchestrator import (
    AlreadyDecided,
    ConfigInvalid,
    PipelineRun,
    RunConfig,
    UnknownItem,
)
from .predictor import load_dataset, prepare_dataset, train

DEFAULT_RUNS_ROOT = "runs"

FUNNEL_ROWS = (
    ("Raw detection", "raw_detection"),
    ("Unique CVEs", "unique_cves"),
    ("NVD", "nvd_hits"),
    ("EUVD", "euvd_hits"),
    ("Needs prediction", "needs_prediction"),
    ("Predicted", "predicted"),
    ("Failed", "prediction_failed"),
    ("Total integrated", "integrated"),
    ("With CVSS", "with_cvss"),
    ("Prioritized", "prioritized"),
    ("Below threshold", "below_threshold"),
    ("From CISA", "rec_cisa"),
    ("From LLM", "rec_llm"),
    ("Total recommendations", "rec_total"),
)


def _print_counts(counts: dict) -> None:
    width = max(len(label) for label, _ in FUNNEL_ROWS)
    for label, field in FUNNEL_ROWS:
        print(f"  {label:<{width}}  {counts[field]}")


def cmd_run(args) -> int:
    config = RunConfig.from_file(args.config)
    if args.threshold is not None:
        config.priority_threshold = args.threshold
    if args.gate is not None:
        config.gate_threshold = args.gate
    if args.client is not None:
        config.client_mode = args.client
    runs_root = Path(args.out or config.out_dir or DEFAULT_RUNS_ROOT)
    config.out_dir = str(runs_root / ("run-" + config.digest()[:12]))
    try:
        run = PipelineRun.create(config)
        report = run.execute()
    except ConfigInvalid as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return 2
    print(f"run {report.run_id}: {report.status} "
          f"({report.pending_reviews} pending reviews)")
    _print_counts(report.counts.as_dict())
    print(f"output: {report.out_dir}")
    return 0


def cmd_report(args) -> int:
    report_path = Path(args.runs) / args.run_id / "report.json"
    if not report_path.exists():
        print(f"no report for {args.run_id} under {args.runs}", file=sys.stderr)
        return 2
    payload = json.loads(report_path.read_text())
    if args.json:
        print(json.dumps(payload, indent=1, sort_keys=True))
        return 0
    print(f"run {payload['run_id']}: {payload['status']} "
          f"({payload['pending_reviews']} pending reviews)")
    _print_counts(payload["counts"])
    print("reductions:")
    for name, value in sorted(payload["reductions"].items()):
        print(f"  {name}: {value}%")
    print(f"manifest digest: {payload['manifest_digest']}")
    return 0


def cmd_review_list(args) -> int:
    from .api import RunStore

    items = RunStore(args.runs).pending()
    if not items:
        print("no pending review items")
        return 0
    for item in items:
        print(f"{item['item_id']}  [{item['kind']}]  {item['cve_id']}  "
              f"run={item['run_id']}")
    return 0


def cmd_review_decide(args) -> int:
    from .api import RunStore

    store = RunStore(args.runs)
    decision = {"kind": args.kind, "vector": args.vector, "analyst": args.analyst}
    try:
        run, _ = store.find_item(args.item_id)
        item = run.apply_review_decision(args.item_id, decision)
    except UnknownItem as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except AlreadyDecided as exc:
        print(f"already decided: {json.dumps(exc.prior)}", file=sys.stderr)
        return 3
    except (ValueError, cvss.VectorError) as exc:
        print(f"invalid decision: {exc}", file=sys.stderr)
        return 2
    print(f"{item['item_id']} decided: {item['decision']['kind']}")
    return 0


def cmd_train_predictor(args) -> int:
    records = load_dataset(args.data)
    split = prepare_dataset(records, seed=args.seed)
    model = train(split.train, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(f"trained on {len(split.train)} records "
          f"(validation {len(split.validation)}, test {len(split.test)})")
    print(f"model digest {model.digest()}")
    print(f"saved to {out}")
    return 0


def cmd_score(args) -> int:
    try:
        vector = cvss.parse_vector(args.vector)
    except cvss.VectorError as exc:
        print(f"invalid vector: {exc}", file=sys.stderr)
        return 2
    score = cvss.base_score(vector)
    print(f"{vector.to_string()}")
    print(f"base score: {score} ({cvss.severity(score).label})")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(args.runs), host=args.host, port=args.port,
                log_level="info")
    return 0


def cmd_make_fixture(args) -> int:
    from .fixtures import PROFILES, build_scenario

    profile = PROFILES[args.profile]
    bundle = build_scenario(profile, args.out)
    print(f"built {profile.name} fixture at {bundle.root}")
    print(f"run it: vulntriage run --config {bundle.config_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulntriage",
                                     description="vulnerability triage pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one scenario end to end")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--threshold", type=float, default=None,
                       help="prioritization CVSS threshold override")
    p_run.add_argument("--gate", type=float, default=None,
                       help="prediction confidence gate override")
    p_run.add_argument("--client", choices=("replay", "disabled", "live"), default=None)
    p_run.add_argument("--out", default=None, help="runs root directory")
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", help="show a finished run's report")
    p_report.add_argument("run_id")
    p_report.add_argument("--runs", default=DEFAULT_RUNS_ROOT)
    p_report.add_argument("--json", action="store_true")
    p_report.set_defaults(func=cmd_report)

    p_review = sub.add_parser("review", help="inspect and decide review items")
    review_sub = p_review.add_subparsers(dest="review_command", required=True)
    p_list = review_sub.add_parser("list")
    p_list.add_argument("--runs", default=DEFAULT_RUNS_ROOT)
    p_list.set_defaults(func=cmd_review_list)
    p_decide = review_sub.add_parser("decide")
    p_decide.add_argument("item_id")
    p_decide.add_argument("--kind", required=True,
                          choices=("accept", "override", "approve", "reject"))
    p_decide.add_argument("--vector", default=None)
    p_decide.add_argument("--analyst", default="cli")
    p_decide.add_argument("--runs", default=DEFAULT_RUNS_ROOT)
    p_decide.set_defaults(func=cmd_review_decide)

    p_train = sub.add_parser("train-predictor", help="train the baseline classifier")
    p_train.add_argument("--data", required=True,
                         help="line-delimited labeled records")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", default="predictor.json")
    p_train.set_defaults(func=cmd_train_predictor)

    p_score = sub.add_parser("score", help="score a CVSS v3.1 vector string")
    p_score.add_argument("vector")
    p_score.set_defaults(func=cmd_score)

    p_serve = sub.add_parser("serve", help="serve the review API over HTTP")
    p_serve.add_argument("--runs", default=DEFAULT_RUNS_ROOT)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8470)
    p_serve.set_defaults(func=cmd_serve)

    p_fixture = sub.add_parser("make-fixture", help="build a synthetic scenario bundle")
    p_fixture.add_argument("profile", choices=(
        "prediction_test", "train_ticket", "online_boutique", "beer_shop",
        "online_boutique_baseline"))
    p_fixture.add_argument("--out", required=True)
    p_fixture.set_defaults(func=cmd_make_fixture)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
