"""Test harness: build two prediction-test runs and serve the review API.

Run 'baseline' accepts every prediction at the default gate; run 'gated'
parks both at gate 1.0. Prints one readiness JSON line, then serves.
"""

import json
import socket
import sys
import tempfile
from pathlib import Path

import uvicorn

from vulntriage.api import create_app
from vulntriage.fixtures import PROFILES, build_scenario
from vulntriage.orchestrator import RunConfig, run_scenario


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def main() -> None:
    root = Path(tempfile.mkdtemp(prefix="console-fixture-"))
    bundle = build_scenario(PROFILES["prediction_test"], root / "fixture")

    baseline_config = RunConfig.from_file(bundle.config_path,
                                          out_dir=str(root / "runs" / "baseline"))
    baseline = run_scenario(baseline_config)

    gated_config = RunConfig.from_file(bundle.config_path,
                                       out_dir=str(root / "runs" / "gated"))
    gated_config.gate_threshold = 1.0
    gated = run_scenario(gated_config)

    port = free_port()
    print(json.dumps({
        "port": port,
        "baseline_run": baseline.run_id,
        "gated_run": gated.run_id,
        "baseline_counts": baseline.counts.as_dict(),
    }), flush=True)

    uvicorn.run(create_app(root / "runs"), host="127.0.0.1", port=port,
                log_level="error")


if __name__ == "__main__":
    sys.exit(main())
