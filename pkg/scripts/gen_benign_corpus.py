"""Record the benign evidence corpus used by the zero-false-positive tests.

Runs full scans against the stub target with no flaws toggled and captures
every judged evidence bundle, confirmed or not, as one JSON line:

    {"bundle": <EvidenceBundle.to_dict()>, "verdict": <Verdict.to_dict()>}

The stub randomizes its signing secret and sentinel marker per instance, so
repeated runs produce structurally similar but byte-distinct bundles. Rerun
with --runs N to grow the corpus; the default lands comfortably above 500
bundles.

Usage: python3 scripts/gen_benign_corpus.py [--runs N] [--out PATH]
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from proofscan.config import (
    CallbackSpec,
    LoginFlow,
    ScanConfig,
    SentinelSpec,
    SessionSpec,
    StateProbe,
)
from proofscan.graph import run_scan
from webstub import USERS, StubApp


def benign_config(stub: StubApp, out_dir: str, seed: int) -> ScanConfig:
    return ScanConfig(
        base_url=stub.base_url,
        api_spec="/openapi.json",
        sessions=[
            SessionSpec("alice", "user", "alice", USERS["alice"]["password"]),
            SessionSpec("bob", "user", "bob", USERS["bob"]["password"]),
            SessionSpec("root", "admin", "root", USERS["root"]["password"]),
        ],
        login=LoginFlow(verify_path="/me"),
        out_dir=out_dir,
        scope_exclude_paths=["/openapi.json", "/reset"],
        timeout_s=5.0,
        transport_retries=1,
        burst_size=8,
        settle_ms=150,
        race_attempts=1,
        callback=CallbackSpec(),
        sentinels=[SentinelSpec("secret/sentinel.txt", stub.sentinel_marker)],
        state_probes=[
            StateProbe("/wallet", "alice", "balance"),
            StateProbe("/wallet", "bob", "balance"),
        ],
        rng_seed=seed,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument(
        "--out",
        default=str(Path(__file__).resolve().parent.parent / "tests" / "data" / "benign_bundles.jsonl"),
    )
    args = parser.parse_args(argv)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    total = confirmed = 0
    with out_path.open("w") as out:
        for i in range(args.runs):
            sink: list = []
            with StubApp(set()) as stub, tempfile.TemporaryDirectory() as tmp:
                result = run_scan(benign_config(stub, tmp, seed=1000 + i), bundle_sink=sink)
            if result.finding_set.findings:
                print(
                    f"run {i}: benign target produced confirmed findings, refusing to record",
                    file=sys.stderr,
                )
                return 1
            for bundle, verdict in sink:
                out.write(
                    json.dumps(
                        {"bundle": bundle.to_dict(), "verdict": verdict.to_dict()},
                        sort_keys=True,
                    )
                    + "\n"
                )
                total += 1
                confirmed += 1 if verdict.confirmed else 0
            print(f"run {i}: {len(sink)} bundles recorded")
    print(f"wrote {total} bundles ({confirmed} confirmed) to {out_path}")
    return 0 if total >= 500 and confirmed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
