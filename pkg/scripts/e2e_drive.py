"""End-to-end drive of the installed CLI against the live HTTP stub.

Starts the deliberately vulnerable stub on a real loopback port, then runs
the `proofscan` console script as a subprocess for every subcommand and
checks exit codes and output shape. This is the outermost verification
surface: anything the unit suite mocks is real here (the network, the
process boundary, env-var secret resolution, artifact files on disk).
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from webstub import StubApp  # noqa: E402

VULN_TOGGLES = {"idor", "alg_none", "sqli", "traversal", "neg_qty", "race", "cors", "ssrf"}

GROUND_TRUTH = [
    {"id": "gt-idor", "cwe": 639, "family": "idor", "endpoints": ["GET /notes/{note_id}"],
     "severity": "high", "disposition": "vulnerable", "name": "cross-user note read"},
    {"id": "gt-authn", "cwe": 287, "family": "authn_bypass",
     "endpoints": ["GET /me", "GET /notes", "GET /wallet", "GET /notes/{note_id}"],
     "severity": "critical", "disposition": "vulnerable", "name": "alg none accepted"},
    {"id": "gt-sqli", "cwe": 89, "family": "sqli", "endpoints": ["GET /search"],
     "severity": "critical", "disposition": "vulnerable", "name": "union select in q"},
    {"id": "gt-trav", "cwe": 22, "family": "path_traversal", "endpoints": ["GET /files"],
     "severity": "high", "disposition": "vulnerable", "name": "dot-dot file read"},
    {"id": "gt-qty", "cwe": 840, "family": "business_logic", "endpoints": ["POST /orders"],
     "severity": "medium", "disposition": "vulnerable", "name": "negative quantity credits wallet"},
    {"id": "gt-race", "cwe": 367, "family": "race_condition", "endpoints": ["POST /transfer"],
     "severity": "high", "disposition": "vulnerable", "name": "stale balance write"},
    {"id": "gt-cors", "cwe": 942, "family": "cors", "endpoints": ["GET /search"],
     "severity": "medium", "disposition": "vulnerable", "name": "reflected origin with credentials"},
    {"id": "gt-ssrf", "cwe": 918, "family": "ssrf", "endpoints": ["POST /import"],
     "severity": "high", "disposition": "vulnerable", "name": "unvalidated url fetch"},
]

CHECKS: list[str] = []


def check(name: str, ok: bool, detail: str = "") -> None:
    CHECKS.append(name)
    print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f": {detail}" if detail else ""))
    if not ok:
        sys.exit(1)


def write_config(workdir: Path, stub: StubApp, out_dir: Path, race_attempts: int) -> Path:
    cfg = {
        "base_url": stub.base_url,
        "api_spec": "/openapi.json",
        "out_dir": str(out_dir),
        "sessions": [
            {"name": "alice", "role": "user", "username": "alice", "password": "${E2E_ALICE_PW}"},
            {"name": "bob", "role": "user", "username": "bob", "password": "${E2E_BOB_PW}"},
            {"name": "root", "role": "admin", "username": "root", "password": "${E2E_ROOT_PW}"},
        ],
        "login": {"path": "/auth/login", "token_path": "token", "verify_path": "/me"},
        "scope_exclude_paths": ["/openapi.json", "/reset"],
        "callback": {"host": "127.0.0.1", "port": 0},
        "sentinels": [{"relative_path": "secret/sentinel.txt", "marker": stub.sentinel_marker}],
        "state_probes": [
            {"path": "/wallet", "session": "alice", "json_path": "balance"},
            {"path": "/wallet", "session": "bob", "json_path": "balance"},
        ],
        "burst_size": 8,
        "settle_ms": 150,
        "timeout_s": 5.0,
        "transport_retries": 1,
        "race_attempts": race_attempts,
        "rng_seed": 11,
    }
    path = workdir / "scan.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


def run_cli(*argv: str) -> subprocess.CompletedProcess:
    env = dict(os.environ)
    env.update(E2E_ALICE_PW="wonderland-9-lane", E2E_BOB_PW="builder-7-yard",
               E2E_ROOT_PW="toor-3-gate")
    return subprocess.run(["proofscan", *argv], capture_output=True, text=True, env=env)


def main() -> int:
    tmp = Path(tempfile.mkdtemp(prefix="e2e-"))

    with StubApp(toggles=VULN_TOGGLES) as stub:
        out_dir = tmp / "vuln-run"
        cfg = write_config(tmp, stub, out_dir, race_attempts=3)

        proc = run_cli("scan", "--config", str(cfg))
        check("vulnerable scan exits 1", proc.returncode == 1,
              f"rc={proc.returncode} stderr={proc.stderr.strip()[:200]}")
        findings = json.loads((out_dir / "findings.json").read_text())["findings"]
        families = sorted({f["family"] for f in findings})
        check("all eight families confirmed", len(families) == 8, ", ".join(families))

        gt_path = tmp / "manifest.json"
        gt_path.write_text(json.dumps(GROUND_TRUTH))
        proc = run_cli("score", "--findings", str(out_dir / "findings.json"),
                       "--ground-truth", str(gt_path), "--json")
        report = json.loads(proc.stdout)
        check("score: perfect recall and precision, zero fp",
              proc.returncode == 0 and report["recall"] == 1.0
              and report["precision"] == 1.0 and report["fp"] == 0,
              f"tp={report['tp']} fn={report['fn']} fp={report['fp']}")

        traces = tmp / "traces.jsonl"
        proc = run_cli("export-traces", "--run-dir", str(out_dir), "--out", str(traces),
                       "--redaction", "strict")
        blob = traces.read_bytes()
        leaked = [pw for pw in ("wonderland-9-lane", "builder-7-yard", "toor-3-gate")
                  if pw.encode() in blob]
        check("trace export clean of credentials",
              proc.returncode == 0 and blob and not leaked,
              f"{proc.stdout.strip()}; leaked={leaked}")

    with StubApp(toggles=set()) as stub:
        out_dir = tmp / "benign-run"
        cfg = write_config(tmp, stub, out_dir, race_attempts=1)
        proc = run_cli("scan", "--config", str(cfg))
        check("benign scan exits 0", proc.returncode == 0,
              proc.stdout.strip().splitlines()[1] if proc.stdout else proc.stderr[:200])

    print(f"e2e drive complete: {len(CHECKS)} checks passed (artifacts under {tmp})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
