"""Command line entry points: scan, score, export-traces.

Exit codes for scan: 0 clean, 1 confirmed findings exist, 2 the scan
itself failed (bad config, unreachable target, fatal setup error). Scoring
and export reuse 0/2 the same way.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ScanError
from .graph import run_scan
from .report import export_traces, render_score_report
from .triage import load_ground_truth, score_findings
from .findings import FindingSet


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proofscan")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="run a full scan against the configured target")
    scan.add_argument("--config", required=True, help="path to the scan config JSON")
    scan.add_argument("--out", default=None, help="output directory (overrides config)")
    scan.add_argument(
        "--families",
        default=None,
        help="comma separated family subset (overrides config)",
    )
    scan.add_argument(
        "--exit-zero",
        action="store_true",
        help="exit 0 even when findings are confirmed",
    )

    score = sub.add_parser("score", help="score a findings file against ground truth")
    score.add_argument("--findings", required=True, help="findings.json from a scan run")
    score.add_argument("--ground-truth", required=True, help="ground truth manifest JSON")
    score.add_argument("--name", default=None, help="row label in the score table")
    score.add_argument("--out", default=None, help="write the report here instead of stdout")
    score.add_argument(
        "--true-negatives",
        type=int,
        default=None,
        help="benign surface count, enables FPR/accuracy/MCC/macro-F1",
    )
    score.add_argument("--json", action="store_true", help="emit raw metrics JSON")

    export = sub.add_parser("export-traces", help="flatten a run's trace into one JSONL dataset")
    export.add_argument("--run-dir", required=True, help="scan output directory")
    export.add_argument("--out", required=True, help="destination JSONL path")
    export.add_argument(
        "--redaction",
        choices=["standard", "strict"],
        default="standard",
        help="strict additionally drops response bodies",
    )
    export.add_argument(
        "--extra-secret",
        action="append",
        default=[],
        help="additional secret value to scrub (repeatable)",
    )
    return parser


def _cmd_scan(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        if args.families:
            from dataclasses import replace

            wanted = tuple(f.strip() for f in args.families.split(",") if f.strip())
            config = replace(config, families=wanted)
        result = run_scan(config, out_dir=args.out)
    except ScanError as exc:
        print(f"scan failed: {exc}", file=sys.stderr)
        return 2
    fs = result.finding_set
    print(f"target: {fs.target}")
    print(f"findings: {len(fs.findings)} confirmed in {fs.duration_s:.1f}s")
    for f in fs.sorted_findings():
        print(f"  [{f.severity}] {f.family} {f.endpoint} param={f.parameter}")
    for d in fs.diagnostics:
        print(f"  note: {d}")
    print(f"artifacts: {result.out_dir}")
    if fs.findings and not args.exit_zero:
        return 1
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    try:
        fs = FindingSet.from_json(Path(args.findings).read_text())
        entries = load_ground_truth(args.ground_truth)
        run = score_findings(list(fs.findings), entries, tn=args.true_negatives)
    except (ScanError, OSError, json.JSONDecodeError) as exc:
        print(f"scoring failed: {exc}", file=sys.stderr)
        return 2
    if args.json:
        text = json.dumps(run.report.as_dict(), indent=2, sort_keys=True) + "\n"
    else:
        name = args.name or fs.target
        text = render_score_report(name, run, entries)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="" if text.endswith("\n") else "\n")
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    try:
        count = export_traces(
            args.run_dir, args.out, redaction=args.redaction, extra_secrets=args.extra_secret
        )
    except (ScanError, OSError, json.JSONDecodeError) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} trace lines to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.command == "scan":
        return _cmd_scan(args)
    if args.command == "score":
        return _cmd_score(args)
    if args.command == "export-traces":
        return _cmd_export(args)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
