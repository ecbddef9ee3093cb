"""Run artifacts: findings JSON, human report, score tables, trace export.

The trace JSONL on disk is already redacted at write time; the exporter
re-applies redaction anyway so a dataset built from any trace, including
one produced by an older build, cannot leak credentials.
"""

from __future__ import annotations

import json
from pathlib import Path

from .findings import FindingSet
from .transport import Redactor
from .triage import GroundTruthEntry, ScoredRun, TriageLabel


def _fmt(value: float | None, pct: bool = False) -> str:
    if value is None:
        return "n/a"
    return f"{value * 100:.1f}%" if pct else f"{value:.3f}"


def render_report_md(fs: FindingSet) -> str:
    lines = [
        "# Scan report",
        "",
        f"- Target: {fs.target}",
        f"- Started: {fs.started_at}",
        f"- Duration: {fs.duration_s:.1f}s",
        f"- Rule version: {fs.rule_version}",
        f"- Confirmed findings: {len(fs.findings)}",
        "",
        "## Results by family",
        "",
        "| Family | Cases | Confirmed | Inconclusive | Notes |",
        "|---|---|---|---|---|",
    ]
    for family in sorted(fs.family_stats):
        st = fs.family_stats[family]
        lines.append(
            f"| {family} | {st.get('cases', 0)} | {st.get('confirmed', 0)} "
            f"| {st.get('inconclusive', 0)} | {st.get('note', '')} |"
        )
    lines += ["", "## Findings", ""]
    if not fs.findings:
        lines.append("No confirmed findings.")
    for f in fs.sorted_findings():
        lines += [
            f"### [{f.severity.upper()}] {f.title} at {f.endpoint}",
            "",
            f"- Family: {f.family} (CWE-{f.cwe})",
            f"- Parameter: {f.parameter}",
            f"- Technique: {f.technique}",
            f"- Sessions: acting={f.acting_session or 'anonymous'}"
            + (f", victim={f.victim_session}" if f.victim_session else ""),
            f"- Rule: {f.rule_id}",
            f"- Evidence digest: {f.evidence_digest}",
            f"- Exploit confirmed: {'yes' if f.exploit_confirmed else 'no'}",
            f"- Why: {f.description}",
            "",
        ]
    if fs.diagnostics:
        lines += ["## Diagnostics", ""]
        lines += [f"- {d}" for d in fs.diagnostics]
        lines.append("")
    return "\n".join(lines)


def render_score_md(
    rows: list[tuple[str, ScoredRun]],
) -> str:
    """Benchmark-style table: one row per target plus a grand total."""
    lines = [
        "| Target | GT Vulns | Unique TP | FN | Recall | FPs | Precision |",
        "|---|---|---|---|---|---|---|",
    ]
    tot_gt = tot_tp = tot_fn = tot_fp = 0
    for name, run in rows:
        r = run.report
        gt = r.tp + r.fn
        tot_gt += gt
        tot_tp += r.tp
        tot_fn += r.fn
        tot_fp += r.fp
        lines.append(
            f"| {name} | {gt} | {r.tp} | {r.fn} | {_fmt(r.recall, pct=True)} "
            f"| {r.fp} | {_fmt(r.precision, pct=True)} |"
        )
    if len(rows) != 1:
        recall = tot_tp / tot_gt if tot_gt else None
        precision = tot_tp / (tot_tp + tot_fp) if (tot_tp + tot_fp) else None
        lines.append(
            f"| Grand Total | {tot_gt} | {tot_tp} | {tot_fn} | {_fmt(recall, pct=True)} "
            f"| {tot_fp} | {_fmt(precision, pct=True)} |"
        )
    return "\n".join(lines)


def render_score_report(name: str, run: ScoredRun, entries: list[GroundTruthEntry]) -> str:
    r = run.report
    lines = [
        "# Score report",
        "",
        render_score_md([(name, run)]),
        "",
        "## Metrics",
        "",
        f"- Precision: {_fmt(r.precision)}",
        f"- Recall: {_fmt(r.recall)}",
        f"- F1 (positive class): {_fmt(r.f1)}",
        f"- F1 (macro): {_fmt(r.f1_macro)}",
        f"- FPR: {_fmt(r.fpr)}",
        f"- Accuracy: {_fmt(r.accuracy)}",
        f"- MCC: {_fmt(r.mcc)}",
        f"- Non-actionable rate: {_fmt(r.nar)}",
        f"- Duplicate rate: {_fmt(r.duplicate_rate)}",
        f"- Exploitability rate: {_fmt(r.exploitability_rate)}",
        "",
        "## Per-finding labels",
        "",
        "| Finding | Family | Endpoint | Label |",
        "|---|---|---|---|",
    ]
    for f, label in run.labels:
        lines.append(f"| {f.id} | {f.family} | {f.endpoint} | {label.value} |")
    missed = run.match.missed
    lines += ["", "## Missed ground truth", ""]
    if not missed:
        lines.append("None.")
    else:
        for gt in missed:
            lines.append(f"- {gt.gt_id}: {gt.name} (CWE-{gt.cwe}, {gt.severity})")
    lines.append("")
    return "\n".join(lines)


def label_counts(run: ScoredRun) -> dict[str, int]:
    counts: dict[str, int] = {label.value: 0 for label in TriageLabel}
    for _, label in run.labels:
        counts[label.value] += 1
    return counts


def write_run_artifacts(out_dir: str | Path, fs: FindingSet) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    findings_path = out / "findings.json"
    findings_path.write_text(fs.to_json() + "\n")
    report_path = out / "report.md"
    report_path.write_text(render_report_md(fs))
    return {"findings": findings_path, "report": report_path}


def export_traces(
    run_dir: str | Path,
    out_path: str | Path,
    redaction: str = "standard",
    extra_secrets: list[str] | None = None,
) -> int:
    """Join request events with case verdicts into a flat dataset.

    One line per request, in global trace order. The request that produced
    the confirming evidence for a confirmed case carries verdict
    "confirmed"; every other request of that case is an "attempt". The
    strict profile additionally drops response bodies.
    """
    if redaction not in ("standard", "strict"):
        raise ValueError(f"unknown redaction profile {redaction!r}")
    trace_path = Path(run_dir) / "trace.jsonl"
    if not trace_path.is_file():
        raise FileNotFoundError(f"no trace at {trace_path}")
    redactor = Redactor(extra_secrets or [])

    events = []
    with trace_path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))

    # Last case event per case_id wins (ladders emit one per stage).
    confirmed_digest: dict[str, str] = {}
    case_meta: dict[str, dict] = {}
    for ev in events:
        if ev.get("type") != "case":
            continue
        cid = ev.get("case_id")
        if not cid:
            continue
        case_meta[cid] = ev
        if ev.get("verdict") == "confirmed" and ev.get("confirming_digest"):
            confirmed_digest[cid] = ev["confirming_digest"]

    count = 0
    out_file = Path(out_path)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    with out_file.open("w") as out:
        for ev in events:
            if ev.get("type") != "request":
                continue
            cid = ev.get("case_id")
            meta = case_meta.get(cid, {})
            verdict = None
            role = ev.get("role") or ""
            digest = (ev.get("response") or {}).get("request_digest")
            if cid in confirmed_digest and role.startswith("attack") and digest == confirmed_digest[cid]:
                verdict = "confirmed"
            elif role.startswith(("attack", "detect", "timing")):
                verdict = "attempt"
            line = {
                "seq": ev.get("seq"),
                "ts": ev.get("ts"),
                "case_id": cid,
                "family": ev.get("family") or meta.get("family"),
                "endpoint": meta.get("endpoint"),
                "parameter": meta.get("parameter"),
                "session": ev.get("session"),
                "role": role,
                "verdict": verdict,
                "signals": meta.get("signals") if verdict == "confirmed" else None,
                "request": ev.get("request"),
                "response": ev.get("response"),
                "error": ev.get("error"),
            }
            if redaction == "strict" and line["response"]:
                line["response"] = {
                    k: v for k, v in line["response"].items() if k != "body_b64"
                }
            out.write(json.dumps(redactor.scrub_event(line), sort_keys=True) + "\n")
            count += 1
    return count
