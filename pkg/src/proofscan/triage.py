"""Triage taxonomy, deduplication, ground-truth matching, and metrics.

Scoring never guesses: a metric whose denominator is zero is reported as
None and rendered as "n/a", not silently coerced to 0. Both the
positive-class F1 and the macro-averaged F1 are computed because benchmark
summaries conventionally report the macro value when true negatives are
known.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import GroundTruthError
from .findings import Finding


class TriageLabel(str, Enum):
    TRUE_POSITIVE = "true_positive"
    FALSE_POSITIVE = "false_positive"
    TECHNICALLY_INVALID = "technically_invalid"
    NO_IMPACT = "no_impact"
    INFORMATIONAL = "informational"
    INTENDED_BEHAVIOR = "intended_behavior"
    THEORETICAL = "theoretical"
    ENVIRONMENTAL_ARTIFACT = "environmental_artifact"
    DUPLICATE = "duplicate"


# Labels that make a reported finding non-actionable for a defender.
NON_ACTIONABLE = frozenset(
    {
        TriageLabel.TECHNICALLY_INVALID,
        TriageLabel.NO_IMPACT,
        TriageLabel.INFORMATIONAL,
        TriageLabel.INTENDED_BEHAVIOR,
        TriageLabel.THEORETICAL,
        TriageLabel.ENVIRONMENTAL_ARTIFACT,
    }
)


@dataclass(frozen=True)
class GroundTruthEntry:
    gt_id: str
    name: str
    cwe: int
    severity: str
    endpoints: tuple[str, ...] = ()  # empty means any endpoint
    disposition: str = "vulnerable"  # vulnerable | intended | no_impact

    @staticmethod
    def from_dict(d: dict) -> "GroundTruthEntry":
        for key in ("id", "cwe"):
            if key not in d:
                raise GroundTruthError(f"ground truth entry missing {key!r}: {d}")
        disposition = d.get("disposition", "vulnerable")
        if disposition not in ("vulnerable", "intended", "no_impact"):
            raise GroundTruthError(f"unknown disposition {disposition!r} in entry {d['id']}")
        return GroundTruthEntry(
            gt_id=str(d["id"]),
            name=d.get("name", str(d["id"])),
            cwe=int(d["cwe"]),
            severity=_norm_severity(d.get("severity", "medium")),
            endpoints=tuple(d.get("endpoints", ())),
            disposition=disposition,
        )


def _norm_severity(raw: str) -> str:
    s = raw.strip().lower()
    aliases = {"crit": "critical", "med": "medium", "info": "none"}
    s = aliases.get(s, s)
    if s not in ("critical", "high", "medium", "low", "none"):
        raise GroundTruthError(f"unknown severity {raw!r}")
    return s


def load_ground_truth(path: str | Path) -> list[GroundTruthEntry]:
    p = Path(path)
    if not p.is_file():
        raise GroundTruthError(f"ground truth manifest not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise GroundTruthError(f"manifest is not valid JSON: {exc}") from None
    entries = doc.get("entries") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise GroundTruthError("manifest must be a list or an object with an 'entries' list")
    out = [GroundTruthEntry.from_dict(e) for e in entries]
    ids = [e.gt_id for e in out]
    if len(ids) != len(set(ids)):
        raise GroundTruthError("ground truth ids must be unique")
    return out


_ALIAS_CACHE: dict[int, set[int]] | None = None


def _cwe_aliases() -> dict[int, set[int]]:
    global _ALIAS_CACHE
    if _ALIAS_CACHE is None:
        raw = json.loads(resources.files("proofscan.data").joinpath("cwe_aliases.json").read_text())
        _ALIAS_CACHE = {int(k): {int(x) for x in v} for k, v in raw.items()}
    return _ALIAS_CACHE


def cwe_compatible(a: int, b: int) -> bool:
    """Exact match or listed-alias match, in either direction."""
    if a == b:
        return True
    aliases = _cwe_aliases()
    return b in aliases.get(a, set()) or a in aliases.get(b, set())


def deduplicate(findings: list[Finding]) -> tuple[list[Finding], list[Finding]]:
    """Collapse findings sharing (family, endpoint, parameter); first wins."""
    seen: set[tuple[str, str, str]] = set()
    unique: list[Finding] = []
    dupes: list[Finding] = []
    for f in findings:
        key = (f.family, f.endpoint.strip().lower(), f.parameter.strip().lower())
        if key in seen:
            dupes.append(f)
        else:
            seen.add(key)
            unique.append(f)
    return unique, dupes


def _endpoint_matches(finding_ep: str, gt_eps: tuple[str, ...]) -> bool:
    if not gt_eps:
        return True
    fe = finding_ep.strip().lower()
    return any(fe == g.strip().lower() for g in gt_eps)


@dataclass
class MatchResult:
    matched: list[tuple[Finding, GroundTruthEntry]] = field(default_factory=list)
    unmatched_findings: list[Finding] = field(default_factory=list)
    missed: list[GroundTruthEntry] = field(default_factory=list)
    extra_matches: list[Finding] = field(default_factory=list)  # same GT hit twice


def match_ground_truth(findings: list[Finding], entries: list[GroundTruthEntry]) -> MatchResult:
    """Greedy one-to-one matching: CWE compatibility plus endpoint identity.

    Each ground truth entry absorbs at most one finding; later findings that
    would have matched an already-taken entry are extras (scored as
    duplicates, not false positives).
    """
    result = MatchResult()
    taken: set[str] = set()
    scoreable = [e for e in entries if e.disposition == "vulnerable"]
    for f in findings:
        hit = None
        for gt in scoreable:
            if not cwe_compatible(f.cwe, gt.cwe):
                continue
            if not _endpoint_matches(f.endpoint, gt.endpoints):
                continue
            if gt.gt_id in taken:
                hit = ("extra", gt)
                continue
            hit = ("new", gt)
            break
        if hit is None:
            result.unmatched_findings.append(f)
        elif hit[0] == "new":
            taken.add(hit[1].gt_id)
            result.matched.append((f, hit[1]))
        else:
            result.extra_matches.append(f)
    result.missed = [e for e in scoreable if e.gt_id not in taken]
    return result


def classify_finding(
    finding: Finding,
    gt_entry: GroundTruthEntry | None,
    *,
    is_duplicate: bool = False,
    in_scope: bool = True,
) -> TriageLabel:
    """Deterministic taxonomy assignment, first matching rule wins.

    Precedence: duplicate, then ground-truth disposition, then integrity of
    the claim itself (unconfirmed, out of scope, unexploitable,
    severity-free), then false positive as the residual.
    """
    if is_duplicate:
        return TriageLabel.DUPLICATE
    if gt_entry is not None:
        if gt_entry.disposition == "vulnerable":
            return TriageLabel.TRUE_POSITIVE
        if gt_entry.disposition == "intended":
            return TriageLabel.INTENDED_BEHAVIOR
        return TriageLabel.NO_IMPACT
    if finding.verdict_status != "confirmed":
        return TriageLabel.TECHNICALLY_INVALID
    if not in_scope:
        return TriageLabel.ENVIRONMENTAL_ARTIFACT
    if not finding.exploit_confirmed:
        return TriageLabel.THEORETICAL
    if finding.severity == "none":
        return TriageLabel.INFORMATIONAL
    return TriageLabel.FALSE_POSITIVE


def map_severity(cvss: float) -> str:
    """CVSS v3.1 base score to qualitative band."""
    if not (0.0 <= cvss <= 10.0) or math.isnan(cvss):
        raise ValueError(f"CVSS score out of range: {cvss}")
    if cvss >= 9.0:
        return "critical"
    if cvss >= 7.0:
        return "high"
    if cvss >= 4.0:
        return "medium"
    if cvss >= 0.1:
        return "low"
    return "none"


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class ScoreReport:
    tp: int
    fp: int
    fn: int
    tn: int | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None  # positive class
    f1_macro: float | None = None  # mean of both class F1s; needs tn
    fpr: float | None = None
    accuracy: float | None = None
    mcc: float | None = None
    nar: float | None = None
    duplicate_rate: float | None = None
    exploitability_rate: float | None = None
    reported: int = 0
    duplicates: int = 0
    non_actionable: int = 0

    def as_dict(self) -> dict:
        def fmt(v):
            return None if v is None else round(v, 6)

        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision": fmt(self.precision),
            "recall": fmt(self.recall),
            "f1": fmt(self.f1),
            "f1_macro": fmt(self.f1_macro),
            "fpr": fmt(self.fpr),
            "accuracy": fmt(self.accuracy),
            "mcc": fmt(self.mcc),
            "nar": fmt(self.nar),
            "duplicate_rate": fmt(self.duplicate_rate),
            "exploitability_rate": fmt(self.exploitability_rate),
            "reported": self.reported,
            "duplicates": self.duplicates,
            "non_actionable": self.non_actionable,
        }


def compute_metrics(
    tp: int,
    fp: int,
    fn: int,
    tn: int | None = None,
    *,
    reported: int = 0,
    duplicates: int = 0,
    non_actionable: int = 0,
    exploitables: int = 0,
    confirmed: int = 0,
) -> ScoreReport:
    """Confusion-matrix metrics with explicit n/a for undefined values."""
    for name, v in (("tp", tp), ("fp", fp), ("fn", fn)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative")
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    elif precision is not None and recall is not None:
        f1 = 0.0

    f1_macro = fpr = accuracy = mcc = None
    if tn is not None:
        if tn < 0:
            raise ValueError("tn must be non-negative")
        fpr = _ratio(fp, fp + tn)
        accuracy = _ratio(tp + tn, tp + tn + fp + fn)
        # Negative-class F1: both its precision and recall share the tn
        # numerator, so the harmonic mean simplifies to 2tn/(2tn+fn+fp).
        f1_neg = _ratio(2 * tn, 2 * tn + fn + fp)
        f1_pos = _ratio(2 * tp, 2 * tp + fp + fn)
        if f1_neg is not None and f1_pos is not None:
            f1_macro = (f1_pos + f1_neg) / 2
        denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if denom > 0:
            mcc = (tp * tn - fp * fn) / math.sqrt(denom)

    return ScoreReport(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        precision=precision,
        recall=recall,
        f1=f1,
        f1_macro=f1_macro,
        fpr=fpr,
        accuracy=accuracy,
        mcc=mcc,
        nar=_ratio(non_actionable, reported) if reported else None,
        duplicate_rate=_ratio(duplicates, reported) if reported else None,
        exploitability_rate=_ratio(exploitables, confirmed) if confirmed else None,
        reported=reported,
        duplicates=duplicates,
        non_actionable=non_actionable,
    )


@dataclass
class ScoredRun:
    report: ScoreReport
    labels: list[tuple[Finding, TriageLabel]]
    match: MatchResult


def score_findings(
    findings: list[Finding],
    entries: list[GroundTruthEntry],
    tn: int | None = None,
) -> ScoredRun:
    """Full scoring pipeline: dedup, match, classify, compute."""
    unique, dupes = deduplicate(findings)
    match = match_ground_truth(unique, entries)
    gt_for: dict[str, GroundTruthEntry] = {f.id: gt for f, gt in match.matched}

    labels: list[tuple[Finding, TriageLabel]] = []
    for f in unique:
        if f in match.extra_matches:
            labels.append((f, TriageLabel.DUPLICATE))
        else:
            labels.append((f, classify_finding(f, gt_for.get(f.id))))
    for f in dupes:
        labels.append((f, TriageLabel.DUPLICATE))

    label_values = [label for _, label in labels]
    tp = sum(1 for v in label_values if v == TriageLabel.TRUE_POSITIVE)
    fp = sum(1 for v in label_values if v == TriageLabel.FALSE_POSITIVE)
    dup_count = sum(1 for v in label_values if v == TriageLabel.DUPLICATE)
    non_act = sum(1 for v in label_values if v in NON_ACTIONABLE)
    fn = len([e for e in entries if e.disposition == "vulnerable"]) - tp
    confirmed = [f for f, _ in labels if f.verdict_status == "confirmed"]
    exploitables = sum(1 for f in confirmed if f.exploit_confirmed)

    report = compute_metrics(
        tp,
        fp,
        fn,
        tn,
        reported=len(labels),
        duplicates=dup_count,
        non_actionable=non_act,
        exploitables=exploitables,
        confirmed=len(confirmed),
    )
    return ScoredRun(report=report, labels=labels, match=match)
