"""Findings: the scanner's only externally visible claim format.

A Finding exists only for a confirmed verdict. Inconclusive and
not-confirmed outcomes live in diagnostics and the trace, never here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .confirm import Verdict

SEVERITY_ORDER = ("critical", "high", "medium", "low", "none")


def _profiles() -> dict:
    return json.loads(
        resources.files("proofscan.data").joinpath("family_profile.json").read_text()
    )


_PROFILE_CACHE: dict | None = None


def family_profile(family: str) -> dict:
    global _PROFILE_CACHE
    if _PROFILE_CACHE is None:
        _PROFILE_CACHE = _profiles()
    return _PROFILE_CACHE.get(family, {"cwe": 0, "severity": "medium", "title": family, "exploit_confirmed": True})


def known_families() -> tuple[str, ...]:
    global _PROFILE_CACHE
    if _PROFILE_CACHE is None:
        _PROFILE_CACHE = _profiles()
    return tuple(sorted(_PROFILE_CACHE))


@dataclass(frozen=True)
class Finding:
    id: str
    family: str
    title: str
    endpoint: str  # "METHOD /template"
    parameter: str
    cwe: int
    severity: str
    exploit_confirmed: bool
    verdict_status: str
    rule_id: str
    technique: str = ""
    acting_session: str = ""
    victim_session: str = ""
    description: str = ""
    evidence_digest: str = ""
    signals: dict = field(default_factory=dict)
    payload: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "family": self.family,
            "title": self.title,
            "endpoint": self.endpoint,
            "parameter": self.parameter,
            "cwe": self.cwe,
            "severity": self.severity,
            "exploit_confirmed": self.exploit_confirmed,
            "verdict_status": self.verdict_status,
            "rule_id": self.rule_id,
            "technique": self.technique,
            "acting_session": self.acting_session,
            "victim_session": self.victim_session,
            "description": self.description,
            "evidence_digest": self.evidence_digest,
            "signals": dict(self.signals),
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: dict) -> "Finding":
        return Finding(
            id=d["id"],
            family=d["family"],
            title=d.get("title", d["family"]),
            endpoint=d["endpoint"],
            parameter=d.get("parameter", "-"),
            cwe=int(d.get("cwe", 0)),
            severity=d.get("severity", "medium"),
            exploit_confirmed=bool(d.get("exploit_confirmed", False)),
            verdict_status=d.get("verdict_status", "confirmed"),
            rule_id=d.get("rule_id", ""),
            technique=d.get("technique", ""),
            acting_session=d.get("acting_session", ""),
            victim_session=d.get("victim_session", ""),
            description=d.get("description", ""),
            evidence_digest=d.get("evidence_digest", ""),
            signals=d.get("signals", {}),
            payload=d.get("payload", ""),
        )


def finding_from_verdict(bundle, verdict: Verdict) -> Finding:
    """Build the claim object for one confirmed bundle."""
    profile = family_profile(bundle.family)
    technique = bundle.case.technique
    cwe = profile["cwe"]
    for tech_prefix, override in (profile.get("technique_cwe") or {}).items():
        if technique.startswith(tech_prefix):
            cwe = override
    fid = hashlib.sha256(
        f"{bundle.family}|{bundle.case.endpoint}|{bundle.case.parameter}".encode()
    ).hexdigest()[:12]
    return Finding(
        id=fid,
        family=bundle.family,
        title=profile["title"],
        endpoint=bundle.case.endpoint,
        parameter=bundle.case.parameter,
        cwe=cwe,
        severity=profile["severity"],
        exploit_confirmed=bool(profile.get("exploit_confirmed", True)),
        verdict_status=verdict.status.value,
        rule_id=verdict.rule_id,
        technique=technique,
        acting_session=bundle.case.acting_session,
        victim_session=bundle.case.victim_session,
        description=verdict.rationale,
        evidence_digest=bundle.digest(),
        signals={k: v for k, v in verdict.signals.items()},
        payload=bundle.case.payload,
    )


@dataclass
class FindingSet:
    target: str
    started_at: str
    duration_s: float
    rule_version: str
    findings: list[Finding] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    family_stats: dict[str, dict] = field(default_factory=dict)

    def sorted_findings(self) -> list[Finding]:
        sev = {s: i for i, s in enumerate(SEVERITY_ORDER)}
        return sorted(
            self.findings,
            key=lambda f: (sev.get(f.severity, 9), f.family, f.endpoint, f.parameter),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "target": self.target,
                "started_at": self.started_at,
                "duration_s": round(self.duration_s, 3),
                "rule_version": self.rule_version,
                "findings": [f.to_dict() for f in self.sorted_findings()],
                "diagnostics": list(self.diagnostics),
                "family_stats": self.family_stats,
            },
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "FindingSet":
        doc = json.loads(text)
        return FindingSet(
            target=doc.get("target", ""),
            started_at=doc.get("started_at", ""),
            duration_s=doc.get("duration_s", 0.0),
            rule_version=doc.get("rule_version", ""),
            findings=[Finding.from_dict(f) for f in doc.get("findings", [])],
            diagnostics=list(doc.get("diagnostics", [])),
            family_stats=doc.get("family_stats", {}),
        )
