"""Deterministic confirmation engine.

confirm(bundle) is a pure function of the bundle plus the versioned rule
table. Each family's rule is a disjunction of routes; each route is a
conjunction of named signals. A signal is True, False, or None
(unavailable). A route confirms only when every signal in it is True; a
verdict is inconclusive when no route passed but at least one route failed
solely for lack of evidence. Nothing else - no model output, no payload
generator hint - can move a verdict.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .config import Thresholds
from .errors import BundleSchemaError
from .evidence import (
    EvidenceBundle,
    compare_responses,
    detect_spa_shell,
    marker_proof,
    timing_signal,
    verify_ownership,
)

Tri = bool | None


class VerdictStatus(str, Enum):
    CONFIRMED = "confirmed"
    INCONCLUSIVE = "inconclusive"
    NOT_CONFIRMED = "not_confirmed"


@dataclass(frozen=True)
class Verdict:
    status: VerdictStatus
    family: str
    rule_id: str
    rule_version: str
    signals: dict[str, Tri] = field(default_factory=dict)
    rationale: str = ""

    @property
    def confirmed(self) -> bool:
        return self.status == VerdictStatus.CONFIRMED

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "family": self.family,
            "rule_id": self.rule_id,
            "rule_version": self.rule_version,
            "signals": dict(self.signals),
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class RuleTable:
    version: str
    thresholds: Thresholds
    families: dict[str, dict]

    def routes(self, family: str) -> list[list[str]]:
        return self.families[family]["routes"]

    def requires(self, family: str) -> list[str]:
        return self.families[family]["requires"]


_CACHED: RuleTable | None = None


def load_rules() -> RuleTable:
    global _CACHED
    if _CACHED is None:
        raw = json.loads(
            resources.files("proofscan.data").joinpath("confirmation_rules.json").read_text()
        )
        _CACHED = RuleTable(
            version=raw["version"],
            thresholds=Thresholds(**raw["thresholds"]),
            families=raw["families"],
        )
    return _CACHED


def _check_schema(bundle: EvidenceBundle, requires: list[str]) -> None:
    b = bundle
    missing = []
    for req in requires:
        ok = {
            "attack": bool(b.attack),
            "baseline": b.baseline is not None,
            "reference": b.reference is not None,
            "victim_nonces": bool(b.victim_nonces),
            "markers": b.markers is not None,
            "markers_or_timing": b.markers is not None or b.timing is not None,
            "assertions": bool(b.assertions),
            "pre_state": b.pre_state is not None,
            "expected_nonce": bool(b.expected_nonce),
            "origin_sent": bool(b.origin_sent),
        }.get(req)
        if ok is None:
            raise BundleSchemaError(f"rule table names unknown requirement {req!r}")
        if not ok:
            missing.append(req)
    if missing:
        raise BundleSchemaError(
            f"bundle for family {b.family!r} is missing required evidence: {', '.join(missing)}"
        )


def _first_attack(b: EvidenceBundle):
    return b.attack[0] if b.attack else None


def _sig_ownership_attack(b: EvidenceBundle, t: Thresholds) -> Tri:
    atk = _first_attack(b)
    if atk is None or atk.status == 0:
        return None
    return verify_ownership(atk, b.victim_nonces)


def _sig_baseline_clean(b: EvidenceBundle, t: Thresholds) -> Tri:
    if b.baseline is None or b.baseline.status == 0:
        return None
    return not verify_ownership(b.baseline, b.victim_nonces)


def _sig_not_spa_shell(b: EvidenceBundle, t: Thresholds) -> Tri:
    atk = _first_attack(b)
    if atk is None or atk.status == 0:
        return None
    shell = detect_spa_shell(atk, b.shell_profile, b.normalization, t.shell_distance)
    if shell is None:
        return None
    return not shell


def _parity(b: EvidenceBundle, other, t: Thresholds) -> Tri:
    atk = _first_attack(b)
    if atk is None or atk.status == 0 or other is None or other.status == 0:
        return None
    if not atk.ok or atk.status != other.status:
        return False
    diff = compare_responses(other, atk, b.normalization, t.diff_distance)
    return not diff.significant


def _sig_parity_with_authorized(b: EvidenceBundle, t: Thresholds) -> Tri:
    return _parity(b, b.reference, t)


def _sig_parity_with_privileged(b: EvidenceBundle, t: Thresholds) -> Tri:
    return _parity(b, b.reference, t)


def _sig_distinct_from_anonymous(b: EvidenceBundle, t: Thresholds) -> Tri:
    atk = _first_attack(b)
    if atk is None or atk.status == 0 or b.baseline is None or b.baseline.status == 0:
        return None
    if atk.status != b.baseline.status:
        return True
    diff = compare_responses(b.baseline, atk, b.normalization, t.diff_distance)
    return diff.significant


def _sig_content_proof(b: EvidenceBundle, t: Thresholds) -> Tri:
    atk = _first_attack(b)
    if atk is None or b.markers is None:
        return None
    return marker_proof(atk, b.baseline, b.markers)


def _sig_boolean_differential(b: EvidenceBundle, t: Thresholds) -> Tri:
    # attack[0] is the true-condition response, attack[1] the false-condition.
    if len(b.attack) < 2 or b.baseline is None:
        return None
    true_r, false_r = b.attack[0], b.attack[1]
    if true_r.status == 0 or false_r.status == 0 or b.baseline.status == 0:
        return None
    pair = compare_responses(true_r, false_r, b.normalization, t.diff_distance)
    anchor = compare_responses(b.baseline, true_r, b.normalization, t.diff_distance)
    return pair.significant and not anchor.significant


def _sig_timing_confirmed(b: EvidenceBundle, t: Thresholds) -> Tri:
    if b.timing is None:
        return None
    return timing_signal(
        b.timing,
        delta_abs_ms=t.timing_delta_abs_ms,
        iqr_k=t.timing_iqr_k,
        baseline_min=t.timing_baseline_min,
        attack_min=t.timing_attack_min,
    )


def _sig_state_violation(b: EvidenceBundle, t: Thresholds) -> Tri:
    if b.pre_state is None or b.post_state is None or not b.assertions:
        return None
    results = [a.evaluate(b.pre_state, b.post_state) for a in b.assertions]
    if any(r is True for r in results):
        return True
    if any(r is None for r in results):
        return None
    return False


def _sig_callback_received(b: EvidenceBundle, t: Thresholds) -> Tri:
    if b.callback_hits is None:
        return None
    if not b.expected_nonce:
        return None
    return any(b.expected_nonce in hit for hit in b.callback_hits)


def _sig_cors_misconfig(b: EvidenceBundle, t: Thresholds) -> Tri:
    atk = _first_attack(b)
    if atk is None or atk.status == 0:
        return None
    acao = atk.header("Access-Control-Allow-Origin")
    acac = (atk.header("Access-Control-Allow-Credentials") or "").strip().lower() == "true"
    if acao is None:
        return False
    return acac and (acao.strip() == b.origin_sent or acao.strip() == "*")


_SIGNALS = {
    "ownership_attack": _sig_ownership_attack,
    "baseline_clean": _sig_baseline_clean,
    "not_spa_shell": _sig_not_spa_shell,
    "parity_with_authorized": _sig_parity_with_authorized,
    "parity_with_privileged": _sig_parity_with_privileged,
    "distinct_from_anonymous": _sig_distinct_from_anonymous,
    "content_proof": _sig_content_proof,
    "boolean_differential": _sig_boolean_differential,
    "timing_confirmed": _sig_timing_confirmed,
    "state_violation": _sig_state_violation,
    "callback_received": _sig_callback_received,
    "cors_misconfig": _sig_cors_misconfig,
}


def compute_signals(bundle: EvidenceBundle, rules: RuleTable | None = None,
                    thresholds: Thresholds | None = None) -> dict[str, Tri]:
    """Evaluate every signal named by the bundle's applicable routes."""
    rules = rules or load_rules()
    t = thresholds or rules.thresholds
    if bundle.family not in rules.families:
        raise BundleSchemaError(f"unknown family {bundle.family!r}")
    names: list[str] = []
    for _, route in _applicable_routes(rules.routes(bundle.family), bundle.evidence_kinds):
        for name in route:
            if name not in names:
                names.append(name)
    out: dict[str, Tri] = {}
    for name in names:
        fn = _SIGNALS.get(name)
        if fn is None:
            raise BundleSchemaError(f"rule table names unknown signal {name!r}")
        out[name] = fn(bundle, t)
    return out


# Signals backed by stage-specific evidence; a route containing one only
# applies to bundles that actually collected that stage.
_STAGED_EVIDENCE = {
    "content_proof": "content",
    "boolean_differential": "boolean",
    "timing_confirmed": "timing",
}


def _applicable_routes(routes: list[list[str]], evidence_kinds: tuple[str, ...]) -> list[tuple[int, list[str]]]:
    if not evidence_kinds:
        return list(enumerate(routes))
    out = []
    for i, route in enumerate(routes):
        needs = {_STAGED_EVIDENCE[s] for s in route if s in _STAGED_EVIDENCE}
        if needs <= set(evidence_kinds):
            out.append((i, route))
    return out


def decide(
    family: str,
    signals: dict[str, Tri],
    rules: RuleTable | None = None,
    evidence_kinds: tuple[str, ...] = (),
) -> Verdict:
    """Map signal values to a verdict; no I/O, no randomness."""
    rules = rules or load_rules()
    if family not in rules.families:
        raise BundleSchemaError(f"unknown family {family!r}")
    applicable = _applicable_routes(rules.routes(family), evidence_kinds)
    if not applicable:
        raise BundleSchemaError(
            f"bundle for family {family!r} declares evidence kinds {evidence_kinds} "
            "matching no confirmation route"
        )
    routes = [r for _, r in applicable]
    route_index = {tuple(r): i for i, r in applicable}
    blocked: list[list[str]] = []
    for route in routes:
        i = route_index[tuple(route)]
        vals = [signals.get(name) for name in route]
        if all(v is True for v in vals):
            return Verdict(
                status=VerdictStatus.CONFIRMED,
                family=family,
                rule_id=f"{family}/route{i}",
                rule_version=rules.version,
                signals=dict(signals),
                rationale="all signals passed: " + " AND ".join(route),
            )
        if not any(v is False for v in vals) and any(v is None for v in vals):
            blocked.append(route)
    if blocked:
        route = blocked[0]
        i = route_index[tuple(route)]
        missing = [n for n in route if signals.get(n) is None]
        return Verdict(
            status=VerdictStatus.INCONCLUSIVE,
            family=family,
            rule_id=f"{family}/route{i}",
            rule_version=rules.version,
            signals=dict(signals),
            rationale="route blocked only by unavailable evidence: " + ", ".join(missing),
        )
    return Verdict(
        status=VerdictStatus.NOT_CONFIRMED,
        family=family,
        rule_id=f"{family}/none",
        rule_version=rules.version,
        signals=dict(signals),
        rationale="no route satisfied",
    )


def confirm(bundle: EvidenceBundle, rules: RuleTable | None = None,
            thresholds: Thresholds | None = None) -> Verdict:
    """Validate the bundle against its family's schema, then decide."""
    rules = rules or load_rules()
    if bundle.family not in rules.families:
        raise BundleSchemaError(f"unknown family {bundle.family!r}")
    _check_schema(bundle, rules.requires(bundle.family))
    signals = compute_signals(bundle, rules, thresholds)
    return decide(bundle.family, signals, rules, bundle.evidence_kinds)
