"""Evidence primitives: everything a verdict can legally look at.

The confirmation engine is a pure function over an EvidenceBundle, so the
bundle must carry every response, nonce, snapshot, and profile a rule needs.
This module defines those pieces plus the deterministic signal primitives:
normalized body distance, SPA shell detection, canary ownership checks,
timing comparison, and state assertions.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import html
import json
import re
import statistics
from dataclasses import dataclass, field
from typing import Any
from urllib.parse import unquote

from .transport import ResponseRecord

# Volatile content scrubbed before diffing so per-request noise never counts
# as a behavioral difference.
_ISO_TS = re.compile(
    r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:?\d{2})?"
)
_HTTP_DATE = re.compile(
    r"(?:Mon|Tue|Wed|Thu|Fri|Sat|Sun),\s\d{2}\s"
    r"(?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec)\s\d{4}\s\d{2}:\d{2}:\d{2}\sGMT"
)
_UUID = re.compile(r"\b[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}\b")
_LONG_HEX = re.compile(r"\b[0-9a-f]{16,}\b")
_PLACEHOLDER = "<VOLATILE>"
_VOLATILE_HEADERS = {"date", "set-cookie", "etag", "last-modified"}

_TOKEN = re.compile(r"\w+|[^\w\s]")
_B64_RUN = re.compile(r"[A-Za-z0-9+/_-]{20,}={0,2}")


@dataclass(frozen=True)
class NormalizationProfile:
    """What to scrub from bodies before measuring distance."""

    volatile_values: tuple[str, ...] = ()  # run nonces, issued tokens, etc.

    def normalize(self, record: ResponseRecord) -> str:
        text = record.text()
        for value in self.volatile_values:
            if value:
                text = text.replace(value, _PLACEHOLDER)
        text = _ISO_TS.sub(_PLACEHOLDER, text)
        text = _HTTP_DATE.sub(_PLACEHOLDER, text)
        text = _UUID.sub(_PLACEHOLDER, text)
        text = _LONG_HEX.sub(_PLACEHOLDER, text)
        return " ".join(text.split())

    def to_dict(self) -> dict:
        return {"volatile_values": list(self.volatile_values)}

    @staticmethod
    def from_dict(d: dict) -> "NormalizationProfile":
        return NormalizationProfile(volatile_values=tuple(d.get("volatile_values", ())))


def body_distance(a: str, b: str) -> float:
    """Token-multiset Dice distance in [0, 1]; 0 means identical.

    Symmetric by construction and deterministic; two empty bodies are
    identical, one empty body against a non-empty one is maximally distant.
    """
    ta = _TOKEN.findall(a)
    tb = _TOKEN.findall(b)
    if not ta and not tb:
        return 0.0
    if not ta or not tb:
        return 1.0
    from collections import Counter

    ca, cb = Counter(ta), Counter(tb)
    overlap = sum(min(ca[t], cb[t]) for t in ca)
    return 1.0 - (2.0 * overlap) / (len(ta) + len(tb))


@dataclass(frozen=True)
class DiffSignal:
    distance: float
    status_a: int
    status_b: int
    significant: bool

    @property
    def status_changed(self) -> bool:
        return self.status_a != self.status_b


def compare_responses(
    a: ResponseRecord,
    b: ResponseRecord,
    profile: NormalizationProfile,
    threshold: float = 0.15,
) -> DiffSignal:
    """Normalized body distance between two responses.

    Volatile headers are not part of the measure at all (bodies only); the
    status pair rides along so rules can require or forbid status changes.
    """
    dist = body_distance(profile.normalize(a), profile.normalize(b))
    return DiffSignal(
        distance=dist,
        status_a=a.status,
        status_b=b.status,
        significant=dist > threshold,
    )


@dataclass(frozen=True)
class ShellProfile:
    """Fingerprint of the SPA fallback page, taken from a nonexistent route."""

    normalized_text: str
    status: int

    def to_dict(self) -> dict:
        return {"normalized_text": self.normalized_text, "status": self.status}

    @staticmethod
    def from_dict(d: dict) -> "ShellProfile":
        return ShellProfile(normalized_text=d["normalized_text"], status=d["status"])


def detect_spa_shell(
    record: ResponseRecord,
    shell: ShellProfile | None,
    profile: NormalizationProfile,
    threshold: float = 0.05,
) -> bool | None:
    """True when the body is the app shell (or empty), None when no profile
    exists to compare against. A shell page proves nothing about data access.
    """
    if not record.body.strip():
        return True
    if shell is None:
        return None
    dist = body_distance(profile.normalize(record), shell.normalized_text)
    return dist < threshold


def _decoded_views(record: ResponseRecord) -> list[str]:
    """The raw body plus single-level decodings attackers commonly hide in."""
    raw = record.text()
    views = [raw]
    url_decoded = unquote(raw)
    if url_decoded != raw:
        views.append(url_decoded)
    unescaped = html.unescape(raw)
    if unescaped != raw:
        views.append(unescaped)
    for run in _B64_RUN.findall(raw)[:64]:
        seg = run.replace("-", "+").replace("_", "/")
        seg += "=" * (-len(seg) % 4)
        try:
            decoded = base64.b64decode(seg, validate=True)
        except (binascii.Error, ValueError):
            continue
        try:
            views.append(decoded.decode("utf-8"))
        except UnicodeDecodeError:
            continue
    return views


def contains_canary(record: ResponseRecord, nonce: str) -> bool:
    return any(nonce in view for view in _decoded_views(record))


def verify_ownership(record: ResponseRecord, nonces: tuple[str, ...] | list[str]) -> bool:
    """Does this response expose any of the given owned canary nonces?

    Matches the raw body and one decoding level (URL, HTML entity, base64)
    so encodings cannot hide a leak from the check.
    """
    return any(contains_canary(record, n) for n in nonces)


@dataclass(frozen=True)
class TimingSamples:
    baseline_ms: tuple[float, ...]
    attack_ms: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"baseline_ms": list(self.baseline_ms), "attack_ms": list(self.attack_ms)}

    @staticmethod
    def from_dict(d: dict) -> "TimingSamples":
        return TimingSamples(tuple(d["baseline_ms"]), tuple(d["attack_ms"]))


def timing_signal(
    samples: TimingSamples,
    delta_abs_ms: float = 2000.0,
    iqr_k: float = 4.0,
    baseline_min: int = 5,
    attack_min: int = 3,
) -> bool | None:
    """Median shift test with an absolute floor and a jitter-scaled floor.

    True only when median(attack) - median(baseline) clears BOTH the fixed
    delta and k times the baseline IQR. Too few samples means None, never a
    guess.
    """
    if len(samples.baseline_ms) < baseline_min or len(samples.attack_ms) < attack_min:
        return None
    base_med = statistics.median(samples.baseline_ms)
    atk_med = statistics.median(samples.attack_ms)
    q = statistics.quantiles(samples.baseline_ms, n=4, method="inclusive")
    iqr = q[2] - q[0]
    return (atk_med - base_med) >= max(delta_abs_ms, iqr_k * iqr)


# State snapshots map "session:path:json_path" to the numeric value observed.
Snapshot = dict[str, float]


@dataclass(frozen=True)
class StateAssertion:
    """An invariant over pre/post snapshots whose violation is the proof.

    kinds:
      non_negative   post[key] >= 0
      not_increased  post[key] <= pre[key]
      not_decreased  post[key] >= pre[key]
      unchanged      post[key] == pre[key]
      sum_unchanged  sum(post[keys]) == sum(pre[keys])  (within epsilon)
    """

    kind: str
    keys: tuple[str, ...]
    epsilon: float = 1e-9

    def evaluate(self, pre: Snapshot, post: Snapshot) -> bool | None:
        """True = violated, False = held, None = snapshot incomplete."""
        for key in self.keys:
            if key not in post or (self.kind != "non_negative" and key not in pre):
                return None
        if self.kind == "non_negative":
            return any(post[k] < -self.epsilon for k in self.keys)
        if self.kind == "not_increased":
            return any(post[k] > pre[k] + self.epsilon for k in self.keys)
        if self.kind == "not_decreased":
            return any(post[k] < pre[k] - self.epsilon for k in self.keys)
        if self.kind == "unchanged":
            return any(abs(post[k] - pre[k]) > self.epsilon for k in self.keys)
        if self.kind == "sum_unchanged":
            return abs(sum(post[k] for k in self.keys) - sum(pre[k] for k in self.keys)) > self.epsilon
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "keys": list(self.keys), "epsilon": self.epsilon}

    @staticmethod
    def from_dict(d: dict) -> "StateAssertion":
        return StateAssertion(kind=d["kind"], keys=tuple(d["keys"]), epsilon=d.get("epsilon", 1e-9))


@dataclass(frozen=True)
class MarkerSpec:
    """What a content proof must (and must not) find in the attack response.

    quote_guard counts only occurrences of the marker outside single quotes,
    so a payload echoed back inside a JSON string cannot confirm. html_only
    gates the proof on a text/html content type (script in a JSON body does
    not execute). reflection_markers must appear in the baseline response to
    prove the parameter reflects at all.
    """

    expected: str
    quote_guard: bool = False
    html_only: bool = False
    absent_literal: str | None = None
    reflection_markers: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "expected": self.expected,
            "quote_guard": self.quote_guard,
            "html_only": self.html_only,
            "absent_literal": self.absent_literal,
            "reflection_markers": list(self.reflection_markers),
        }

    @staticmethod
    def from_dict(d: dict) -> "MarkerSpec":
        return MarkerSpec(
            expected=d["expected"],
            quote_guard=d.get("quote_guard", False),
            html_only=d.get("html_only", False),
            absent_literal=d.get("absent_literal"),
            reflection_markers=tuple(d.get("reflection_markers", ())),
        )


def marker_proof(attack: ResponseRecord, baseline: ResponseRecord | None, spec: MarkerSpec) -> bool | None:
    """Evaluate a content proof; None when required responses are missing."""
    if attack.status == 0:
        return None
    text = attack.text()
    if spec.html_only:
        ctype = (attack.header("Content-Type") or "").lower()
        if not ctype.startswith("text/html"):
            return False
    if spec.quote_guard:
        bare = text.count(spec.expected) - text.count(f"'{spec.expected}'")
        if bare <= 0:
            return False
    elif spec.expected not in text:
        return False
    if spec.absent_literal and spec.absent_literal in text:
        return False
    if spec.reflection_markers:
        if baseline is None:
            return None
        if baseline.status == 0:
            return None
        base_text = baseline.text()
        if not any(m in base_text for m in spec.reflection_markers):
            return False
    return True


@dataclass(frozen=True)
class CaseRef:
    """Identity of the test case a bundle came from."""

    case_id: str
    family: str
    endpoint: str  # "METHOD /template"
    parameter: str  # param name or "-"
    technique: str = ""
    acting_session: str = ""
    victim_session: str = ""
    payload: str = ""

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "family": self.family,
            "endpoint": self.endpoint,
            "parameter": self.parameter,
            "technique": self.technique,
            "acting_session": self.acting_session,
            "victim_session": self.victim_session,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: dict) -> "CaseRef":
        return CaseRef(
            case_id=d["case_id"],
            family=d["family"],
            endpoint=d["endpoint"],
            parameter=d["parameter"],
            technique=d.get("technique", ""),
            acting_session=d.get("acting_session", ""),
            victim_session=d.get("victim_session", ""),
            payload=d.get("payload", ""),
        )


@dataclass
class EvidenceBundle:
    """Everything one verdict may be computed from. Self-contained: the
    confirmation engine reads nothing outside this object and the static
    rule table.
    """

    case: CaseRef
    attack: list[ResponseRecord] = field(default_factory=list)
    baseline: ResponseRecord | None = None
    reference: ResponseRecord | None = None
    victim_nonces: tuple[str, ...] = ()
    shell_profile: ShellProfile | None = None
    normalization: NormalizationProfile = field(default_factory=NormalizationProfile)
    markers: MarkerSpec | None = None
    timing: TimingSamples | None = None
    pre_state: Snapshot | None = None
    post_state: Snapshot | None = None
    assertions: tuple[StateAssertion, ...] = ()
    callback_hits: tuple[str, ...] | None = None  # nonces seen by the listener
    expected_nonce: str | None = None  # ssrf correlation nonce
    origin_sent: str | None = None  # cors probe Origin header
    evidence_kinds: tuple[str, ...] = ()  # which staged evidence this bundle carries; () = all
    notes: str = ""

    @property
    def family(self) -> str:
        return self.case.family

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "case": self.case.to_dict(),
            "attack": [r.to_dict() for r in self.attack],
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "reference": self.reference.to_dict() if self.reference else None,
            "victim_nonces": list(self.victim_nonces),
            "shell_profile": self.shell_profile.to_dict() if self.shell_profile else None,
            "normalization": self.normalization.to_dict(),
            "markers": self.markers.to_dict() if self.markers else None,
            "timing": self.timing.to_dict() if self.timing else None,
            "pre_state": self.pre_state,
            "post_state": self.post_state,
            "assertions": [a.to_dict() for a in self.assertions],
            "callback_hits": list(self.callback_hits) if self.callback_hits is not None else None,
            "expected_nonce": self.expected_nonce,
            "origin_sent": self.origin_sent,
            "evidence_kinds": list(self.evidence_kinds),
            "notes": self.notes,
        }

    @staticmethod
    def from_dict(d: dict) -> "EvidenceBundle":
        return EvidenceBundle(
            case=CaseRef.from_dict(d["case"]),
            attack=[ResponseRecord.from_dict(r) for r in d["attack"]],
            baseline=ResponseRecord.from_dict(d["baseline"]) if d.get("baseline") else None,
            reference=ResponseRecord.from_dict(d["reference"]) if d.get("reference") else None,
            victim_nonces=tuple(d.get("victim_nonces", ())),
            shell_profile=ShellProfile.from_dict(d["shell_profile"]) if d.get("shell_profile") else None,
            normalization=NormalizationProfile.from_dict(d.get("normalization", {})),
            markers=MarkerSpec.from_dict(d["markers"]) if d.get("markers") else None,
            timing=TimingSamples.from_dict(d["timing"]) if d.get("timing") else None,
            pre_state=d.get("pre_state"),
            post_state=d.get("post_state"),
            assertions=tuple(StateAssertion.from_dict(a) for a in d.get("assertions", ())),
            callback_hits=tuple(d["callback_hits"]) if d.get("callback_hits") is not None else None,
            expected_nonce=d.get("expected_nonce"),
            origin_sent=d.get("origin_sent"),
            evidence_kinds=tuple(d.get("evidence_kinds", ())),
            notes=d.get("notes", ""),
        )
