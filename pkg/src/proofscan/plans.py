"""Per-family test planners.

A planner turns the endpoint inventory plus run context (sessions, canary
ledger, config) into concrete TestCase objects. Planners are pure: they do
no I/O, so plans are reproducible and budget truncation is deterministic.
Execution shapes are small in number; the `kind` field tells the executor
which shape a case is.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

from .config import ScanConfig, StateProbe
from .inventory import Endpoint, EndpointInventory, ParamKind, ParamLocation, ParamSpec
from .payloads import FamilyLadder, LadderContext, load_ladders
from .sessions import CanaryLedger, SessionContext
from .tokens import DEFAULT_KID_CANDIDATES, DEFAULT_WEAK_SECRETS, ForgeTechnique

EVIL_ORIGIN = "https://evil.example"

_TRANSFER_DEST_NAMES = {"to", "dest", "destination", "recipient", "to_account", "target", "beneficiary"}


@dataclass(frozen=True)
class TestCase:
    """One planned check; `data` holds the kind-specific details."""

    __test__ = False  # not a pytest class

    case_id: str
    family: str
    kind: str
    endpoint: str  # "METHOD /template"
    parameter: str  # param name or "-"
    acting_session: str
    victim_session: str = ""
    data: dict = field(default_factory=dict)

    def probe_key(self, probe: StateProbe) -> str:
        return f"{probe.session}:{probe.path}:{probe.json_path}"


def _base_value(param: ParamSpec) -> str:
    if param.example is not None:
        return str(param.example)
    if param.kind == ParamKind.RESOURCE_ID or param.type in ("integer", "number"):
        return "1"
    if param.kind == ParamKind.FILENAME:
        return "readme.txt"
    if param.kind == ParamKind.URL:
        return "https://example.com/"
    return "test"


def example_body(ep: Endpoint) -> dict:
    """A valid-looking JSON body built from declared examples and types."""
    body: dict[str, Any] = {}
    for p in ep.params_in(ParamLocation.BODY):
        if p.example is not None:
            body[p.name] = p.example
        elif p.type == "integer":
            body[p.name] = 1
        elif p.type == "number":
            body[p.name] = 1.0
        elif p.type == "boolean":
            body[p.name] = True
        else:
            body[p.name] = _base_value(p)
    return body


def example_query(ep: Endpoint) -> dict:
    return {
        p.name: _base_value(p)
        for p in ep.params_in(ParamLocation.QUERY)
        if p.required or p.example is not None
    }


def fill_path(ep: Endpoint, values: dict[str, str] | None = None) -> str:
    path = ep.path
    for p in ep.params_in(ParamLocation.PATH):
        value = (values or {}).get(p.name, _base_value(p))
        path = path.replace("{" + p.name + "}", str(value))
    return path


class _CaseIds:
    def __init__(self, family: str):
        self.family = family
        self._n = itertools.count(1)

    def next(self) -> str:
        return f"{self.family}-{next(self._n):04d}"


def plan_idor(
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    ledger: CanaryLedger,
    config: ScanConfig,
) -> list[TestCase]:
    """Cross-account reads of canary-seeded resources.

    For every (victim, attacker) ordered pair of authenticated users, fetch
    each victim-owned canary resource as the attacker. Proof comes from the
    canary nonce, so only seeded resources are worth a case.
    """
    ids = _CaseIds("idor")
    users = [c for c in contexts.values() if c.verified and not c.is_anonymous and c.role == "user"]
    cases: list[TestCase] = []
    for victim, attacker in itertools.permutations(users, 2):
        for entry in ledger.owned_by(victim.name):
            template = _template_for(inventory, entry.method, entry.path) or entry.path
            cases.append(
                TestCase(
                    case_id=ids.next(),
                    family="idor",
                    kind="idor_read",
                    endpoint=f"{entry.method} {template}",
                    parameter=_path_param_name(inventory, entry.method, template),
                    acting_session=attacker.name,
                    victim_session=victim.name,
                    data={"path": entry.path, "method": entry.method, "nonce": entry.nonce},
                )
            )
    return cases


def _template_for(inventory: EndpointInventory, method: str, concrete: str) -> str | None:
    parts = concrete.strip("/").split("/")
    for ep in inventory.endpoints:
        if ep.method != method:
            continue
        t_parts = ep.path.strip("/").split("/")
        if len(t_parts) != len(parts):
            continue
        if all(tp.startswith("{") or tp == cp for tp, cp in zip(t_parts, parts)):
            return ep.path
    return None


def _path_param_name(inventory: EndpointInventory, method: str, template: str) -> str:
    ep = inventory.find(method, template)
    if ep:
        names = [p.name for p in ep.params_in(ParamLocation.PATH)]
        if names:
            return names[0]
    return "-"


def plan_authn_bypass(
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    ledger: CanaryLedger,
    config: ScanConfig,
) -> list[TestCase]:
    """Forged-token access to authenticated endpoints.

    One case per (endpoint, technique); the executor forges from the victim
    session's real token and compares against that session's own response
    (parity) and the anonymous response (distinctness).
    """
    ids = _CaseIds("authn_bypass")
    victim = _primary_user(contexts)
    if victim is None or not victim.token:
        return []
    targets: list[tuple[str, str]] = []
    for ep in inventory.endpoints:
        if ep.method == "GET" and ep.requires_auth and not ep.params_in(ParamLocation.PATH):
            targets.append((f"{ep.method} {ep.path}", fill_path(ep)))
    for entry in ledger.owned_by(victim.name):
        template = _template_for(inventory, entry.method, entry.path) or entry.path
        targets.append((f"{entry.method} {template}", entry.path))

    techniques: list[dict] = [
        {"technique": ForgeTechnique.SIGNATURE_STRIP.value},
        {"technique": ForgeTechnique.ALG_NONE.value},
    ]
    for cand in DEFAULT_KID_CANDIDATES:
        techniques.append({"technique": ForgeTechnique.KID_PATH_TRAVERSAL.value, "kid_path": cand.path})
    for secret in DEFAULT_WEAK_SECRETS:
        techniques.append({"technique": ForgeTechnique.RESIGN_WEAK_KEY.value, "weak_secret": secret})

    cases = []
    for endpoint, concrete in targets:
        for tech in techniques:
            cases.append(
                TestCase(
                    case_id=ids.next(),
                    family="authn_bypass",
                    kind="forged_token",
                    endpoint=endpoint,
                    parameter="-",
                    acting_session=victim.name,
                    victim_session=victim.name,
                    data={"path": concrete, "method": endpoint.split(" ", 1)[0], **tech},
                )
            )
    return cases


def _primary_user(contexts: dict[str, SessionContext]) -> SessionContext | None:
    for c in contexts.values():
        if c.verified and c.role == "user" and c.token:
            return c
    for c in contexts.values():
        if c.verified and not c.is_anonymous and c.token:
            return c
    return None


def _admin(contexts: dict[str, SessionContext]) -> SessionContext | None:
    for c in contexts.values():
        if c.verified and c.role == "admin":
            return c
    return None


def plan_bac(
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    config: ScanConfig,
) -> list[TestCase]:
    """Vertical access: a plain user calling admin-looking endpoints, judged
    by parity with the real admin's response."""
    ids = _CaseIds("broken_access_control")
    user = _primary_user(contexts)
    admin = _admin(contexts)
    if user is None or admin is None:
        return []
    cases = []
    for ep in inventory.endpoints:
        if ep.method != "GET" or ep.params_in(ParamLocation.PATH):
            continue
        if "/admin" not in ep.path and "manage" not in ep.path:
            continue
        cases.append(
            TestCase(
                case_id=ids.next(),
                family="broken_access_control",
                kind="vertical_access",
                endpoint=ep.key,
                parameter="-",
                acting_session=user.name,
                victim_session=admin.name,
                data={"path": fill_path(ep), "method": ep.method},
            )
        )
    return cases


def _injection_params(ep: Endpoint, ladder: FamilyLadder) -> list[ParamSpec]:
    out = []
    for p in ep.params:
        if p.location.value not in ladder.locations:
            continue
        if p.kind.value in ladder.param_kinds:
            out.append(p)
    return out


def plan_injection(
    family: str,
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    config: ScanConfig,
) -> list[TestCase]:
    """One ladder-walk case per (endpoint, injectable parameter).

    The executor performs the escalation (detect pair, content candidates,
    timing for sqli) inside the case so stage gating stays next to the
    requests it gates.
    """
    ladders = load_ladders()
    ladder = ladders.get(family)
    if ladder is None:
        return []
    ids = _CaseIds(family)
    actor = _primary_user(contexts)
    actor_name = actor.name if actor else _anonymous_name(contexts)
    cases = []
    for ep in inventory.endpoints:
        # Mutating verbs are fair game for injection only when the endpoint
        # accepts a body; GET query params are the primary surface.
        for param in _injection_params(ep, ladder):
            if param.location == ParamLocation.PATH and family != "path_traversal":
                continue
            cases.append(
                TestCase(
                    case_id=ids.next(),
                    family=family,
                    kind="injection_ladder",
                    endpoint=ep.key,
                    parameter=param.name,
                    acting_session=actor_name,
                    data={
                        "method": ep.method,
                        "template": ep.path,
                        "location": param.location.value,
                        "base_value": _base_value(param),
                    },
                )
            )
    return cases


def _anonymous_name(contexts: dict[str, SessionContext]) -> str:
    for c in contexts.values():
        if c.is_anonymous:
            return c.name
    return "anonymous"


def plan_business_logic(
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    config: ScanConfig,
) -> list[TestCase]:
    """Negative quantity and amount submissions on state-mutating endpoints.

    The proof is a state assertion: the acting user's tracked balances must
    not increase from submitting a negative value.
    """
    ladder = load_ladders().get("business_logic")
    actor = _primary_user(contexts)
    if ladder is None or actor is None or not config.state_probes:
        return []
    ids = _CaseIds("business_logic")
    probe_keys = [
        f"{p.session}:{p.path}:{p.json_path}" for p in config.state_probes if p.session == actor.name
    ]
    if not probe_keys:
        return []
    cases = []
    for ep in inventory.endpoints:
        if not ep.mutates_state:
            continue
        for param in ep.params:
            if param.kind.value not in ladder.param_kinds:
                continue
            if param.location.value not in ladder.locations:
                continue
            for mut in ladder.mutations:
                if mut["kind"] != param.kind.value:
                    continue
                cases.append(
                    TestCase(
                        case_id=ids.next(),
                        family="business_logic",
                        kind="state_mutation",
                        endpoint=ep.key,
                        parameter=param.name,
                        acting_session=actor.name,
                        data={
                            "method": ep.method,
                            "template": ep.path,
                            "location": param.location.value,
                            "value": mut["value"],
                            "assertions": [
                                {"kind": "not_increased", "keys": probe_keys},
                            ],
                        },
                    )
                )
    return cases


def plan_race(
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    config: ScanConfig,
) -> list[TestCase]:
    """Same-request bursts against mutating money/quantity endpoints.

    Conservation (sum across tracked balances) is asserted only for
    transfer-shaped endpoints, where the money has nowhere untracked to go;
    everything else gets the weaker non-negativity assertion.
    """
    actor = _primary_user(contexts)
    if actor is None or not config.state_probes:
        return []
    ids = _CaseIds("race_condition")
    all_keys = [f"{p.session}:{p.path}:{p.json_path}" for p in config.state_probes]
    cases = []
    for ep in inventory.endpoints:
        if not ep.mutates_state or ep.method != "POST":
            continue
        body_params = ep.params_in(ParamLocation.BODY)
        has_value = any(p.kind in (ParamKind.AMOUNT, ParamKind.QUANTITY) for p in body_params)
        if not has_value:
            continue
        has_dest = any(p.name.lower() in _TRANSFER_DEST_NAMES for p in body_params)
        assertions: list[dict] = [{"kind": "non_negative", "keys": all_keys}]
        if has_dest:
            assertions.append({"kind": "sum_unchanged", "keys": all_keys})
        cases.append(
            TestCase(
                case_id=ids.next(),
                family="race_condition",
                kind="burst",
                endpoint=ep.key,
                parameter="-",
                acting_session=actor.name,
                data={
                    "method": ep.method,
                    "template": ep.path,
                    "assertions": assertions,
                    "attempts": config.race_attempts,
                },
            )
        )
    return cases


def plan_ssrf(
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    config: ScanConfig,
) -> list[TestCase]:
    """URL-parameter fetches pointed at the out-of-band listener."""
    ids = _CaseIds("ssrf")
    actor = _primary_user(contexts)
    actor_name = actor.name if actor else _anonymous_name(contexts)
    cases = []
    for ep in inventory.endpoints:
        for param in ep.params:
            if param.kind != ParamKind.URL or param.location == ParamLocation.HEADER:
                continue
            cases.append(
                TestCase(
                    case_id=ids.next(),
                    family="ssrf",
                    kind="oob_fetch",
                    endpoint=ep.key,
                    parameter=param.name,
                    acting_session=actor_name,
                    data={
                        "method": ep.method,
                        "template": ep.path,
                        "location": param.location.value,
                    },
                )
            )
    return cases


def plan_cors(
    inventory: EndpointInventory,
    contexts: dict[str, SessionContext],
    config: ScanConfig,
) -> list[TestCase]:
    """Foreign-origin probes looking for credentialed cross-origin grants."""
    ids = _CaseIds("cors")
    actor = _primary_user(contexts)
    actor_name = actor.name if actor else _anonymous_name(contexts)
    cases = []
    for ep in inventory.endpoints:
        if ep.method != "GET" or ep.params_in(ParamLocation.PATH):
            continue
        cases.append(
            TestCase(
                case_id=ids.next(),
                family="cors",
                kind="origin_probe",
                endpoint=ep.key,
                parameter="-",
                acting_session=actor_name,
                data={"method": ep.method, "template": ep.path, "origin": EVIL_ORIGIN},
            )
        )
    return cases


def apply_budgets(cases: list[TestCase], per_endpoint: int, per_family: int) -> tuple[list[TestCase], int]:
    """Deterministic truncation; returns (kept, dropped_count)."""
    kept: list[TestCase] = []
    by_endpoint: dict[str, int] = {}
    dropped = 0
    for case in cases:
        if len(kept) >= per_family:
            dropped += 1
            continue
        n = by_endpoint.get(case.endpoint, 0)
        if n >= per_endpoint:
            dropped += 1
            continue
        by_endpoint[case.endpoint] = n + 1
        kept.append(case)
    return kept, dropped
