"""Named authenticated sessions and canary seeding.

A scan acts as several principals at once (two users, an admin, an
anonymous caller). Each gets a SessionContext holding its live token, and
each authenticated user plants canary nonces in resources it creates so
cross-account reads can be proven by content instead of guessed from status
codes.
"""

from __future__ import annotations

import logging
import secrets
import threading
from dataclasses import dataclass, field

from .config import LoginFlow, SessionSpec
from .errors import CanarySeedError, CredentialError, TokenNotHonoredError
from .inventory import EndpointInventory, ParamKind, ParamLocation
from .transport import HttpEngine, Redactor

log = logging.getLogger(__name__)

CANARY_BITS = 128  # nonce entropy; the ledger enforces a 96-bit floor
_MIN_CANARY_BITS = 96


def mint_canary() -> str:
    return "cnr" + secrets.token_hex(CANARY_BITS // 8)


@dataclass
class SessionContext:
    """One live principal: who we are and what we own."""

    name: str
    role: str
    spec: SessionSpec | None = None
    login: LoginFlow | None = None
    token: str | None = None
    token_kind: str | None = None  # "bearer" | "cookie"
    cookie_name: str = "session"
    verified: bool = False
    identity: dict | None = None  # body of the verification probe
    redactor: Redactor | None = None

    @property
    def is_anonymous(self) -> bool:
        return self.role == "anonymous"

    def refresh(self, engine: HttpEngine) -> None:
        """Re-login with the stored credentials; used on mid-run 401s."""
        if self.spec is None or self.login is None or self.is_anonymous:
            return
        _login(engine, self)


def _json_path(doc, path: str):
    node = doc
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def _login(engine: HttpEngine, ctx: SessionContext) -> None:
    flow = ctx.login
    spec = ctx.spec
    assert flow is not None and spec is not None
    body = {flow.username_field: spec.username, flow.password_field: spec.password}
    rec = engine.execute(
        flow.method,
        flow.path,
        json_body=body,
        role="session",
        case_id=f"login:{ctx.name}",
        allow_reauth=False,
        sensitive_response=True,
    )
    if rec.status == 0:
        raise CredentialError(f"login for {ctx.name!r} failed at transport: {rec.error}")
    if not rec.ok:
        raise CredentialError(f"login for {ctx.name!r} rejected with status {rec.status}")
    doc = rec.json()
    token = _json_path(doc, flow.token_path) if doc is not None else None
    if not isinstance(token, str) or not token:
        raise CredentialError(
            f"login for {ctx.name!r} returned no token at path {flow.token_path!r}"
        )
    ctx.token = token
    ctx.token_kind = flow.scheme
    ctx.cookie_name = flow.cookie_name
    if ctx.redactor is not None:
        ctx.redactor.add_secret(token)


def establish_context(
    engine: HttpEngine,
    spec: SessionSpec,
    flow: LoginFlow,
    redactor: Redactor | None = None,
) -> SessionContext:
    """Log in (or stay anonymous) and verify the session actually works.

    Anonymous contexts verify the opposite way: the identity probe must NOT
    accept them. A verification failure is fatal for the session because
    every downstream verdict would inherit the broken assumption.
    """
    ctx = SessionContext(
        name=spec.name, role=spec.role, spec=spec, login=flow, redactor=redactor
    )
    if redactor is not None and spec.password:
        redactor.add_secret(spec.password)
    if spec.api_key and redactor is not None:
        redactor.add_secret(spec.api_key)

    if spec.role == "anonymous":
        if flow.verify_path:
            rec = engine.execute(
                flow.verify_method, flow.verify_path, role="session",
                case_id=f"verify:{spec.name}", allow_reauth=False,
            )
            if rec.ok:
                raise TokenNotHonoredError(
                    f"identity probe {flow.verify_path} accepted an unauthenticated call"
                )
        ctx.verified = True
        return ctx

    if spec.api_key:
        ctx.token = spec.api_key
        ctx.token_kind = "bearer"
    else:
        _login(engine, ctx)

    if flow.verify_path:
        rec = engine.execute(
            flow.verify_method, flow.verify_path, ctx=ctx, role="session",
            case_id=f"verify:{spec.name}", allow_reauth=False,
        )
        if not rec.ok:
            raise TokenNotHonoredError(
                f"token for {spec.name!r} rejected by {flow.verify_path} with {rec.status}"
            )
        ctx.identity = rec.json()
    ctx.verified = True
    return ctx


@dataclass(frozen=True)
class CanaryEntry:
    nonce: str
    owner: str  # session name
    method: str
    path: str  # concrete read-back path, e.g. /notes/7
    field: str  # which body field carries the nonce
    resource_id: str | None = None


@dataclass
class CanaryLedger:
    """All planted canaries for one run, keyed by nonce.

    Nonces are fixed-length hex from a CSPRNG, so distinctness implies no
    nonce is a substring of another; both properties are still checked on
    every insert because the ledger is the root of ownership verdicts.
    """

    entries: dict[str, CanaryEntry] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, entry: CanaryEntry) -> None:
        bits = (len(entry.nonce) - 3) * 4  # hex chars after the prefix
        if bits < _MIN_CANARY_BITS:
            raise CanarySeedError(f"canary {entry.nonce!r} has only {bits} bits of entropy")
        with self._lock:
            if entry.nonce in self.entries:
                raise CanarySeedError(f"duplicate canary nonce {entry.nonce!r}")
            for other in self.entries:
                if entry.nonce in other or other in entry.nonce:
                    raise CanarySeedError("canary nonces must not contain one another")
            self.entries[entry.nonce] = entry

    def owned_by(self, session_name: str) -> list[CanaryEntry]:
        with self._lock:
            return [e for e in self.entries.values() if e.owner == session_name]

    def nonces_of(self, session_name: str) -> tuple[str, ...]:
        return tuple(e.nonce for e in self.owned_by(session_name))

    def merge(self, other: "CanaryLedger") -> None:
        for e in other.entries.values():
            self.add(e)

    def to_dict(self) -> dict:
        return {
            n: {
                "owner": e.owner,
                "method": e.method,
                "path": e.path,
                "field": e.field,
                "resource_id": e.resource_id,
            }
            for n, e in sorted(self.entries.items())
        }


def _creation_endpoints(inventory: EndpointInventory):
    """POST endpoints with a writable text field and a sibling item GET."""
    out = []
    for ep in inventory.endpoints:
        if ep.method != "POST" or "{" in ep.path:
            continue
        text_fields = [
            p for p in ep.params_in(ParamLocation.BODY)
            if p.kind == ParamKind.FREE_TEXT
        ]
        if not text_fields:
            continue
        sibling = None
        for other in inventory.endpoints:
            if (
                other.method == "GET"
                and other.path.startswith(ep.path + "/{")
                and other.path.count("/") == ep.path.count("/") + 1
            ):
                sibling = other
                break
        out.append((ep, text_fields[0], sibling))
    return out


def _example_body(ep) -> dict:
    body = {}
    for p in ep.params_in(ParamLocation.BODY):
        if p.example is not None:
            body[p.name] = p.example
        elif p.type == "integer":
            body[p.name] = 1
        elif p.type == "number":
            body[p.name] = 1.0
        elif p.type == "boolean":
            body[p.name] = True
        elif p.required:
            body[p.name] = "sample"
    return body


def seed_canaries(
    engine: HttpEngine,
    ctx: SessionContext,
    inventory: EndpointInventory,
    per_resource: int = 2,
    ledger: CanaryLedger | None = None,
) -> CanaryLedger:
    """Create resources as ctx with embedded nonces and verify read-back.

    Only canaries whose nonce was read back through the owner's own session
    enter the ledger; a planted-but-unverified canary proves nothing. Raises
    CanarySeedError when nothing could be planted at all.
    """
    ledger = ledger if ledger is not None else CanaryLedger()
    if ctx.is_anonymous:
        return ledger
    planted_before = len(ledger.owned_by(ctx.name))

    for ep, text_field, sibling in _creation_endpoints(inventory):
        for _ in range(per_resource):
            nonce = mint_canary()
            body = _example_body(ep)
            base_text = str(body.get(text_field.name) or "note")
            body[text_field.name] = f"{base_text} {nonce}"
            created = engine.execute(
                "POST", ep.path, ctx=ctx, json_body=body,
                case_id=f"seed:{ctx.name}", role="seed", family=None,
            )
            if not created.ok:
                log.info("canary create on %s as %s got %s", ep.path, ctx.name, created.status)
                break
            doc = created.json()
            rid = None
            if isinstance(doc, dict):
                for key in ("id", "note_id", "order_id", "uuid"):
                    if key in doc:
                        rid = str(doc[key])
                        break
            location = created.header("Location")
            if rid is None and location:
                rid = location.rstrip("/").rsplit("/", 1)[-1]
            if sibling is None or rid is None:
                # No way to address the resource; the POST echo alone cannot
                # prove a later cross-session read, so skip it.
                continue
            path_param = sibling.params_in(ParamLocation.PATH)
            if not path_param:
                continue
            read_path = sibling.path.replace("{" + path_param[0].name + "}", rid)
            back = engine.execute(
                "GET", read_path, ctx=ctx,
                case_id=f"seed:{ctx.name}", role="seed", family=None,
            )
            if back.ok and nonce in back.text():
                ledger.add(
                    CanaryEntry(
                        nonce=nonce, owner=ctx.name, method="GET",
                        path=read_path, field=text_field.name, resource_id=rid,
                    )
                )
            else:
                log.info("canary read-back on %s as %s failed (%s)", read_path, ctx.name, back.status)

    if not ledger.entries and planted_before == 0 and _creation_endpoints(inventory):
        raise CanarySeedError(f"no canary could be planted for session {ctx.name!r}")
    return ledger
