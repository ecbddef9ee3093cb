"""HTTP execution: scope-checked requests, retries, tracing, redaction.

Every byte the scanner sends or receives flows through HttpEngine.execute,
which enforces the scope allowlist before the socket opens and appends one
redacted event per attempt to the run trace. Burst execution for race tests
lives here too because it is a transport concern, not a planning one.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Any
from urllib.parse import urlencode, urlsplit

import requests

from .errors import ScopeViolation

_REDACTED = "[REDACTED]"
_SENSITIVE_HEADERS = {"authorization", "cookie", "set-cookie", "x-api-key", "proxy-authorization"}


class Redactor:
    """Strips credential material from trace events.

    Secret values are registered as they come into existence (config
    passwords at startup, issued tokens after login) so every artifact
    written afterwards is clean by construction.
    """

    def __init__(self, secrets: list[str] | None = None):
        self._lock = threading.Lock()
        self._secrets: list[bytes] = []
        for s in secrets or []:
            self.add_secret(s)

    def add_secret(self, value: str) -> None:
        if not value:
            return
        with self._lock:
            raw = value.encode()
            if raw not in self._secrets:
                self._secrets.append(raw)

    def scrub_text(self, text: str) -> str:
        with self._lock:
            for s in self._secrets:
                text = text.replace(s.decode(errors="replace"), _REDACTED)
        return text

    def scrub_bytes(self, raw: bytes) -> bytes:
        with self._lock:
            for s in self._secrets:
                raw = raw.replace(s, _REDACTED.encode())
        return raw

    def scrub_headers(self, headers: list[list[str]]) -> list[list[str]]:
        out = []
        for name, value in headers:
            if name.lower() in _SENSITIVE_HEADERS:
                out.append([name, _REDACTED])
            else:
                out.append([name, self.scrub_text(value)])
        return out

    def scrub_body_b64(self, encoded: str) -> str:
        """Scrub secrets inside a base64 body, not just around it."""
        try:
            raw = base64.b64decode(encoded)
        except (binascii.Error, ValueError):
            return self.scrub_text(encoded)
        return base64.b64encode(self.scrub_bytes(raw)).decode("ascii")

    def scrub_event(self, event: dict) -> dict:
        """Deep-scrub one trace event (headers by name, bodies by value)."""
        def walk(node: Any) -> Any:
            if isinstance(node, dict):
                out = {}
                for k, v in node.items():
                    if k == "headers" and isinstance(v, list):
                        out[k] = self.scrub_headers(v)
                    elif k == "body_b64" and isinstance(v, str):
                        out[k] = self.scrub_body_b64(v)
                    else:
                        out[k] = walk(v)
                return out
            if isinstance(node, list):
                return [walk(v) for v in node]
            if isinstance(node, str):
                return self.scrub_text(node)
            return node
        return walk(event)


@dataclass(frozen=True)
class ResponseRecord:
    """One HTTP exchange as the evidence rules see it.

    status 0 with a non-empty error means the transport failed; the record
    still exists so evidence stays complete and signals can report
    'unavailable' instead of silently passing.
    """

    method: str
    url: str
    status: int
    headers: tuple[tuple[str, str], ...] = ()
    body: bytes = b""
    elapsed_ms: float = 0.0
    request_digest: str = ""
    error: str | None = None

    def header(self, name: str) -> str | None:
        name = name.lower()
        for k, v in self.headers:
            if k.lower() == name:
                return v
        return None

    def text(self) -> str:
        return self.body.decode("utf-8", errors="replace")

    def json(self) -> Any:
        try:
            return json.loads(self.body)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return None

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "url": self.url,
            "status": self.status,
            "headers": [list(h) for h in self.headers],
            "body_b64": base64.b64encode(self.body).decode("ascii"),
            "elapsed_ms": round(self.elapsed_ms, 3),
            "request_digest": self.request_digest,
            "error": self.error,
        }

    @staticmethod
    def from_dict(d: dict) -> "ResponseRecord":
        return ResponseRecord(
            method=d["method"],
            url=d["url"],
            status=d["status"],
            headers=tuple((h[0], h[1]) for h in d["headers"]),
            body=base64.b64decode(d["body_b64"]),
            elapsed_ms=d["elapsed_ms"],
            request_digest=d["request_digest"],
            error=d.get("error"),
        )


class TraceLog:
    """Append-only, totally ordered run trace.

    Events from concurrent family agents interleave; the lock plus the seq
    counter guarantee a single global order. When a sink file is attached,
    each event is redacted and written as one JSON line immediately.
    """

    def __init__(self, redactor: Redactor | None = None, sink: IO[str] | None = None):
        self._lock = threading.Lock()
        self._seq = 0
        self._redactor = redactor or Redactor()
        self._sink = sink
        self.events: list[dict] = []

    def append(self, event: dict) -> int:
        with self._lock:
            self._seq += 1
            event = dict(event)
            event["seq"] = self._seq
            event["ts"] = datetime.now(timezone.utc).isoformat()
            clean = self._redactor.scrub_event(event)
            self.events.append(clean)
            if self._sink is not None:
                self._sink.write(json.dumps(clean, sort_keys=True) + "\n")
                self._sink.flush()
            return self._seq


def _origin(url: str) -> tuple[str, str, int]:
    parts = urlsplit(url)
    port = parts.port or (443 if parts.scheme == "https" else 80)
    return (parts.scheme, (parts.hostname or "").lower(), port)


def request_digest(method: str, url: str, body: bytes) -> str:
    h = hashlib.sha256()
    h.update(method.encode())
    h.update(b"\n")
    h.update(url.encode())
    h.update(b"\n")
    h.update(body)
    return h.hexdigest()


class HttpEngine:
    """Scope-enforcing HTTP client shared by every agent in a run."""

    def __init__(
        self,
        base_url: str,
        *,
        timeout_s: float = 10.0,
        retries: int = 3,
        trace: TraceLog | None = None,
        allow_origins: list[str] | None = None,
        exclude_paths: list[str] | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.retries = retries
        self.trace = trace or TraceLog()
        self._allowed = {_origin(self.base_url)}
        for extra in allow_origins or []:
            self._allowed.add(_origin(extra))
        self._excluded = tuple(exclude_paths or [])
        self._local = threading.local()

    def allow_origin(self, url: str) -> None:
        self._allowed.add(_origin(url))

    def _session(self, fresh: bool) -> requests.Session:
        if fresh:
            s = requests.Session()
            s.trust_env = False
            return s
        s = getattr(self._local, "session", None)
        if s is None:
            s = requests.Session()
            s.trust_env = False
            self._local.session = s
        return s

    def check_scope(self, url: str) -> None:
        if _origin(url) not in self._allowed:
            raise ScopeViolation(f"request to {url} is outside the configured scope")
        path = urlsplit(url).path
        for excl in self._excluded:
            if path == excl or path.startswith(excl.rstrip("/") + "/"):
                raise ScopeViolation(f"path {path} is excluded from scan scope")

    def url_for(self, path_or_url: str) -> str:
        if path_or_url.startswith(("http://", "https://")):
            return path_or_url
        if not path_or_url.startswith("/"):
            path_or_url = "/" + path_or_url
        return self.base_url + path_or_url

    def execute(
        self,
        method: str,
        path_or_url: str,
        *,
        ctx=None,
        token_override: str | None = None,
        query: dict | None = None,
        json_body: Any = None,
        body: bytes | None = None,
        headers: dict[str, str] | None = None,
        case_id: str | None = None,
        role: str | None = None,
        family: str | None = None,
        fresh_connection: bool = False,
        allow_reauth: bool = True,
        sensitive_response: bool = False,
    ) -> ResponseRecord:
        """Send one request; returns a record even on transport failure.

        sensitive_response withholds the response body from the trace; used
        for credential exchanges whose response mints a secret the redactor
        cannot know yet.
        """
        url = self.url_for(path_or_url)
        if query:
            url = url + ("&" if "?" in url else "?") + urlencode(query)
        self.check_scope(url)

        send_headers = dict(headers or {})
        token = token_override
        scheme = "bearer"
        if token is None and ctx is not None and ctx.token:
            token = ctx.token
            scheme = ctx.token_kind or "bearer"
        elif ctx is not None:
            scheme = ctx.token_kind or "bearer"
        if token:
            if scheme == "cookie":
                send_headers["Cookie"] = f"{getattr(ctx, 'cookie_name', 'session')}={token}"
            else:
                send_headers["Authorization"] = f"Bearer {token}"

        payload: bytes
        if json_body is not None:
            payload = json.dumps(json_body).encode()
            send_headers.setdefault("Content-Type", "application/json")
        else:
            payload = body or b""

        digest = request_digest(method.upper(), url, payload)
        session = self._session(fresh_connection)
        record: ResponseRecord | None = None

        for attempt in range(1, self.retries + 2):
            started = time.perf_counter()
            error = None
            try:
                resp = session.request(
                    method.upper(),
                    url,
                    data=payload if payload else None,
                    headers=send_headers,
                    timeout=self.timeout_s,
                    allow_redirects=False,
                )
                elapsed = (time.perf_counter() - started) * 1000.0
                try:
                    raw_headers = list(resp.raw.headers.items())
                except AttributeError:
                    raw_headers = list(resp.headers.items())
                record = ResponseRecord(
                    method=method.upper(),
                    url=url,
                    status=resp.status_code,
                    headers=tuple((str(k), str(v)) for k, v in raw_headers),
                    body=resp.content,
                    elapsed_ms=elapsed,
                    request_digest=digest,
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                elapsed = (time.perf_counter() - started) * 1000.0
                error = f"{type(exc).__name__}: {exc}"
                record = ResponseRecord(
                    method=method.upper(),
                    url=url,
                    status=0,
                    elapsed_ms=elapsed,
                    request_digest=digest,
                    error=error,
                )

            resp_dict = record.to_dict()
            if sensitive_response:
                resp_dict["body_b64"] = ""
                resp_dict["body_withheld"] = "credential material"
            self.trace.append(
                {
                    "type": "request",
                    "case_id": case_id,
                    "role": role,
                    "family": family,
                    "session": getattr(ctx, "name", None),
                    "attempt": attempt,
                    "request": {
                        "method": method.upper(),
                        "url": url,
                        "headers": [[k, v] for k, v in send_headers.items()],
                        "body_b64": base64.b64encode(payload).decode("ascii"),
                    },
                    "response": resp_dict,
                    "error": error,
                }
            )
            if error is None:
                break

        assert record is not None

        # One re-login when an established session's token stops working
        # mid-run. Forged or overridden tokens never refresh; a 401 there is
        # the observation itself.
        if (
            record.status == 401
            and allow_reauth
            and token_override is None
            and ctx is not None
            and getattr(ctx, "verified", False)
            and getattr(ctx, "refresh", None) is not None
        ):
            ctx.refresh(self)
            return self.execute(
                method,
                path_or_url,
                ctx=ctx,
                query=query,
                json_body=json_body,
                body=body,
                headers=headers,
                case_id=case_id,
                role=role,
                family=family,
                fresh_connection=fresh_connection,
                allow_reauth=False,
            )
        return record

    def burst(
        self,
        method: str,
        path_or_url: str,
        count: int,
        *,
        ctx=None,
        json_body: Any = None,
        query: dict | None = None,
        headers: dict[str, str] | None = None,
        case_id: str | None = None,
        family: str | None = None,
        settle_ms: int = 500,
    ) -> list[ResponseRecord]:
        """Fire count near-simultaneous requests, then let the target settle.

        A barrier lines the worker threads up so the requests leave as one
        burst; each worker uses its own fresh connection so the server cannot
        serialize them on a single socket.
        """
        barrier = threading.Barrier(count)

        def one(i: int) -> ResponseRecord:
            barrier.wait(timeout=self.timeout_s)
            return self.execute(
                method,
                path_or_url,
                ctx=ctx,
                json_body=json_body,
                query=query,
                headers=headers,
                case_id=case_id,
                role=f"attack[{i}]",
                family=family,
                fresh_connection=True,
                allow_reauth=False,
            )

        with ThreadPoolExecutor(max_workers=count) as pool:
            records = list(pool.map(one, range(count)))
        time.sleep(settle_ms / 1000.0)
        return records
