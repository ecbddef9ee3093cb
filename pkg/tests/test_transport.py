"""Transport layer tests: redaction, tracing, scope enforcement, retries,
and burst execution, driven against the local web stub."""

from __future__ import annotations

import base64
import json
import socket
import threading

import pytest

from proofscan.errors import ScopeViolation
from proofscan.transport import (
    HttpEngine,
    Redactor,
    ResponseRecord,
    TraceLog,
    request_digest,
)
from webstub import StubApp


@pytest.fixture(scope="module")
def stub():
    with StubApp(set()) as app:
        yield app


class TestRedactor:
    def test_text_and_bytes(self):
        r = Redactor(["hunter2"])
        assert r.scrub_text("pw is hunter2!") == "pw is [REDACTED]!"
        assert r.scrub_bytes(b"pw is hunter2!") == b"pw is [REDACTED]!"

    def test_sensitive_headers_redacted_by_name(self):
        r = Redactor()
        out = r.scrub_headers(
            [["Authorization", "Bearer abc"], ["Cookie", "sid=1"], ["Accept", "json"]]
        )
        assert out == [
            ["Authorization", "[REDACTED]"],
            ["Cookie", "[REDACTED]"],
            ["Accept", "json"],
        ]

    def test_secret_inside_base64_body(self):
        r = Redactor(["hunter2"])
        encoded = base64.b64encode(b'{"password": "hunter2"}').decode()
        clean = base64.b64decode(r.scrub_body_b64(encoded))
        assert b"hunter2" not in clean
        assert b"[REDACTED]" in clean

    def test_scrub_event_walks_deep(self):
        r = Redactor(["tok-s3cret"])
        event = {
            "request": {
                "headers": [["Authorization", "Bearer tok-s3cret"]],
                "body_b64": base64.b64encode(b"x=tok-s3cret").decode(),
            },
            "note": "token tok-s3cret seen",
            "nested": [{"v": "tok-s3cret"}],
        }
        clean = r.scrub_event(event)
        as_text = json.dumps(clean)
        assert "tok-s3cret" not in as_text
        assert clean["request"]["headers"][0][1] == "[REDACTED]"

    def test_add_secret_idempotent_and_empty_ignored(self):
        r = Redactor()
        r.add_secret("")
        r.add_secret("x1")
        r.add_secret("x1")
        assert r.scrub_text("x1 x1") == "[REDACTED] [REDACTED]"


class TestTraceLog:
    def test_sequential_order_under_threads(self):
        log = TraceLog()

        def add(n):
            for _ in range(50):
                log.append({"type": "t", "worker": n})

        threads = [threading.Thread(target=add, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        seqs = [e["seq"] for e in log.events]
        assert seqs == list(range(1, 201))

    def test_sink_receives_redacted_lines(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        with open(path, "w") as sink:
            log = TraceLog(redactor=Redactor(["pw-9"]), sink=sink)
            log.append({"type": "t", "msg": "login with pw-9"})
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        event = json.loads(lines[0])
        assert event["msg"] == "login with [REDACTED]"
        assert event["seq"] == 1 and "ts" in event


class TestScope:
    def test_off_origin_rejected_before_any_socket(self, stub):
        engine = HttpEngine(stub.base_url)
        # .invalid never resolves; reaching DNS at all would error differently.
        with pytest.raises(ScopeViolation):
            engine.execute("GET", "http://other-host.invalid/steal")

    def test_excluded_paths(self, stub):
        engine = HttpEngine(stub.base_url, exclude_paths=["/reset"])
        with pytest.raises(ScopeViolation):
            engine.execute("POST", "/reset")
        with pytest.raises(ScopeViolation):
            engine.execute("POST", "/reset/deep")
        assert engine.execute("GET", "/").status == 200

    def test_extra_origin_allowlist(self, stub):
        engine = HttpEngine("http://127.0.0.1:1", allow_origins=[stub.base_url])
        rec = engine.execute("GET", stub.base_url + "/")
        assert rec.status == 200

    def test_default_port_normalization(self, stub):
        engine = HttpEngine("http://example.test")
        engine.check_scope("http://example.test:80/x")  # same origin, explicit port
        with pytest.raises(ScopeViolation):
            engine.check_scope("http://example.test:8080/x")


class TestExecute:
    def test_basic_get(self, stub):
        engine = HttpEngine(stub.base_url)
        rec = engine.execute("GET", "/")
        assert rec.ok and rec.status == 200
        assert rec.json() == {"service": "stub", "status": "ok"}
        assert rec.elapsed_ms > 0
        assert rec.request_digest == request_digest("GET", stub.base_url + "/", b"")

    def test_query_and_json_body(self, stub):
        engine = HttpEngine(stub.base_url)
        rec = engine.execute("GET", "/search", query={"q": "widget"})
        assert rec.ok
        assert "widget" in rec.text()
        token = stub.issue_token("alice")
        rec = engine.execute(
            "POST", "/notes", token_override=token, json_body={"text": "note body"}
        )
        assert rec.status == 201

    def test_token_override_header(self, stub):
        engine = HttpEngine(stub.base_url)
        token = stub.issue_token("alice")
        rec = engine.execute("GET", "/me", token_override=token)
        assert rec.ok and rec.json()["user"] == "alice"
        rec = engine.execute("GET", "/me")
        assert rec.status == 401

    def test_trace_event_per_request(self, stub):
        log = TraceLog()
        engine = HttpEngine(stub.base_url, trace=log)
        engine.execute("GET", "/", case_id="c1", family="sqli", role="baseline")
        assert len(log.events) == 1
        ev = log.events[0]
        assert ev["type"] == "request"
        assert ev["case_id"] == "c1"
        assert ev["family"] == "sqli"
        assert ev["response"]["status"] == 200

    def test_authorization_header_redacted_in_trace(self, stub):
        log = TraceLog()
        engine = HttpEngine(stub.base_url, trace=log)
        token = stub.issue_token("alice")
        engine.execute("GET", "/me", token_override=token)
        headers = dict(
            (k.lower(), v) for k, v in log.events[0]["request"]["headers"]
        )
        assert headers["authorization"] == "[REDACTED]"
        assert token not in json.dumps(log.events)

    def test_sensitive_response_withheld(self, stub):
        log = TraceLog()
        engine = HttpEngine(stub.base_url, trace=log)
        rec = engine.execute(
            "POST",
            "/auth/login",
            json_body={"username": "alice", "password": "wonderland-9-lane"},
            sensitive_response=True,
        )
        assert rec.ok  # the caller still sees the real body
        assert rec.json()["token"]
        ev = log.events[0]
        assert ev["response"]["body_b64"] == ""
        assert ev["response"]["body_withheld"] == "credential material"

    def test_transport_failure_returns_record_and_retries(self):
        # A port nothing listens on: connection refused on every attempt.
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        log = TraceLog()
        engine = HttpEngine(f"http://127.0.0.1:{port}", retries=2, trace=log, timeout_s=2.0)
        rec = engine.execute("GET", "/")
        assert rec.status == 0
        assert rec.error and "ConnectionError" in rec.error
        attempts = [e["attempt"] for e in log.events]
        assert attempts == [1, 2, 3]  # first try plus two retries

    def test_no_redirect_following(self, stub):
        # Records must show what the server said, not where a redirect leads.
        engine = HttpEngine(stub.base_url)
        rec = engine.execute("GET", "/")
        assert rec.url.endswith("/")


class TestBurst:
    def test_burst_fires_count_requests(self, stub):
        engine = HttpEngine(stub.base_url)
        token = stub.issue_token("alice")
        log_before = len(engine.trace.events)
        records = engine.burst(
            "GET",
            "/search",
            4,
            query={"q": "alpha"},
            headers={"Authorization": f"Bearer {token}"},
            settle_ms=10,
        )
        assert len(records) == 4
        assert all(r.status == 200 for r in records)
        assert len(engine.trace.events) - log_before == 4
