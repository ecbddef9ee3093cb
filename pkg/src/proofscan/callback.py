"""Out-of-band callback listener for SSRF proof.

The scanner hands the target a URL pointing here with a per-case nonce in
the path; a hit on that nonce is positive evidence the server fetched it.
The listener never initiates traffic and stays inside the sandbox loopback
by default.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


@dataclass(frozen=True)
class CallbackHit:
    nonce: str
    ts: str
    client: str


class CallbackListener:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._hits: list[CallbackHit] = []
        self._lock = threading.Lock()
        listener = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 - stdlib naming
                nonce = self.path.strip("/").split("/")[-1]
                with listener._lock:
                    listener._hits.append(
                        CallbackHit(
                            nonce=nonce,
                            ts=datetime.now(timezone.utc).isoformat(),
                            client=self.client_address[0],
                        )
                    )
                self.send_response(200)
                self.send_header("Content-Type", "text/plain")
                self.end_headers()
                self.wfile.write(b"ok")

            def log_message(self, *args):  # silence stderr noise
                return

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def host(self) -> str:
        return self._server.server_address[0]

    def url_for(self, nonce: str) -> str:
        return f"http://{self.host}:{self.port}/cb/{nonce}"

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def hits(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(h.nonce for h in self._hits)

    def wait_for(self, nonce: str, timeout_s: float = 2.0) -> bool:
        import time

        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if any(nonce == h for h in self.hits()):
                return True
            time.sleep(0.05)
        return False
