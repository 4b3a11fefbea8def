"""Deterministic stand-in for an LLM completion service.

Modes:

``echo``      reply with the user text.
``canned``    reply looked up by the SHA-256 of the user text, else a default.
``scripted``  play back a fixed list of ``(status, text)`` responses in order,
              repeating the last one once the script runs out.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .client import LLMProtocolError, decode_request, encode_response


def text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class StubBehavior:
    mode: str = "echo"
    canned: dict[str, str] = field(default_factory=dict)
    default_reply: str = ""
    script: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("echo", "canned", "scripted"):
            raise ValueError(f"unknown stub mode {self.mode!r}")
        if self.mode == "scripted" and not self.script:
            raise ValueError("scripted mode needs at least one response")

    @classmethod
    def from_file(cls, path) -> StubBehavior:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        script = [(int(s["status"]), s.get("text", "")) for s in data.get("script", [])]
        return cls(data.get("mode", "echo"), dict(data.get("canned", {})), data.get("default_reply", ""), script)


class StubServer:
    """Runs in a background thread; records every request it receives."""

    def __init__(self, behavior: StubBehavior | None = None, host: str = "127.0.0.1", port: int = 0):
        self.behavior = behavior or StubBehavior()
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler_class())
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/"

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def _respond(self, body: bytes) -> tuple[int, bytes]:
        try:
            model, system, user = decode_request(body)
        except (LLMProtocolError, ValueError) as exc:
            return 400, json.dumps({"error": str(exc)}).encode()
        b = self.behavior
        with self._lock:
            index = len(self.requests)
            self.requests.append({"model": model, "system": system, "user": user})
        if b.mode == "echo":
            return 200, encode_response(user)
        if b.mode == "canned":
            return 200, encode_response(b.canned.get(text_key(user), b.default_reply))
        status, text = b.script[min(index, len(b.script) - 1)]
        if 200 <= status < 300:
            return status, encode_response(text)
        return status, text.encode("utf-8")

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                status, payload = server._respond(self.rfile.read(length))
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, fmt, *args):
                pass

        return Handler

    def start(self) -> StubServer:
        self._thread = threading.Thread(target=self._httpd.serve_forever, args=(0.05,), daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> StubServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
