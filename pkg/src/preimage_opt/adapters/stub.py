"""Reference stub server speaking the adapter wire schemas.

Runs on a background thread with the standard library HTTP server. The
default handlers are deterministic: generation buckets the soft prompt by
the signs of its first coordinates, embeddings are a fixed random
projection and chat replies echo a lookup table.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

import numpy as np


def sign_bucket_text(soft_prompt: list[float], n_bits: int = 3) -> str:
    bits = "".join("1" if v >= 0 else "0" for v in soft_prompt[:n_bits])
    return f"  Rewrite the input   following pattern {bits}. "


class StubServer:
    """Context manager serving ``/v1/generate``, ``/v1/embed`` and
    ``/v1/chat/completions`` on ``127.0.0.1`` with an ephemeral port.

    ``fail_first`` makes the first N requests answer ``fail_status`` to
    exercise retry paths.
    """

    def __init__(self, generate: Callable[[dict], str] | None = None,
                 embed: Callable[[dict], list] | None = None,
                 chat: Callable[[str], str] | None = None,
                 width: int = 8, fail_first: int = 0, fail_status: int = 503):
        self.width = width
        self.generate = generate or (lambda p: sign_bucket_text(p["soft_prompt"]))
        self.embed = embed or self._default_embed
        self.chat = chat or (lambda content: "unknown")
        self.fail_first = fail_first
        self.fail_status = fail_status
        self.requests: list[tuple[str, dict]] = []
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def _default_embed(self, payload: dict) -> list:
        z = np.asarray(payload["soft_prompt"], dtype=float)
        proj = np.random.default_rng(0).standard_normal((self.width, z.size))
        return np.tanh(proj @ z / np.sqrt(max(z.size, 1))).tolist()

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def _respond(self, path: str, payload: dict) -> tuple[int, dict]:
        with self._lock:
            self.requests.append((path, payload))
            failing = len(self.requests) <= self.fail_first
        if failing:
            return self.fail_status, {"error": "injected failure"}
        if path == "/v1/generate":
            if payload.get("temperature") != 0.0 or payload.get("do_sample"):
                return 400, {"error": "stub only serves greedy decoding"}
            return 200, {"text": self.generate(payload)}
        if path == "/v1/embed":
            return 200, {"embedding": self.embed(payload)}
        if path == "/v1/chat/completions":
            content = payload["messages"][-1]["content"]
            return 200, {"choices": [{"message": {"role": "assistant",
                                                  "content": self.chat(content)}}]}
        return 404, {"error": f"no route {path}"}

    def __enter__(self) -> "StubServer":
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                status, body = stub._respond(self.path, payload)
                data = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()
