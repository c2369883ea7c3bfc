"""HTTP transport shared by the LLM adapters: retries, typed errors and the
on-disk request cache.

Every request is keyed by ``sha256(endpoint + canonical JSON payload)`` and
stored as one JSON file per key. In replay mode the cache is the only
source of responses and a miss is an error, so replayed campaigns never
touch the network.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import httpx


class ServiceError(RuntimeError):
    """Base class for adapter failures."""


class TransportError(ServiceError):
    """Network failure that persisted through every retry."""


class ServiceHTTPError(ServiceError):
    def __init__(self, status: int, endpoint: str, body: str = ""):
        super().__init__(f"{endpoint} returned HTTP {status}: {body[:200]}")
        self.status = status
        self.endpoint = endpoint


class AuthError(ServiceHTTPError):
    """401/403 from the service."""


class ClientRequestError(ServiceHTTPError):
    """Other 4xx: the request itself is wrong and retrying will not help."""


class ServerError(ServiceHTTPError):
    """5xx or 429 still failing after every retry."""


class CacheMissError(ServiceError):
    """Replay mode asked for a request that was never recorded."""


class ResponseFormatError(ServiceError):
    pass


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ServiceConfig:
    """Connection and decoding settings for one model endpoint.

    Decoding is always greedy: ``temperature`` must be 0 and sampling off,
    because the optimizer relies on repeated requests giving identical text.
    """

    base_url: str = "http://127.0.0.1:8000"
    model: str = "default"
    auth_env: str = "PREIMAGE_OPT_TOKEN"
    timeout_ms: int = 30_000
    max_retries: int = 3
    backoff_s: float = 0.5
    temperature: float = 0.0
    do_sample: bool = False
    max_new_tokens: int = 64
    cache_dir: str = ".preimage_cache"
    replay: bool = False
    parallelism: int = 4

    def __post_init__(self):
        if self.temperature != 0.0 or self.do_sample:
            raise ValueError("only greedy decoding is supported (temperature 0, no sampling)")
        if self.max_retries < 0 or self.timeout_ms <= 0 or self.parallelism < 1:
            raise ValueError("max_retries >= 0, timeout_ms > 0 and parallelism >= 1 required")

    @property
    def decode(self) -> dict:
        return {"temperature": 0.0, "do_sample": False, "max_new_tokens": self.max_new_tokens}


def payload_hash(endpoint: str, payload: dict) -> str:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(f"{endpoint}\n{body}".encode()).hexdigest()


class RequestCache:
    """One JSON file per (endpoint, payload) hash under ``root``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> dict | None:
        p = self.path(key)
        if not p.exists():
            return None
        return json.loads(p.read_text())["response"]

    def put(self, key: str, endpoint: str, payload: dict, response: dict) -> None:
        record = {"endpoint": endpoint, "payload": payload, "response": response}
        # write-then-rename so concurrent workers never see a partial file
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        with os.fdopen(fd, "w") as f:
            json.dump(record, f, sort_keys=True)
        os.replace(tmp, self.path(key))

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*.json"))


class ServiceClient:
    """JSON-over-HTTP client with caching, retry and typed errors."""

    def __init__(self, cfg: ServiceConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self.cache = RequestCache(cfg.cache_dir)
        headers = {}
        token = os.environ.get(cfg.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = None
        if not cfg.replay:
            self._http = httpx.Client(base_url=cfg.base_url, headers=headers,
                                      timeout=cfg.timeout_ms / 1000.0, transport=transport)
        self.network_calls = 0

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def post(self, endpoint: str, payload: dict) -> dict:
        key = payload_hash(endpoint, payload)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.cfg.replay:
            raise CacheMissError(f"no recorded response for {endpoint} ({key[:12]})")
        response = self._post_with_retry(endpoint, payload)
        self.cache.put(key, endpoint, payload, response)
        return response

    def _post_with_retry(self, endpoint: str, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                time.sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
            try:
                self.network_calls += 1
                r = self._http.post(endpoint, json=payload)
            except httpx.TransportError as exc:
                last = exc
                continue
            if r.status_code in _RETRYABLE_STATUS:
                last = ServerError(r.status_code, endpoint, r.text)
                continue
            if r.status_code in (401, 403):
                raise AuthError(r.status_code, endpoint, r.text)
            if not 200 <= r.status_code < 300:
                raise ClientRequestError(r.status_code, endpoint, r.text)
            try:
                return r.json()
            except ValueError as exc:
                raise ResponseFormatError(f"{endpoint} returned non-JSON body") from exc
        if isinstance(last, ServerError):
            raise last
        raise TransportError(f"{endpoint} unreachable after {self.cfg.max_retries + 1} "
                             f"attempts: {last}") from last
