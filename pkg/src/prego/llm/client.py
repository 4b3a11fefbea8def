"""JSON completion client with retries.

Wire protocol: ``POST <endpoint>`` with ``{"model", "system", "user"}`` and a
``{"text"}`` reply. ``ChatCompletionsAdapter`` maps the same call onto the
common chat-completions schema for hosted services.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace

import requests

log = logging.getLogger(__name__)

ENV_ENDPOINT = "PREGO_LLM_ENDPOINT"
ENV_MODEL = "PREGO_LLM_MODEL"
ENV_API_KEY = "PREGO_LLM_API_KEY"
ENV_TIMEOUT_MS = "PREGO_LLM_TIMEOUT_MS"


class LLMError(RuntimeError):
    pass


class LLMClientError(LLMError):
    """Transport failure, timeout, or non-2xx status after all retries."""


class LLMProtocolError(LLMError):
    """The service answered, but not with a valid response envelope."""


@dataclass(frozen=True)
class ClientConfig:
    endpoint_url: str = ""
    model_name: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    max_in_flight: int = 4
    api_key: str | None = None
    backoff_base: float = 0.5
    protocol: str = "prego"

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.protocol not in ("prego", "chat"):
            raise ValueError(f"unknown protocol {self.protocol!r}")

    @classmethod
    def from_env(cls, **overrides) -> ClientConfig:
        cfg = cls(
            endpoint_url=os.environ.get(ENV_ENDPOINT, ""),
            model_name=os.environ.get(ENV_MODEL, ""),
            api_key=os.environ.get(ENV_API_KEY) or None,
        )
        if os.environ.get(ENV_TIMEOUT_MS):
            cfg = replace(cfg, timeout=float(os.environ[ENV_TIMEOUT_MS]) / 1000.0)
        return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})

    def backoff_delays(self) -> list[float]:
        return [self.backoff_base * 2**i for i in range(self.max_retries)]


def encode_request(model: str, system: str, user: str) -> bytes:
    return json.dumps({"model": model, "system": system, "user": user}, ensure_ascii=False).encode("utf-8")


def decode_request(body: bytes) -> tuple[str, str, str]:
    data = json.loads(body.decode("utf-8"))
    if not isinstance(data, dict) or not all(isinstance(data.get(k), str) for k in ("model", "system", "user")):
        raise LLMProtocolError("request must be an object with string fields model, system, user")
    return data["model"], data["system"], data["user"]


def encode_response(text: str) -> bytes:
    return json.dumps({"text": text}, ensure_ascii=False).encode("utf-8")


def decode_response(body: bytes) -> str:
    try:
        data = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LLMProtocolError(f"response is not JSON: {exc}") from None
    if not isinstance(data, dict) or not isinstance(data.get("text"), str):
        raise LLMProtocolError("response must be an object with a string field 'text'")
    return data["text"]


class ChatCompletionsAdapter:
    """Maps a completion call onto ``{"messages": [...]}`` / ``choices[0].message.content``."""

    @staticmethod
    def encode(cfg: ClientConfig, system: str, user: str) -> bytes:
        body = {
            "model": cfg.model_name,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
            "temperature": cfg.temperature,
        }
        return json.dumps(body, ensure_ascii=False).encode("utf-8")

    @staticmethod
    def decode(body: bytes) -> str:
        try:
            return json.loads(body.decode("utf-8"))["choices"][0]["message"]["content"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise LLMProtocolError(f"malformed chat-completions response: {exc!r}") from None


class CompletionClient:
    """Thread-safe client; at most ``max_in_flight`` requests run concurrently."""

    def __init__(self, cfg: ClientConfig, session: requests.Session | None = None, sleep=time.sleep):
        if not cfg.endpoint_url:
            raise LLMClientError(f"no LLM endpoint configured (set {ENV_ENDPOINT})")
        self.cfg = cfg
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)
        self._sleep = sleep
        self._lock = threading.Lock()
        self.calls = 0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        return headers

    def complete(self, system: str, user: str) -> tuple[str, float]:
        """Return the reply text and the wall-clock latency of the successful attempt."""
        cfg = self.cfg
        if cfg.protocol == "chat":
            body, decode = ChatCompletionsAdapter.encode(cfg, system, user), ChatCompletionsAdapter.decode
        else:
            body, decode = encode_request(cfg.model_name, system, user), decode_response
        delays = cfg.backoff_delays()
        last_error = ""
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self._sleep(delays[attempt - 1])
            with self._lock:
                self.calls += 1
            with self._slots:
                start = time.perf_counter()
                try:
                    resp = self.session.post(cfg.endpoint_url, data=body, headers=self._headers(), timeout=cfg.timeout)
                except requests.RequestException as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                    log.warning("LLM request failed (attempt %d): %s", attempt + 1, last_error)
                    continue
                latency = time.perf_counter() - start
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                log.warning("LLM request failed (attempt %d): %s", attempt + 1, last_error)
                continue
            if not 200 <= resp.status_code < 300:
                raise LLMClientError(f"HTTP {resp.status_code} from {cfg.endpoint_url}: {resp.text[:200]}")
            return decode(resp.content), latency
        raise LLMClientError(f"giving up on {cfg.endpoint_url} after {cfg.max_retries + 1} attempts: {last_error}")
