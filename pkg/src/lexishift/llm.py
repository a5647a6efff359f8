"""Minimal OpenAI-compatible chat-completions client with retry and a JSONL audit log."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, TypeVar

import httpx

from lexishift.errors import LLMError

log = logging.getLogger(__name__)

ENV_BASE_URL = "LEXI_LLM_BASE_URL"
ENV_API_KEY = "LEXI_LLM_API_KEY"
ENV_MODEL = "LEXI_LLM_MODEL"
DEFAULT_MAX_IN_FLIGHT = 4

_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class ChatReply:
    content: str
    finish_reason: str | None = None


class AuditLog:
    """Append-only JSONL record of every prompt and raw reply."""

    def __init__(self, path: str | os.PathLike) -> None:
        self.path = path
        self._lock = threading.Lock()
        self._fh = open(path, "a", encoding="utf-8", newline="\n")

    def write(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "AuditLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class ChatClient:
    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        temperature: float = 0.0,
        timeout: float = 120.0,
        max_retries: int = 5,
        backoff: float = 1.0,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transport: httpx.BaseTransport | None = None,
        audit: AuditLog | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not base_url:
            raise LLMError(f"no chat endpoint configured (set {ENV_BASE_URL})")
        if not model:
            raise LLMError(f"no model configured (set {ENV_MODEL})")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_in_flight = max_in_flight
        self.audit = audit
        self._sleep = sleep
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None, **kwargs) -> "ChatClient":
        env = os.environ if env is None else env
        return cls(
            env.get(ENV_BASE_URL, ""),
            env.get(ENV_MODEL, ""),
            env.get(ENV_API_KEY) or None,
            **kwargs,
        )

    def close(self) -> None:
        self._http.close()

    def chat(self, prompt: str, *, tag: str = "chat", meta: dict | None = None) -> ChatReply:
        """Send one user message; retries transport errors and 429/5xx with backoff."""
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        url = f"{self.base_url}/chat/completions"
        delay = self.backoff
        last = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                log.warning("chat request failed (%s); retry %d in %.1fs", last, attempt, delay)
                self._sleep(delay)
                delay *= 2
            try:
                resp = self._http.post(url, json=body)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in _RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise LLMError(f"chat endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
            reply = _parse_reply(resp)
            if self.audit is not None:
                self.audit.write({
                    "tag": tag, "model": self.model, "prompt": prompt,
                    "reply": reply.content, "finish_reason": reply.finish_reason, **(meta or {}),
                })
            return reply
        raise LLMError(f"chat endpoint unreachable after {self.max_retries} retries ({last})")

    def complete(self, prompt: str, **kwargs) -> str:
        return self.chat(prompt, **kwargs).content

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Apply ``fn`` with at most ``max_in_flight`` concurrent calls; order preserved."""
        items = list(items)
        if self.max_in_flight <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(fn, items))


def _parse_reply(resp: httpx.Response) -> ChatReply:
    try:
        payload = resp.json()
        choice = payload["choices"][0]
    except (ValueError, KeyError, IndexError, TypeError):
        raise LLMError(f"malformed chat reply: {resp.text[:200]}") from None
    message = choice.get("message") or {}
    content = message.get("content") or ""
    return ChatReply(content, choice.get("finish_reason"))
