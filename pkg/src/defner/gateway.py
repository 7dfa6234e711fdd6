"""Uniform chat-completion access over HTTP backends plus deterministic
scripted and replay backends with an on-disk record cache.

Cache layout: one append-only line-delimited file per (backend kind,
model id); each line holds {key, request, response, timestamp}. Entries
are immutable once written and appends are single atomic writes, so
concurrent writers of the same key leave one winner and no torn lines.
Credentials come only from environment variables (DEFNER_OPENAI_KEY,
DEFNER_ANTHROPIC_KEY), never from config files, so recorded fixtures
stay shareable.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import AuthFailure, ReplayMiss, ScriptExhausted, TransportFailure
from .prompting import Message

log = logging.getLogger(__name__)

BACKEND_KINDS = ("OPENAI_HTTP", "ANTHROPIC_HTTP", "OPENAI_COMPAT_HTTP", "SCRIPTED", "REPLAY")

EXTRACTION_MAX_TOKENS = 256
DEFINITION_MAX_TOKENS = 4096

_MAX_ATTEMPTS = 5
_BACKOFF_BASE = 0.5
_SAFE_NAME_RE = re.compile(r"[^\w.-]+")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = EXTRACTION_MAX_TOKENS
    stop: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    backend: str
    cached: bool = False


def _canonical_payload(req: ChatRequest) -> dict:
    return {
        "model_id": req.model_id,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "stop": list(req.stop) if req.stop else None,
    }


def canonical_request_key(req: ChatRequest) -> str:
    """Hex digest of a canonical serialization; any field change changes the key."""
    blob = json.dumps(
        _canonical_payload(req), ensure_ascii=False, separators=(",", ":"), sort_keys=True
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _estimate_tokens(req: ChatRequest, text: str) -> tuple[int, int]:
    prompt = sum(len(m.content.split()) for m in req.messages)
    return prompt, len(text.split())


class TokenBucket:
    """Requests-per-minute limiter shared by one backend instance."""

    def __init__(self, per_minute: int = 60):
        self.capacity = float(per_minute)
        self.tokens = float(per_minute)
        self.rate = per_minute / 60.0
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class ScriptedBackend:
    """Pops queued response texts strictly in order. Offline and deterministic."""

    kind = "SCRIPTED"

    def __init__(self, responses: list[str], model_id: str = "scripted-model"):
        self._queue = list(responses)
        self.model_id = model_id
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            if not self._queue:
                raise ScriptExhausted("scripted backend has no responses left")
            text = self._queue.pop(0)
            self.calls += 1
        prompt_tokens, completion_tokens = _estimate_tokens(req, text)
        return ChatResponse(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            backend=self.kind,
        )


def _cache_file(cache_dir: Path, kind: str, model_id: str) -> Path:
    safe = _SAFE_NAME_RE.sub("_", model_id) or "model"
    return cache_dir / f"{kind.lower()}__{safe}.jsonl"


def _iter_cache_entries(cache_dir: Path):
    for path in sorted(cache_dir.glob("*.jsonl")):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)


class ReplayBackend:
    """Serves responses recorded earlier; unseen requests are an error."""

    kind = "REPLAY"

    def __init__(self, cache_dir: str | Path, model_id: str = ""):
        self.cache_dir = Path(cache_dir)
        self.model_id = model_id
        self.calls = 0
        self._entries: dict[str, dict] = {}
        if self.cache_dir.is_dir():
            for entry in _iter_cache_entries(self.cache_dir):
                self._entries.setdefault(entry["key"], entry)

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = canonical_request_key(req)
        entry = self._entries.get(key)
        if entry is None:
            raise ReplayMiss(f"no cached response for request key {key}")
        self.calls += 1
        resp = entry["response"]
        return ChatResponse(
            text=resp["text"],
            prompt_tokens=int(resp.get("prompt_tokens", 0)),
            completion_tokens=int(resp.get("completion_tokens", 0)),
            backend=resp.get("backend", self.kind),
            cached=True,
        )


class RecordingBackend:
    """Write-through recorder: every completed request lands in the cache."""

    def __init__(self, inner, cache_dir: str | Path):
        self.inner = inner
        self.kind = inner.kind
        self.model_id = inner.model_id
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._path = _cache_file(self.cache_dir, inner.kind, inner.model_id)
        self._lock = threading.Lock()
        self._seen: set[str] = set()
        if self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._seen.add(json.loads(line)["key"])

    def complete(self, req: ChatRequest) -> ChatResponse:
        resp = self.inner.complete(req)
        key = canonical_request_key(req)
        with self._lock:
            if key not in self._seen:
                entry = {
                    "key": key,
                    "request": _canonical_payload(req),
                    "response": {
                        "text": resp.text,
                        "prompt_tokens": resp.prompt_tokens,
                        "completion_tokens": resp.completion_tokens,
                        "backend": resp.backend,
                    },
                    "timestamp": time.time(),
                }
                line = json.dumps(entry, ensure_ascii=False) + "\n"
                fd = os.open(self._path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
                try:
                    os.write(fd, line.encode("utf-8"))
                finally:
                    os.close(fd)
                self._seen.add(key)
        return resp


class _HttpBackend:
    """Shared retry/backoff/rate-limit machinery for HTTP chat APIs."""

    kind = "HTTP"

    def __init__(
        self,
        model_id: str,
        base_url: str,
        requests_per_minute: int = 60,
        max_inflight: int = 4,
    ):
        self.model_id = model_id
        self.base_url = base_url.rstrip("/")
        self.bucket = TokenBucket(requests_per_minute)
        self._inflight = threading.BoundedSemaphore(max_inflight)
        self.calls = 0

    def _post(self, url: str, headers: dict, payload: dict):
        import requests

        last_exc: Exception | None = None
        for attempt in range(_MAX_ATTEMPTS):
            if attempt:
                time.sleep(_BACKOFF_BASE * (2 ** (attempt - 1)))
            self.bucket.acquire()
            try:
                resp = requests.post(url, headers=headers, json=payload, timeout=120)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"{url}: HTTP {resp.status_code}")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = TransportFailure(f"{url}: HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportFailure(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            return resp.json()
        raise TransportFailure(f"{url}: giving up after {_MAX_ATTEMPTS} attempts ({last_exc})")

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._inflight:
            self.calls += 1
            return self._complete(req)

    def _complete(self, req: ChatRequest) -> ChatResponse:  # pragma: no cover - abstract
        raise NotImplementedError


class OpenAIBackend(_HttpBackend):
    kind = "OPENAI_HTTP"
    env_key = "DEFNER_OPENAI_KEY"

    def __init__(self, model_id: str, base_url: str = "https://api.openai.com/v1", **kw):
        super().__init__(model_id, base_url, **kw)
        self.api_key = os.environ.get(self.env_key, "")
        if not self.api_key:
            raise AuthFailure(f"{self.env_key} is not set")

    def _complete(self, req: ChatRequest) -> ChatResponse:
        payload = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.stop:
            payload["stop"] = list(req.stop)
        data = self._post(
            f"{self.base_url}/chat/completions",
            {"Authorization": f"Bearer {self.api_key}"},
            payload,
        )
        usage = data.get("usage", {})
        return ChatResponse(
            text=data["choices"][0]["message"]["content"] or "",
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            backend=self.kind,
        )


class OpenAICompatBackend(OpenAIBackend):
    """Any server speaking the chat-completions wire shape (base URL required)."""

    kind = "OPENAI_COMPAT_HTTP"

    def __init__(self, model_id: str, base_url: str, **kw):
        if not base_url:
            raise ValueError("OPENAI_COMPAT_HTTP needs an explicit base URL")
        super().__init__(model_id, base_url=base_url, **kw)


class AnthropicBackend(_HttpBackend):
    kind = "ANTHROPIC_HTTP"
    env_key = "DEFNER_ANTHROPIC_KEY"

    def __init__(self, model_id: str, base_url: str = "https://api.anthropic.com", **kw):
        super().__init__(model_id, base_url, **kw)
        self.api_key = os.environ.get(self.env_key, "")
        if not self.api_key:
            raise AuthFailure(f"{self.env_key} is not set")

    def _complete(self, req: ChatRequest) -> ChatResponse:
        system_parts = [m.content for m in req.messages if m.role == "system"]
        payload = {
            "model": req.model_id,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "messages": [
                {"role": m.role, "content": m.content}
                for m in req.messages
                if m.role != "system"
            ],
        }
        if system_parts:
            payload["system"] = "\n".join(system_parts)
        if req.stop:
            payload["stop_sequences"] = list(req.stop)
        data = self._post(
            f"{self.base_url}/v1/messages",
            {"x-api-key": self.api_key, "anthropic-version": "2023-06-01"},
            payload,
        )
        usage = data.get("usage", {})
        return ChatResponse(
            text="".join(part.get("text", "") for part in data.get("content", [])),
            prompt_tokens=int(usage.get("input_tokens", 0)),
            completion_tokens=int(usage.get("output_tokens", 0)),
            backend=self.kind,
        )


def complete(req: ChatRequest, backend) -> ChatResponse:
    return backend.complete(req)


def usage_report(responses) -> dict:
    """Sum request and token counts per backend, cached traffic partitioned out."""
    totals: dict[str, dict[str, dict[str, int]]] = {}
    for resp in responses:
        bucket = totals.setdefault(
            resp.backend,
            {
                "live": {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0},
                "cached": {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0},
            },
        )
        side = bucket["cached" if resp.cached else "live"]
        side["requests"] += 1
        side["prompt_tokens"] += resp.prompt_tokens
        side["completion_tokens"] += resp.completion_tokens
    return totals
