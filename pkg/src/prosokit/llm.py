"""Chat-completion backends: HTTP with retry/backoff, and a deterministic mock.

The HTTP backend speaks the common chat-completions JSON shape
(``POST {base_url}/chat/completions`` with a ``messages`` array) so it
works against hosted APIs and locally served models alike.  Transient
failures (transport errors, 429, 5xx) are retried with exponential
backoff and full jitter; authentication failures and context-window
overflows are never retried.

The mock backend answers from a digest-keyed fixture table and makes the
whole pipeline runnable offline and bit-reproducibly: identical prompts
always get identical responses.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .prompting import Prompt


class LLMClientError(RuntimeError):
    """Base class for completion failures."""


class AuthFailure(LLMClientError):
    """Credentials rejected; retrying cannot help."""


class ContextOverflow(LLMClientError):
    """Prompt exceeds the model's context window; retrying cannot help."""


class Exhausted(LLMClientError):
    """All retry attempts were spent."""


class FixtureMiss(LLMClientError):
    """Mock backend has no canned response for this prompt."""


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = "http://localhost:8000/v1"
    model_name: str = "default"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    request_timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    api_key_env: str = "LLM_API_KEY"

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    finish_reason: str  # "stop" | "length" | "error"
    latency: float
    attempt_count: int
    error: str | None = None


class Backend(Protocol):
    def complete(self, prompt: Prompt, *, prefix: str | None = None) -> CompletionResult: ...


class TranscriptWriter:
    """Appends request/response pairs as JSON lines (thread-safe).

    Timing is deliberately not recorded so transcripts from identical
    mock runs compare byte-for-byte.
    """

    def __init__(self, path) -> None:
        self._path = path
        self._lock = threading.Lock()

    def record(self, prompt: Prompt, prefix: str | None, result: CompletionResult, model: str) -> None:
        entry = {
            "digest": prompt.digest(),
            "model": model,
            "messages": prompt.as_dicts(),
            "prefix": prefix,
            "text": result.text,
            "finish_reason": result.finish_reason,
            "attempt_count": result.attempt_count,
            "error": result.error,
        }
        line = json.dumps(entry, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}
_CONTEXT_HINTS = ("context_length_exceeded", "context length", "maximum context")


class HttpBackend:
    """Chat-completions client with bounded retries.

    A custom ``transport`` can be injected for tests (httpx.MockTransport).
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        transcript: TranscriptWriter | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self._transcript = transcript
        self._sleep = sleep
        self._client = httpx.Client(
            transport=transport, timeout=config.request_timeout
        )

    def _payload(self, prompt: Prompt, prefix: str | None) -> dict[str, object]:
        messages = prompt.as_dicts()
        if prefix is not None:
            messages = messages + [{"role": "assistant", "content": prefix}]
        return {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        }

    def complete(self, prompt: Prompt, *, prefix: str | None = None) -> CompletionResult:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        key = cfg.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = self._payload(prompt, prefix)
        started = time.monotonic()
        last_error: str = "no attempt made"
        for attempt in range(1, cfg.max_retries + 2):
            try:
                resp = self._client.post(url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    result = self._parse_response(resp, started, attempt)
                    if self._transcript:
                        self._transcript.record(prompt, prefix, result, cfg.model_name)
                    return result
                if resp.status_code in (401, 403):
                    raise AuthFailure(f"authentication failed ({resp.status_code})")
                body = resp.text
                if resp.status_code == 400 and any(h in body for h in _CONTEXT_HINTS):
                    raise ContextOverflow("prompt exceeds the model context window")
                if resp.status_code not in _RETRYABLE_STATUS:
                    raise LLMClientError(f"HTTP {resp.status_code}: {body[:200]}")
                last_error = f"HTTP {resp.status_code}"
            if attempt <= cfg.max_retries:
                # full jitter: uniform over [0, base * 2^attempt)
                self._sleep(random.uniform(0, cfg.backoff_base * (2**attempt)))
        raise Exhausted(f"gave up after {cfg.max_retries + 1} attempts: {last_error}")

    def _parse_response(self, resp: httpx.Response, started: float, attempt: int) -> CompletionResult:
        data = resp.json()
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise LLMClientError(f"malformed completion response: {exc}")
        finish = choice.get("finish_reason") or "stop"
        return CompletionResult(
            text=text,
            finish_reason=finish if finish in ("stop", "length") else "stop",
            latency=time.monotonic() - started,
            attempt_count=attempt,
        )


class MockBackend:
    """Deterministic backend answering from a prompt-digest fixture table.

    ``fallback`` is either ``"fail"`` (unseen prompts raise FixtureMiss)
    or a callable ``(prompt) -> text`` for programmatic mocks.  A
    simulated per-request latency can be set for concurrency tests.
    ``prefix`` is ignored for lookup: fixtures store the continuation.
    """

    def __init__(
        self,
        fixtures: Mapping[str, str] | None = None,
        fallback: str | Callable[[Prompt], str] = "fail",
        latency: float = 0.0,
        transcript: TranscriptWriter | None = None,
    ) -> None:
        self.fixtures = dict(fixtures or {})
        self.fallback = fallback
        self.latency = latency
        self._transcript = transcript
        self._call_lock = threading.Lock()
        self.call_count = 0

    def complete(self, prompt: Prompt, *, prefix: str | None = None) -> CompletionResult:
        with self._call_lock:
            self.call_count += 1
        if self.latency > 0:
            time.sleep(self.latency)
        digest = prompt.digest()
        if digest in self.fixtures:
            text = self.fixtures[digest]
        elif callable(self.fallback):
            text = self.fallback(prompt)
        else:
            raise FixtureMiss(f"no fixture for prompt digest {digest[:12]}…")
        result = CompletionResult(text, "stop", self.latency, 1)
        if self._transcript:
            self._transcript.record(prompt, prefix, result, "mock")
        return result


def complete(prompt: Prompt, config: BackendConfig, **backend_kwargs) -> CompletionResult:
    """One-shot HTTP completion."""
    return HttpBackend(config, **backend_kwargs).complete(prompt)


def complete_batch(
    backend: Backend,
    prompts: Sequence[Prompt],
    parallelism: int = 4,
    prefixes: Sequence[str | None] | None = None,
) -> list[CompletionResult]:
    """Run prompts with bounded concurrency, preserving input order.

    Per-item failures become error results; the batch always completes.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    if prefixes is not None and len(prefixes) != len(prompts):
        raise ValueError("prefixes must match prompts in length")

    def run_one(index: int) -> CompletionResult:
        prefix = prefixes[index] if prefixes is not None else None
        try:
            return backend.complete(prompts[index], prefix=prefix)
        except Exception as exc:  # error results, not batch aborts
            return CompletionResult("", "error", 0.0, 1, error=f"{type(exc).__name__}: {exc}")

    if not prompts:
        return []
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(run_one, range(len(prompts))))
