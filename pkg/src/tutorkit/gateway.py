"""Uniform chat-completion client: OpenAI-compatible HTTP backend plus
deterministic mocks for tests and simulation.

The retry policy lives in ``complete``: transient failures are retried up
to ``retry_limit`` times and then surfaced as an error-typed response;
permanent (4xx-style) failures surface immediately. Nothing here raises
past ``complete`` during normal operation.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import httpx

from .prompts import Message, MessageSequence


@dataclass(frozen=True)
class GenerationConfig:
    model_name: str = "gpt-4o-mini"
    temperature: float = 1.0
    max_output_tokens: int = 1024
    retry_limit: int = 2
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be > 0")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    finish_reason: str  # "complete" | "truncated" | "refused" | "error"
    latency_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.finish_reason == "complete" and not self.text:
            raise ValueError("complete responses must carry text")


class TransientBackendError(Exception):
    """Retryable failure (network trouble, 5xx, timeout)."""


class PermanentBackendError(Exception):
    """Non-retryable failure (bad request, auth, 4xx)."""


class Backend:
    """One generation attempt; retries are the caller's concern."""

    def generate(self, messages: MessageSequence, cfg: GenerationConfig) -> ModelResponse:
        raise NotImplementedError


def complete(backend: Backend, messages: MessageSequence, cfg: GenerationConfig) -> ModelResponse:
    """Generate with retries. Never raises for backend trouble; the failure
    mode is a finish_reason="error" response."""
    if not messages:
        raise ValueError("messages must be non-empty")
    if messages[0].role != "system":
        raise ValueError("first message must be the system prompt")
    start = time.monotonic()
    last_error = "backend failed"
    for attempt in range(cfg.retry_limit + 1):
        try:
            response = backend.generate(messages, cfg)
            return ModelResponse(
                text=response.text,
                finish_reason=response.finish_reason,
                latency_s=time.monotonic() - start,
                prompt_tokens=response.prompt_tokens,
                completion_tokens=response.completion_tokens,
            )
        except TransientBackendError as exc:
            last_error = str(exc) or "transient backend failure"
            continue
        except PermanentBackendError as exc:
            last_error = str(exc) or "permanent backend failure"
            break
    return ModelResponse(text="", finish_reason="error", latency_s=time.monotonic() - start)


def stream_complete(
    backend: Backend,
    messages: MessageSequence,
    cfg: GenerationConfig,
    chunk_chars: int = 48,
) -> Iterator[str]:
    """Yield response text as word-aligned chunks whose concatenation equals
    the final text (prefixes are monotone by construction). The final
    ModelResponse is exposed via the ``final`` attribute afterwards."""
    response = complete(backend, messages, cfg)
    stream_complete.final = response  # inspected by callers after exhaustion
    text = response.text
    pos = 0
    while pos < len(text):
        end = min(pos + chunk_chars, len(text))
        if end < len(text):
            space = text.rfind(" ", pos + 1, end + 1)
            if space > pos:
                end = space
        yield text[pos:end]
        pos = end


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

API_KEY_ENV_VARS = ("TUTORKIT_API_KEY", "OPENAI_API_KEY")


class OpenAIChatBackend(Backend):
    """OpenAI-compatible /chat/completions over HTTP; base URL configurable
    so locally hosted models work too."""

    def __init__(self, base_url: str, api_key: Optional[str] = None, client: Optional[httpx.Client] = None):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key or next(
            (os.environ[v] for v in API_KEY_ENV_VARS if os.environ.get(v)), ""
        )
        self._client = client

    def generate(self, messages: MessageSequence, cfg: GenerationConfig) -> ModelResponse:
        payload = {
            "model": cfg.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        client = self._client or httpx.Client(timeout=cfg.timeout_s)
        try:
            resp = client.post(f"{self.base_url}/chat/completions", json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"network failure: {exc}") from exc
        finally:
            if self._client is None:
                client.close()
        if resp.status_code >= 500:
            raise TransientBackendError(f"backend 5xx: {resp.status_code}")
        if resp.status_code >= 400:
            raise PermanentBackendError(f"backend {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        choice = body["choices"][0]
        text = choice["message"]["content"] or ""
        finish = choice.get("finish_reason", "stop")
        usage = body.get("usage", {})
        return ModelResponse(
            text=text,
            finish_reason={"stop": "complete", "length": "truncated",
                           "content_filter": "refused"}.get(finish, "complete"),
            prompt_tokens=usage.get("prompt_tokens", 0),
            completion_tokens=usage.get("completion_tokens", 0),
        )


def messages_digest(messages: MessageSequence) -> str:
    canonical = json.dumps([[m.role, m.content] for m in messages], ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_MOCK_BANK = (
    "Good question. 1. Look at the task description again and write down, in "
    "your own words, what the function must return for a small input you "
    "invent yourself. That is the one step to take now.",
    "Let's take one step: 1. Pick the smallest input you can think of and "
    "work out by hand what the correct output would be. Once you have that, "
    "tell me what you found.",
    "One step at a time: 1. Name the data you need to keep track of while "
    "the program runs. Write it as a comment at the top of your file.",
    "Here is your next step. 1. Split the problem into the check itself and "
    "the loop around it, and decide which one you want to build first.",
)

_REFERENCE_BLOCK_RE = re.compile(r"<<<REFERENCE\n(.*?)\nREFERENCE>>>", re.DOTALL)


def extract_reference_block(system_prompt: str) -> str:
    """Pull the private reference solution out of a rendered system prompt
    (used by adversarial mocks that simulate a leaking model)."""
    m = _REFERENCE_BLOCK_RE.search(system_prompt)
    return m.group(1) if m else ""


class MockBackend(Backend):
    """Deterministic offline backend: the response is a pure function of the
    message sequence, so replays are byte-identical. An optional ``script``
    hook may override individual responses (return None to fall through)."""

    def __init__(self, script: Optional[Callable] = None):
        self.script = script
        self.calls = 0

    def generate(self, messages: MessageSequence, cfg: GenerationConfig) -> ModelResponse:
        self.calls += 1
        if self.script is not None:
            scripted = self.script(messages)
            if scripted is not None:
                return ModelResponse(text=scripted, finish_reason="complete")
        digest = messages_digest(messages)
        text = _MOCK_BANK[int(digest[:8], 16) % len(_MOCK_BANK)]
        return ModelResponse(text=text, finish_reason="complete", completion_tokens=len(text.split()))


class FlakyBackend(Backend):
    """Wraps a backend and fails the first ``failures`` calls (for retry tests)."""

    def __init__(self, inner: Backend, failures: int):
        self.inner = inner
        self.remaining = failures
        self.attempts = 0

    def generate(self, messages: MessageSequence, cfg: GenerationConfig) -> ModelResponse:
        self.attempts += 1
        if self.remaining > 0:
            self.remaining -= 1
            raise TransientBackendError("injected transient failure")
        return self.inner.generate(messages, cfg)
