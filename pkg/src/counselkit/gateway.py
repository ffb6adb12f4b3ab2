"""Uniform chat-completion interface: deterministic scripted backend plus HTTP.

Backends implement a single ``send`` attempt; ``complete`` wraps it with the
retry policy (transient transport errors only, bounded attempts, exponential
backoff). Provider rejections are terminal and never retried. The scripted
backend replays fixture replies keyed by stage and a per-session cursor,
which is what makes whole-system transcripts reproducible in tests.
"""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import yaml

from .errors import (
    ConfigurationError,
    FixtureError,
    GatewayRejectionError,
    GatewayTransportError,
    ScriptExhaustedError,
    ValidationError,
)
from .reasoning import GenerationParams

logger = logging.getLogger(__name__)

DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_S = (0.5, 1.0, 2.0)

PURPOSE_REPLY = "reply"
PURPOSE_EXTRACT = "extract"

# Scripted replies may embed this token to echo the injected rationale,
# which lets end-to-end tests confirm the reply is grounded in the chain.
RATIONALE_TOKEN = "<<RATIONALE>>"
_RATIONALE_LINE = re.compile(r"^RATIONALE: (.*)$", re.MULTILINE)


@dataclass(frozen=True)
class CompletionRequest:
    request_id: str
    session_id: str
    stage_ordinal: int
    prompt_text: str
    params: GenerationParams
    timeout: float = 30.0
    purpose: str = PURPOSE_REPLY

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValidationError("request timeout must be positive")

    @property
    def script_key(self) -> str:
        return PURPOSE_EXTRACT if self.purpose == PURPOSE_EXTRACT else str(self.stage_ordinal)


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend_id: str
    latency: float
    input_tokens: int
    output_tokens: int


class Backend(Protocol):
    backend_id: str

    def send(self, request: CompletionRequest) -> CompletionResponse:  # pragma: no cover
        ...


def complete(request: CompletionRequest, backend: Backend, *,
             max_retries: int = DEFAULT_MAX_RETRIES,
             backoff_s: tuple[float, ...] = DEFAULT_BACKOFF_S,
             sleep: Callable[[float], None] = time.sleep) -> CompletionResponse:
    """Send with bounded retries on transient failures.

    At most ``max_retries`` attempts are made; delays come from
    ``backoff_s`` in order. 4xx-class rejections and exhausted scripts
    surface immediately.
    """
    if max_retries < 1:
        raise ConfigurationError("max_retries must be >= 1")
    last_error: GatewayTransportError | None = None
    for attempt in range(max_retries):
        try:
            return backend.send(request)
        except GatewayTransportError as exc:
            last_error = exc
            if attempt + 1 < max_retries:
                delay = backoff_s[min(attempt, len(backoff_s) - 1)] if backoff_s else 0.0
                logger.warning("gateway attempt %d failed (%s); retrying in %.1fs",
                               attempt + 1, exc, delay)
                sleep(delay)
    assert last_error is not None
    raise last_error


def _approx_tokens(text: str) -> int:
    # Rough 4-chars-per-token accounting; only used for bookkeeping.
    return max(0, len(text) // 4)


class ScriptedBackend:
    """Replays fixture replies keyed by (stage, per-session cursor).

    Within one session the n-th request for a stage always gets the n-th
    scripted reply, so identical user scripts produce identical transcripts.
    With ``cycle`` off, running past the end of a stage's list raises
    ``ScriptExhaustedError`` (a test-harness bug, not a user error).
    """

    backend_id = "scripted"

    def __init__(self, script: dict[str, list[str]], cycle: bool = False):
        if not script:
            raise ConfigurationError("scripted backend needs a non-empty script")
        self.script = {str(k): list(v) for k, v in script.items()}
        self.cycle = cycle
        self._cursors: dict[tuple[str, str], int] = {}

    def send(self, request: CompletionRequest) -> CompletionResponse:
        key = request.script_key
        replies = self.script.get(key)
        if not replies:
            raise ScriptExhaustedError(f"no scripted replies for stage key {key!r}")
        cursor_key = (request.session_id, key)
        cursor = self._cursors.get(cursor_key, 0)
        if cursor >= len(replies):
            if not self.cycle:
                raise ScriptExhaustedError(
                    f"script exhausted for stage key {key!r} at cursor {cursor}")
            cursor = cursor % len(replies)
        self._cursors[cursor_key] = self._cursors.get(cursor_key, 0) + 1
        text = replies[cursor]
        if RATIONALE_TOKEN in text:
            match = _RATIONALE_LINE.search(request.prompt_text)
            rationale = match.group(1) if match else ""
            text = text.replace(RATIONALE_TOKEN, rationale)
        return CompletionResponse(
            text=text,
            backend_id=self.backend_id,
            latency=0.0,
            input_tokens=_approx_tokens(request.prompt_text),
            output_tokens=_approx_tokens(text),
        )

    def reset(self, session_id: str | None = None) -> None:
        if session_id is None:
            self._cursors.clear()
        else:
            for key in [k for k in self._cursors if k[0] == session_id]:
                del self._cursors[key]


def load_llm_script(path: str | Path) -> ScriptedBackend:
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"LLM script file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise FixtureError(f"cannot parse LLM script {path}: {exc}")
    stages = data.get("stages")
    if not stages:
        raise FixtureError(f"LLM script {path} defines no stage replies")
    return ScriptedBackend(
        script={str(k): [str(t) for t in v] for k, v in stages.items()},
        cycle=bool(data.get("cycle", False)),
    )


class HttpBackend:
    """Provider-style chat-completion endpoint over HTTP.

    Credentials come from the environment (``auth_env`` names the variable);
    they are never read from configuration files. 5xx and transport errors
    are retryable; 4xx is a terminal rejection.
    """

    backend_id = "http"

    def __init__(self, url: str, model: str, auth_env: str = "LLM_API_KEY",
                 auth_header: str = "Authorization", auth_scheme: str = "Bearer"):
        self.url = url
        self.model = model
        self.auth_env = auth_env
        self.auth_header = auth_header
        self.auth_scheme = auth_scheme

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env, "")
        if token:
            value = f"{self.auth_scheme} {token}".strip()
            headers[self.auth_header] = value
        return headers

    def send(self, request: CompletionRequest) -> CompletionResponse:
        import httpx

        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        }
        started = time.monotonic()
        try:
            response = httpx.post(self.url, json=payload,
                                  headers=self._headers(), timeout=request.timeout)
        except httpx.HTTPError as exc:
            raise GatewayTransportError(f"transport failure: {exc}") from exc
        latency = time.monotonic() - started
        if 400 <= response.status_code < 500:
            raise GatewayRejectionError(
                f"provider rejected request: HTTP {response.status_code}",
                status_code=response.status_code)
        if response.status_code >= 500:
            raise GatewayTransportError(f"provider error: HTTP {response.status_code}")
        data = response.json()
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayRejectionError(f"malformed provider response: {exc}")
        usage = data.get("usage", {})
        return CompletionResponse(
            text=text,
            backend_id=self.backend_id,
            latency=latency,
            input_tokens=int(usage.get("prompt_tokens", _approx_tokens(request.prompt_text))),
            output_tokens=int(usage.get("completion_tokens", _approx_tokens(text))),
        )


class RecordingBackend:
    """Wraps another backend and records the exact prompt bytes sent."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.sent: list[tuple[str, str]] = []

    def send(self, request: CompletionRequest) -> CompletionResponse:
        self.sent.append((request.request_id, request.prompt_text))
        return self.inner.send(request)


def extraction_request(user_text: str, factor_ids: list[str],
                       turn_index: int) -> CompletionRequest:
    """Prompt asking the model to tag known factors as a JSON object."""
    prompt = (
        "Identify which of the following factors the message asserts, and "
        "with what value (true/false/\"unknown\" or a string). Reply with a "
        "single JSON object mapping factor ids to values; use {} when none "
        "apply.\n"
        f"Factors: {', '.join(factor_ids)}\n"
        f"Message: {user_text}"
    )
    return CompletionRequest(
        request_id=f"extract-{turn_index}",
        session_id="extraction",
        stage_ordinal=0,
        prompt_text=prompt,
        params=GenerationParams(temperature=0.0, max_tokens=200),
        purpose=PURPOSE_EXTRACT,
    )
