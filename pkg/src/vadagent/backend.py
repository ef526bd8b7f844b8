"""Chat-completion backends: an OpenAI-compatible network client and a
deterministic scripted backend for offline runs, plus structured-output
parsing shared by every caller."""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from .imaging import encode_png_base64

ROLES = ("system", "user", "assistant", "tool")


class BackendError(Exception):
    pass


class TransportError(BackendError):
    """Retryable network-level failure."""


class EndpointSchemaError(BackendError):
    """The endpoint answered with something we cannot interpret."""


class BudgetExceededError(BackendError):
    """Per-item hard cap on completion calls was hit."""


class ScriptKeyError(BackendError):
    """The scripted backend has no entry for the requested key."""


class CapabilityError(BackendError):
    """The backend lacks a capability the caller requires."""


class StructuredParseError(Exception):
    """No usable structured block in a completion; callers own the fallback."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str
    images: tuple = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"invalid role {self.role!r}")
        if self.images and self.role not in ("user", "tool"):
            raise ValueError("images are only allowed on user/tool messages")


@dataclass(frozen=True)
class BackendCapabilities:
    name: str
    supports_first_token_logprobs: bool


@dataclass(frozen=True)
class CompletionResult:
    text: str
    first_token_logprobs: Optional[dict[str, float]] = None
    usage: Optional[dict[str, int]] = None


@dataclass(frozen=True)
class CallKey:
    """Identifies one completion for scripting and per-item accounting."""

    item_id: str
    tag: str
    turn: int = 0


class CallCounter:
    """Thread-safe per-item completion counts, observable by diagnostics."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    def increment(self, item_id: str) -> int:
        with self._lock:
            self._counts[item_id] = self._counts.get(item_id, 0) + 1
            return self._counts[item_id]

    def count(self, item_id: str) -> int:
        with self._lock:
            return self._counts.get(item_id, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()


class Backend:
    """Base class: budget enforcement, accounting, capability gating.

    Subclasses implement :meth:`_complete`. Temperature is fixed at 0
    throughout; identical prompts yield identical completions on the
    scripted backend.
    """

    capabilities: BackendCapabilities

    def __init__(self, max_calls_per_item: Optional[int] = None):
        self.counter = CallCounter()
        self.max_calls_per_item = max_calls_per_item

    def complete(
        self,
        messages: Sequence[ChatMessage],
        want_logprobs: bool = False,
        key: Optional[CallKey] = None,
    ) -> CompletionResult:
        if not messages:
            raise ValueError("messages must be non-empty")
        if messages[0].role != "system":
            raise ValueError("first message must be the system prompt")
        if key is not None:
            if (
                self.max_calls_per_item is not None
                and self.counter.count(key.item_id) >= self.max_calls_per_item
            ):
                raise BudgetExceededError(
                    f"item {key.item_id}: call budget "
                    f"{self.max_calls_per_item} exhausted"
                )
            self.counter.increment(key.item_id)
        result = self._complete(messages, want_logprobs, key)
        wants = want_logprobs and self.capabilities.supports_first_token_logprobs
        if not wants and result.first_token_logprobs is not None:
            result = CompletionResult(result.text, None, result.usage)
        return result

    def _complete(self, messages, want_logprobs, key) -> CompletionResult:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Canned completions keyed by (item id, call tag, turn index).

    Safe for concurrent reads; referentially transparent by construction.
    """

    def __init__(
        self,
        script: Mapping[tuple[str, str, int], CompletionResult | dict | str],
        name: str = "scripted",
        supports_first_token_logprobs: bool = True,
        max_calls_per_item: Optional[int] = None,
    ):
        super().__init__(max_calls_per_item)
        self.capabilities = BackendCapabilities(name, supports_first_token_logprobs)
        self._script: dict[tuple[str, str, int], CompletionResult] = {}
        for k, v in script.items():
            self._script[(str(k[0]), str(k[1]), int(k[2]))] = _coerce_result(v)

    def _complete(self, messages, want_logprobs, key) -> CompletionResult:
        if key is None:
            raise ScriptKeyError("scripted backend requires a CallKey")
        k = (key.item_id, key.tag, key.turn)
        if k not in self._script:
            raise ScriptKeyError(f"no scripted completion for {k}")
        return self._script[k]

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "ScriptedBackend":
        """Load a script file: {"entries": {"item|tag|turn": {...}}, ...}."""
        raw = json.loads(Path(path).read_text())
        entries = {}
        for key_str, val in raw["entries"].items():
            item_id, tag, turn = key_str.rsplit("|", 2)
            entries[(item_id, tag, int(turn))] = val
        caps = raw.get("capabilities", {})
        kwargs.setdefault("name", caps.get("name", "scripted"))
        kwargs.setdefault(
            "supports_first_token_logprobs",
            bool(caps.get("supports_first_token_logprobs", True)),
        )
        return cls(entries, **kwargs)


def _coerce_result(value) -> CompletionResult:
    if isinstance(value, CompletionResult):
        return value
    if isinstance(value, str):
        return CompletionResult(text=value)
    if isinstance(value, Mapping):
        lp = value.get("logprobs") or value.get("first_token_logprobs")
        return CompletionResult(
            text=str(value["text"]),
            first_token_logprobs=None if lp is None else {str(t): float(p) for t, p in lp.items()},
            usage=value.get("usage"),
        )
    raise TypeError(f"cannot interpret scripted entry of type {type(value)!r}")


class RecordingBackend:
    """Wrapper capturing every (key, messages) pair; used in audits/tests."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.recorded: list[tuple[Optional[CallKey], tuple[ChatMessage, ...]]] = []
        self._lock = threading.Lock()

    @property
    def capabilities(self) -> BackendCapabilities:
        return self.inner.capabilities

    @property
    def counter(self) -> CallCounter:
        return self.inner.counter

    @property
    def max_calls_per_item(self):
        return self.inner.max_calls_per_item

    def complete(self, messages, want_logprobs=False, key=None):
        with self._lock:
            self.recorded.append((key, tuple(messages)))
        return self.inner.complete(messages, want_logprobs, key)


class OpenAICompatBackend(Backend):
    """Client for any OpenAI-compatible chat-completions endpoint.

    Auth tokens come from the named environment variable only. Transport
    failures are retried up to ``max_retries`` times with exponential
    backoff; exhaustion surfaces as :class:`TransportError` and the caller
    marks the item errored.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        auth_env: str = "VADAGENT_API_KEY",
        supports_first_token_logprobs: bool = False,
        max_calls_per_item: Optional[int] = None,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        max_image_edge: int = 1024,
        transport: Optional[Callable[[str, dict, dict], Any]] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(max_calls_per_item)
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.capabilities = BackendCapabilities(model, supports_first_token_logprobs)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.max_image_edge = max_image_edge
        self._transport = transport or self._http_post
        self._sleep = sleep

    def _http_post(self, url: str, headers: dict, payload: dict):
        import httpx

        try:
            resp = httpx.post(url, headers=headers, json=payload, timeout=self.timeout)
        except httpx.HTTPError as e:
            raise TransportError(str(e)) from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise EndpointSchemaError(f"HTTP {resp.status_code}: {resp.text[:300]}")
        return resp.json()

    def _wire_messages(self, messages: Sequence[ChatMessage]) -> list[dict]:
        wire = []
        for m in messages:
            if not m.images:
                wire.append({"role": m.role, "content": m.text})
                continue
            content: list[dict] = [{"type": "text", "text": m.text}]
            for img in m.images:
                b64 = encode_png_base64(np.asarray(img), self.max_image_edge)
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{b64}"},
                    }
                )
            wire.append({"role": m.role, "content": content})
        return wire

    def _complete(self, messages, want_logprobs, key) -> CompletionResult:
        token = os.environ.get(self.auth_env, "")
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": self._wire_messages(messages),
            "temperature": 0,
        }
        if want_logprobs and self.capabilities.supports_first_token_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = 20

        url = f"{self.endpoint}/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                data = self._transport(url, headers, payload)
                return self._parse_response(data)
            except TransportError as e:
                last_error = e
                if attempt < self.max_retries:
                    self._sleep(self.backoff_base * (2**attempt))
        raise TransportError(
            f"transport failed after {self.max_retries} retries: {last_error}"
        )

    @staticmethod
    def _parse_response(data: Any) -> CompletionResult:
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            raise EndpointSchemaError(f"malformed completion response: {e}") from e
        logprobs = None
        lp = choice.get("logprobs")
        if lp and lp.get("content"):
            first = lp["content"][0]
            logprobs = {
                alt["token"]: float(alt["logprob"])
                for alt in first.get("top_logprobs", [])
            }
            tok = first.get("token")
            if tok is not None and tok not in logprobs:
                logprobs[tok] = float(first["logprob"])
        usage = data.get("usage")
        if usage:
            usage = {
                "input_tokens": int(usage.get("prompt_tokens", 0)),
                "output_tokens": int(usage.get("completion_tokens", 0)),
            }
        return CompletionResult(text, logprobs, usage)


_JSON_DECODER = json.JSONDecoder()


def parse_structured_block(
    text: str, expected_keys: Mapping[str, Any] | Sequence[str]
) -> dict:
    """Extract the first well-formed JSON object from completion text.

    Tolerates surrounding prose and code fences by scanning every ``{`` for
    a decodable object. ``expected_keys`` maps key names to a type or tuple
    of types (``None`` checks presence only); a plain sequence of names
    checks presence only. Raises :class:`StructuredParseError` naming the
    first missing or mistyped key.
    """
    if not isinstance(expected_keys, Mapping):
        expected_keys = {k: None for k in expected_keys}
    obj = None
    pos = text.find("{")
    while pos != -1:
        try:
            candidate, _ = _JSON_DECODER.raw_decode(text, pos)
        except ValueError:
            pos = text.find("{", pos + 1)
            continue
        if isinstance(candidate, dict):
            obj = candidate
            break
        pos = text.find("{", pos + 1)
    if obj is None:
        raise StructuredParseError("no structured object found in completion")
    for k, typ in expected_keys.items():
        if k not in obj:
            raise StructuredParseError(f"structured object missing key {k!r}")
        if typ is not None:
            value = obj[k]
            if isinstance(value, bool) and bool not in _as_type_tuple(typ):
                raise StructuredParseError(f"key {k!r} has wrong type bool")
            if not isinstance(value, _as_type_tuple(typ)):
                raise StructuredParseError(
                    f"key {k!r} has wrong type {type(value).__name__}"
                )
    return obj


def _as_type_tuple(typ) -> tuple:
    return typ if isinstance(typ, tuple) else (typ,)
