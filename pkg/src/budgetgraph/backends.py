"""Model backends: the call interface, a scripted mock, and a chat-completions client."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Callable, Protocol

import httpx

from .errors import HttpStatus, MalformedResponse, ScenarioParseError, Timeout
from .graph import Tier, TokenUsage


@dataclass
class Generation:
    text: str
    usage: TokenUsage
    diagnostics: dict[str, Any] = field(default_factory=dict)


class ModelBackend(Protocol):
    name: str
    tier: Tier

    def generate(self, prompt: str, system: str = "", max_tokens: int = 1024,
                 temperature: float = 0.0, seed: int | None = None) -> Generation: ...

    def count_input(self, prompt: str, system: str = "") -> int:
        """Input tokens the call would be charged, used for admission before dispatch."""
        ...


def full_prompt(prompt: str, system: str = "") -> str:
    return f"{system}\n\n{prompt}" if system else prompt


def approx_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass
class BackendSet:
    small: ModelBackend
    medium: ModelBackend
    large: ModelBackend

    def __post_init__(self):
        for b in (self.small, self.medium, self.large):
            if b is None:
                raise ValueError("all three backends are required")

    def for_tier(self, tier: Tier) -> ModelBackend:
        return {Tier.SMALL: self.small, Tier.MEDIUM: self.medium, Tier.LARGE: self.large}[tier]

    @classmethod
    def uniform(cls, backend: ModelBackend) -> "BackendSet":
        return cls(backend, backend, backend)


# ---------------------------------------------------------------------------
# mock
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Rule:
    match: str
    kind: str
    reply: tuple[str, ...]
    usage: tuple[int, int] | None


def _parse_usage(obj, where: str):
    if obj is None:
        return None
    try:
        u_in, u_out = int(obj["in"]), int(obj["out"])
    except (KeyError, TypeError, ValueError):
        raise ScenarioParseError(f"{where}: usage must be {{\"in\": int, \"out\": int}}") from None
    if u_in < 0 or u_out < 0:
        raise ScenarioParseError(f"{where}: usage must be non-negative")
    return u_in, u_out


def _parse_reply(obj, where: str) -> tuple[str, ...]:
    if isinstance(obj, str):
        return (obj,)
    if isinstance(obj, list) and obj and all(isinstance(r, str) for r in obj):
        return tuple(obj)
    raise ScenarioParseError(f"{where}: reply must be a string or a non-empty list of strings")


class MockBackend:
    """Deterministic scripted backend.

    Rules are tried in order against ``system + prompt``; the first match
    answers. A reply given as a list is picked by a hash of ``(seed, prompt)``.
    Without an explicit usage the call is charged ``ceil(len/4)`` tokens for
    input and output. Output never exceeds ``max_tokens``; clamped replies are
    truncated and flagged.
    """

    def __init__(self, scenario: dict, seed: int = 0, name: str = "mock",
                 tier: Tier = Tier.LARGE):
        if not isinstance(scenario, dict):
            raise ScenarioParseError("scenario must be a JSON object")
        rules = scenario.get("rules", [])
        if not isinstance(rules, list):
            raise ScenarioParseError("'rules' must be a list")
        self.rules = []
        for i, r in enumerate(rules):
            where = f"rules[{i}]"
            if not isinstance(r, dict) or not isinstance(r.get("match"), str) or "reply" not in r:
                raise ScenarioParseError(f"{where}: needs string 'match' and 'reply'")
            kind = r.get("match_kind", "substring")
            if kind not in ("substring", "exact"):
                raise ScenarioParseError(f"{where}: unknown match_kind {kind!r}")
            self.rules.append(
                _Rule(r["match"], kind, _parse_reply(r["reply"], where),
                      _parse_usage(r.get("usage"), where))
            )
        default = scenario.get("default", {"reply": ""})
        if not isinstance(default, dict) or "reply" not in default:
            raise ScenarioParseError("'default' must be an object with 'reply'")
        self.default = _Rule("", "default", _parse_reply(default["reply"], "default"),
                             _parse_usage(default.get("usage"), "default"))
        self.seed = seed
        self.name = name
        self.tier = tier
        self.calls: list[dict] = []

    def _match(self, text: str) -> tuple[_Rule, int | None]:
        for i, rule in enumerate(self.rules):
            if rule.kind == "exact" and text == rule.match:
                return rule, i
            if rule.kind == "substring" and rule.match in text:
                return rule, i
        return self.default, None

    def count_input(self, prompt: str, system: str = "") -> int:
        text = full_prompt(prompt, system)
        rule, _ = self._match(text)
        return rule.usage[0] if rule.usage else approx_tokens(text)

    def generate(self, prompt: str, system: str = "", max_tokens: int = 1024,
                 temperature: float = 0.0, seed: int | None = None) -> Generation:
        text = full_prompt(prompt, system)
        rule, idx = self._match(text)
        if len(rule.reply) == 1:
            reply = rule.reply[0]
        else:
            h = hashlib.sha256(f"{self.seed}\x00{text}".encode("utf-8")).digest()
            reply = rule.reply[int.from_bytes(h[:8], "big") % len(rule.reply)]
        if rule.usage:
            u_in, u_out = rule.usage
        else:
            u_in, u_out = approx_tokens(text), approx_tokens(reply)
        diag: dict[str, Any] = {"rule": idx}
        if idx is None:
            diag["DefaultRule"] = True
        if u_out > max_tokens:
            u_out = max(int(max_tokens), 0)
            reply = reply[: u_out * 4]
            diag["Truncated"] = True
        self.calls.append({"system": system, "prompt": prompt, "max_tokens": max_tokens,
                           "temperature": temperature, "seed": seed})
        return Generation(reply, TokenUsage(u_in, u_out), diag)


def mock_backend(script: str | PathLike | dict, seed: int = 0, **kw) -> MockBackend:
    if isinstance(script, dict):
        return MockBackend(script, seed, **kw)
    try:
        with open(script, encoding="utf-8") as fh:
            scenario = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{script}: {exc}") from None
    return MockBackend(scenario, seed, **kw)


# ---------------------------------------------------------------------------
# chat completions over HTTP
# ---------------------------------------------------------------------------

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class HttpBackend:
    """Client for an OpenAI-style ``/v1/chat/completions`` endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str | None = None,
        timeout: float = 120.0,
        tier: Tier = Tier.LARGE,
        max_attempts: int = 3,
        backoff: float = 1.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.name = model
        self.tier = tier
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def count_input(self, prompt: str, system: str = "") -> int:
        return approx_tokens(full_prompt(prompt, system))

    def generate(self, prompt: str, system: str = "", max_tokens: int = 1024,
                 temperature: float = 0.0, seed: int | None = None) -> Generation:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": int(max_tokens),
        }
        if seed is not None:
            payload["seed"] = seed
        url = f"{self.endpoint}/v1/chat/completions"

        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.client.post(url, json=payload, headers=self._headers(),
                                        timeout=self.timeout)
            except httpx.TimeoutException as exc:
                last_exc = Timeout(f"{url}: timed out after {self.timeout}s ({exc})")
                continue
            except httpx.TransportError as exc:
                last_exc = HttpStatus(0, f"{url}: transport error {exc}")
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_exc = HttpStatus(resp.status_code, resp.text[:200])
                continue
            if resp.status_code >= 400:
                raise HttpStatus(resp.status_code, resp.text[:200])
            gen = self._parse(resp, prompt, system)
            gen.diagnostics["retries"] = attempt
            return gen
        assert last_exc is not None
        raise last_exc

    def _parse(self, resp: httpx.Response, prompt: str, system: str) -> Generation:
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {exc!r}") from None
        if not isinstance(text, str):
            raise MalformedResponse("message content is not a string")
        usage = body.get("usage") or {}
        diag: dict[str, Any] = {}
        try:
            u = TokenUsage(int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
        except (KeyError, TypeError, ValueError):
            u = TokenUsage(approx_tokens(full_prompt(prompt, system)), approx_tokens(text))
            diag["ApproxUsage"] = True
        return Generation(text, u, diag)


def http_backend(endpoint: str, model: str, api_key_env: str | None = None,
                 timeout: float = 120.0, **kw) -> HttpBackend:
    return HttpBackend(endpoint, model, api_key_env, timeout, **kw)
