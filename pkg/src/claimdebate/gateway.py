"""Chat-completion access: HTTP backend, scripted playback, retry, accounting.

Both backends expose one method, ``complete(request) -> ChatResponse``. The
HTTP backend speaks the common hosted chat-completion shape (messages array in,
usage block out). The scripted backend replays fixture files keyed by the
routing information attached to each request, which keeps playback independent
of run-varying prompt text.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import requests

from .model import ClaimDebateError, Message

DEFAULT_API_BASE_ENV = "CLAIMDEBATE_API_BASE"
DEFAULT_API_KEY_ENV = "CLAIMDEBATE_API_KEY"

# Multiplier applied to whitespace token counts when the provider reports no
# usage; responses carrying such counts are flagged as estimates.
_ESTIMATE_FACTOR = 1.3


class GatewayError(ClaimDebateError):
    """Base class for backend failures."""


class TransportError(GatewayError):
    """Network-level failure or 5xx status; retryable."""


class RateLimited(GatewayError):
    """Provider signalled rate limiting; retryable."""


class ProviderError(GatewayError):
    """Non-retryable provider response (bad request, auth, missing fixture)."""


class ExhaustedRetries(GatewayError):
    """All retry attempts failed; ``last`` is the final cause."""

    def __init__(self, last: Exception, attempts: int):
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.last = last
        self.attempts = attempts


@dataclass(frozen=True)
class GenerationParams:
    """Sampling parameters applied to every agent call."""

    max_new_tokens: int = 512
    temperature: float = 0.7
    top_p: float = 1.0

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class RouteInfo:
    """Routing header identifying a call: agent role, round, template, claim."""

    role: str
    round: Optional[int] = None
    template: Optional[str] = None
    claim_id: Optional[str] = None


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    params: GenerationParams = field(default_factory=GenerationParams)
    route: Optional[RouteInfo] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("messages must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    input_tokens: int
    output_tokens: int
    estimated: bool = False

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")


class BackendHandle(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def estimate_tokens(text: str) -> int:
    """Whitespace-token count times 1.3; local fallback when usage is absent."""
    return int(round(len(text.split()) * _ESTIMATE_FACTOR))


def _estimate_input(messages: Sequence[Message]) -> int:
    return sum(estimate_tokens(m.content) for m in messages)


class RateBudget:
    """Process-wide requests-per-minute pacing, shared by all workers."""

    def __init__(self, requests_per_minute: float, clock=time.monotonic, sleep=time.sleep):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self._interval = 60.0 / requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            slot = max(now, self._next_slot)
            self._next_slot = slot + self._interval
        wait = slot - now
        if wait > 0:
            self._sleep(wait)


class UsageLedger:
    """Thread-safe accumulator of token usage, per routing role."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_role: dict[str, dict[str, int]] = {}
        self._estimated = False
        self.calls = 0
        self.retries = 0

    def record(self, request: ChatRequest, response: ChatResponse) -> None:
        role = request.route.role if request.route else "unrouted"
        with self._lock:
            bucket = self._by_role.setdefault(role, {"input": 0, "output": 0})
            bucket["input"] += response.input_tokens
            bucket["output"] += response.output_tokens
            self._estimated = self._estimated or response.estimated
            self.calls += 1

    def record_retry(self) -> None:
        with self._lock:
            self.retries += 1

    @property
    def estimated(self) -> bool:
        return self._estimated

    def totals(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {role: dict(counts) for role, counts in self._by_role.items()}

    def grand_total(self) -> tuple[int, int]:
        totals = self.totals()
        return (
            sum(c["input"] for c in totals.values()),
            sum(c["output"] for c in totals.values()),
        )


class HttpBackend:
    """Chat-completion endpoint client (messages array in, usage block out)."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout: float = 60.0,
        budget: Optional[RateBudget] = None,
        session: Optional[requests.Session] = None,
    ):
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._api_key = api_key
        self._timeout = timeout
        self._budget = budget
        self._session = session or requests.Session()

    @classmethod
    def from_env(cls, budget: Optional[RateBudget] = None) -> "HttpBackend":
        base = os.environ.get(DEFAULT_API_BASE_ENV)
        if not base:
            raise ProviderError(f"{DEFAULT_API_BASE_ENV} is not set")
        return cls(base, os.environ.get(DEFAULT_API_KEY_ENV, ""), budget=budget)

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self._budget is not None:
            self._budget.acquire()
        payload = {
            "model": request.model_id,
            "messages": [m.to_dict() for m in request.messages],
            "max_tokens": request.params.max_new_tokens,
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            resp = self._session.post(
                self._url, json=payload, headers=headers, timeout=self._timeout
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(f"rate limited: {resp.text[:200]}")
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"status {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion body: {exc}") from exc
        usage = body.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            return ChatResponse(
                content=content,
                input_tokens=int(usage["prompt_tokens"]),
                output_tokens=int(usage["completion_tokens"]),
            )
        return ChatResponse(
            content=content,
            input_tokens=_estimate_input(request.messages),
            output_tokens=estimate_tokens(content),
            estimated=True,
        )


@dataclass
class _FixtureRecord:
    role: str
    template: Optional[str]
    round: Optional[int]
    claim_id: Optional[str]
    response: Optional[str]
    error: Optional[str]
    remaining: int
    input_tokens: Optional[int]
    output_tokens: Optional[int]

    @property
    def specificity(self) -> int:
        return sum(
            1 for v in (self.template, self.round, self.claim_id) if v is not None
        )

    def matches(self, route: RouteInfo) -> bool:
        if self.role != route.role:
            return False
        if self.template is not None and self.template != route.template:
            return False
        if self.round is not None and self.round != route.round:
            return False
        if self.claim_id is not None and self.claim_id != route.claim_id:
            return False
        return True


class ScriptedBackend:
    """Deterministic playback backend driven by JSONL fixture records.

    Each record carries a key (``role`` required; ``template``, ``round``,
    ``claim_id`` optional) plus either ``response`` text or an ``error`` kind
    ("rate_limited" / "transport") with an optional ``times`` count. Lookup
    picks the most specific matching record; file order breaks ties. Error
    records fire ``times`` times, then fall through to the next match.
    """

    def __init__(
        self, records: Sequence[dict], budget: Optional[RateBudget] = None
    ):
        self._records = [self._parse_record(r, i) for i, r in enumerate(records)]
        self._budget = budget
        self._lock = threading.Lock()

    @staticmethod
    def _parse_record(raw: dict, index: int) -> _FixtureRecord:
        if "role" not in raw:
            raise ValueError(f"fixture record {index} missing 'role'")
        if ("response" in raw) == ("error" in raw):
            raise ValueError(
                f"fixture record {index} needs exactly one of 'response'/'error'"
            )
        error = raw.get("error")
        if error is not None and error not in ("rate_limited", "transport"):
            raise ValueError(f"fixture record {index}: unknown error kind {error!r}")
        rnd = raw.get("round")
        return _FixtureRecord(
            role=str(raw["role"]),
            template=raw.get("template"),
            round=int(rnd) if rnd is not None else None,
            claim_id=str(raw["claim_id"]) if "claim_id" in raw else None,
            response=raw.get("response"),
            error=error,
            remaining=int(raw.get("times", 1)),
            input_tokens=raw.get("input_tokens"),
            output_tokens=raw.get("output_tokens"),
        )

    @classmethod
    def from_file(cls, path: str | Path, budget: Optional[RateBudget] = None) -> "ScriptedBackend":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return cls(records, budget=budget)

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self._budget is not None:
            self._budget.acquire()
        route = request.route
        if route is None:
            raise ProviderError("scripted backend requires routing info on requests")
        with self._lock:
            matches = [r for r in self._records if r.matches(route)]
            matches.sort(key=lambda r: -r.specificity)
            for record in matches:
                if record.error is not None:
                    if record.remaining > 0:
                        record.remaining -= 1
                        if record.error == "rate_limited":
                            raise RateLimited("scripted rate limit")
                        raise TransportError("scripted transport failure")
                    continue
                content = record.response or ""
                return ChatResponse(
                    content=content,
                    input_tokens=(
                        record.input_tokens
                        if record.input_tokens is not None
                        else _estimate_input(request.messages)
                    ),
                    output_tokens=(
                        record.output_tokens
                        if record.output_tokens is not None
                        else estimate_tokens(content)
                    ),
                    estimated=record.input_tokens is None
                    or record.output_tokens is None,
                )
        raise ProviderError(f"no fixture for route {route}")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    multiplier: float = 2.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        """Backoff before attempt ``attempt + 1`` (attempts count from 1)."""
        return self.base_delay * self.multiplier ** (attempt - 1)


def complete_chat(
    request: ChatRequest,
    backend: BackendHandle,
    ledger: Optional[UsageLedger] = None,
) -> ChatResponse:
    """Single chat completion; records usage in ``ledger`` when given."""
    response = backend.complete(request)
    if ledger is not None:
        ledger.record(request, response)
    return response


def with_retry(
    request: ChatRequest,
    backend: BackendHandle,
    policy: RetryPolicy = RetryPolicy(),
    ledger: Optional[UsageLedger] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResponse:
    """Retry rate-limit/transport failures with exponential backoff.

    Raises:
        ExhaustedRetries: after ``policy.max_attempts`` retryable failures,
            wrapping the final cause. Non-retryable errors propagate directly.
    """
    last: Optional[Exception] = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return complete_chat(request, backend, ledger)
        except (RateLimited, TransportError) as exc:
            last = exc
            if attempt < policy.max_attempts:
                if ledger is not None:
                    ledger.record_retry()
                sleep(policy.delay(attempt))
    assert last is not None
    raise ExhaustedRetries(last, policy.max_attempts) from last
