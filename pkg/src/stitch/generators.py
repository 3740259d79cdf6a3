"""Pluggable token sources behind one uniform interface.

An adapter returns one token per call, of the requested kind or a control
mark / boundary switch the scheduler can legally accept at that point.
Trace and synthetic adapters are pure functions of their inputs and seed;
two runs with equal inputs produce equal outputs.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import requests

from .errors import (
    KindMismatchError,
    ProtocolViolationError,
    TraceExhaustedError,
    TraceKindMismatchError,
    TransportError,
)
from .tokens import (
    ChunkPolicy,
    ControlMark,
    Token,
    TokenKind,
    control,
    token_from_json,
    tokens_to_json,
)


@runtime_checkable
class Generator(Protocol):
    """Behavioral contract for token sources."""

    def next(self, context: Sequence[Token], request: TokenKind) -> Token: ...


# Marks and boundary kind-switches a recorded token may legally present
# while the given kind is requested. Content kinds beyond the requested one
# appear only where the scheduler's boundary rules accept them: a text or
# speech token at the reasoning slot (speaking-first schedules without
# reasoning) and a speech token closing a short final text chunk.
_LEGAL_MARKS: dict[TokenKind, frozenset[ControlMark]] = {
    TokenKind.REASON: frozenset(
        {ControlMark.SOR, ControlMark.SOPR, ControlMark.EOPR, ControlMark.EOR, ControlMark.EOS}
    ),
    TokenKind.TEXT: frozenset({ControlMark.EOR, ControlMark.EOS}),
    TokenKind.SPEECH: frozenset({ControlMark.EOS}),
}
_LEGAL_KINDS: dict[TokenKind, frozenset[TokenKind]] = {
    TokenKind.REASON: frozenset({TokenKind.REASON, TokenKind.TEXT, TokenKind.SPEECH}),
    TokenKind.TEXT: frozenset({TokenKind.TEXT, TokenKind.SPEECH}),
    TokenKind.SPEECH: frozenset({TokenKind.SPEECH}),
}


def compatible(token: Token, request: TokenKind) -> bool:
    """Whether a token can legally answer the requested kind."""
    mark = token.mark
    if mark is not None:
        return mark in _LEGAL_MARKS[request]
    return token.kind in _LEGAL_KINDS[request]


class TraceGenerator:
    """Deterministic replay of a recorded token list."""

    def __init__(self, trace: Sequence[Token]) -> None:
        self._trace = list(trace)
        self.cursor = 0

    def next(self, context: Sequence[Token], request: TokenKind) -> Token:
        if self.cursor >= len(self._trace):
            raise TraceExhaustedError(f"trace exhausted after {self.cursor} tokens")
        tok = self._trace[self.cursor]
        if not compatible(tok, request):
            what = tok.mark.value if tok.mark else tok.kind.value
            raise TraceKindMismatchError(
                f"trace desynced at position {self.cursor}: "
                f"recorded {what} cannot answer a {request.value} request"
            )
        self.cursor += 1
        return tok


@dataclass(frozen=True)
class LengthDistribution:
    """Truncated discrete normal; spread defaults to mean / 4."""

    mean: float
    spread: float | None = None
    floor: int = 1

    def __post_init__(self) -> None:
        if self.mean < self.floor:
            raise ValueError(f"mean {self.mean} below floor {self.floor}")
        if self.spread is not None and self.spread < 0:
            raise ValueError("spread must be nonnegative")
        if self.floor < 1:
            raise ValueError("floor must be >= 1")

    @property
    def effective_spread(self) -> float:
        return self.mean / 4 if self.spread is None else self.spread

    def sample(self, rng: random.Random) -> int:
        for _ in range(1000):
            value = round(rng.gauss(self.mean, self.effective_spread))
            if value >= self.floor:
                return value
        return self.floor


# Reasoning-length means observed for math workloads of different difficulty.
GSM8K_LIKE_REASON_MEAN = 322.40
MULTIARITH_LIKE_REASON_MEAN = 157.32


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    reasoning_length: LengthDistribution = field(
        default_factory=lambda: LengthDistribution(GSM8K_LIKE_REASON_MEAN)
    )
    text_chunk_count: LengthDistribution = field(
        default_factory=lambda: LengthDistribution(6.0)
    )
    early_eopr_probability: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.early_eopr_probability <= 1.0:
            raise ValueError("early_eopr_probability must be in [0, 1]")

    @classmethod
    def gsm8k_like(cls, seed: int = 0, **kwargs: object) -> "SyntheticConfig":
        return cls(seed=seed, reasoning_length=LengthDistribution(GSM8K_LIKE_REASON_MEAN), **kwargs)  # type: ignore[arg-type]

    @classmethod
    def multiarith_like(cls, seed: int = 0, **kwargs: object) -> "SyntheticConfig":
        return cls(seed=seed, reasoning_length=LengthDistribution(MULTIARITH_LIKE_REASON_MEAN), **kwargs)  # type: ignore[arg-type]


class SyntheticGenerator:
    """Seeded placeholder-token generator.

    Emits tokens of whatever kind the scheduler requests. Total reasoning
    follows the configured distribution, ending with EOPR + EOR (EOR alone
    for a full-span schedule); text ends with a sampled short final chunk
    signalled by switching to speech; EOS follows the final speech chunk.
    """

    def __init__(self, config: SyntheticConfig, policy: ChunkPolicy) -> None:
        self.config = config
        self.policy = policy
        self._rng = random.Random(config.seed)
        self._counters = {TokenKind.REASON: 0, TokenKind.TEXT: 0, TokenKind.SPEECH: 0}
        self._queue: list[Token] = []
        self._last_request: TokenKind | None = None
        if policy.pattern.has_reasoning:
            self._remaining_reason = self.config.reasoning_length.sample(self._rng)
        else:
            self._remaining_reason = 0
        self._eor_sent = not policy.pattern.has_reasoning
        self._planned_text_chunks = self.config.text_chunk_count.sample(self._rng)
        self._final_text_len = self._rng.randint(1, policy.n_text)
        self._reason_in_chunk = 0
        self._text_in_chunk = 0
        self._speech_in_chunk = 0
        self._text_chunks_done = 0
        self._text_exhausted = False

    def _emit(self, kind: TokenKind) -> Token:
        index = self._counters[kind]
        self._counters[kind] += 1
        return Token(kind, f"{kind.value[0]}{index}")

    def next(self, context: Sequence[Token], request: TokenKind) -> Token:
        if self._queue:
            return self._queue.pop(0)
        if request is not self._last_request:
            if request is TokenKind.REASON:
                self._reason_in_chunk = 0
            elif request is TokenKind.TEXT:
                self._text_in_chunk = 0
        self._last_request = request
        if request is TokenKind.REASON:
            return self._next_reason()
        if request is TokenKind.TEXT:
            return self._next_text()
        return self._next_speech()

    def _next_reason(self) -> Token:
        if self._remaining_reason <= 0:
            # Defensive: reasoning should already have been closed by EOR.
            return control(ControlMark.EOR)
        if (
            self.policy.pattern.has_chunked_reasoning
            and self._reason_in_chunk >= 1
            and self._rng.random() < self.config.early_eopr_probability
        ):
            self._reason_in_chunk = 0
            return control(ControlMark.EOPR)
        tok = self._emit(TokenKind.REASON)
        self._remaining_reason -= 1
        self._reason_in_chunk += 1
        if self._remaining_reason == 0:
            if self.policy.pattern.has_chunked_reasoning:
                self._queue.extend([control(ControlMark.EOPR), control(ControlMark.EOR)])
            else:
                self._queue.append(control(ControlMark.EOR))
            self._eor_sent = True
        return tok

    def _next_text(self) -> Token:
        if self._text_exhausted:
            return self._next_speech()
        in_final_chunk = (
            self._eor_sent and self._text_chunks_done >= self._planned_text_chunks - 1
        )
        if in_final_chunk and self._text_in_chunk >= self._final_text_len:
            # Short final chunk complete: switch to speech.
            self._text_exhausted = True
            return self._next_speech()
        tok = self._emit(TokenKind.TEXT)
        self._text_in_chunk += 1
        if self._text_in_chunk == self.policy.n_text:
            self._text_chunks_done += 1
            self._text_in_chunk = 0
            if in_final_chunk:
                self._text_exhausted = True
        elif in_final_chunk and self._text_in_chunk == self._final_text_len:
            self._text_exhausted = True
        return tok

    def _next_speech(self) -> Token:
        tok = self._emit(TokenKind.SPEECH)
        self._speech_in_chunk += 1
        if self._speech_in_chunk == self.policy.n_speech:
            self._speech_in_chunk = 0
            if self._text_exhausted:
                self._queue.append(control(ControlMark.EOS))
        return tok


class RemoteGenerator:
    """Client for a token-serving endpoint, one round trip per token.

    POST {base_url}/v1/next with {"session", "context", "request_kind"}
    must return {"token": {...}} and may add "final_text": true to flag
    the last token of the final text chunk. Per-token wall latency is
    recorded in ``wall_latencies_s`` so an empirical rate or jitter trace
    can feed the latency simulator.
    """

    def __init__(
        self,
        base_url: str,
        session_id: str = "default",
        timeout: float = 30.0,
        auth_header: str | None = None,
        http: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.session_id = session_id
        self.timeout = timeout
        self._http = http or requests.Session()
        if auth_header:
            name, _, value = auth_header.partition(":")
            self._http.headers[name.strip()] = value.strip()
        self.wall_latencies_s: list[float] = []
        self.last_final_text = False

    def _post(self, path: str, body: dict) -> dict:
        try:
            resp = self._http.post(f"{self.base_url}{path}", json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"request to {path} failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolViolationError(f"{path} returned status {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolViolationError(f"{path} returned non-JSON body") from exc
        if not isinstance(payload, dict):
            raise ProtocolViolationError(f"{path} reply must be a JSON object")
        return payload

    def next(self, context: Sequence[Token], request: TokenKind) -> Token:
        body = {
            "session": self.session_id,
            "context": tokens_to_json(context),
            "request_kind": request.value,
        }
        t0 = time.monotonic()
        payload = self._post("/v1/next", body)
        self.wall_latencies_s.append(time.monotonic() - t0)
        if "token" not in payload:
            raise ProtocolViolationError("reply missing 'token' field")
        try:
            tok = token_from_json(payload["token"])
        except Exception as exc:
            raise ProtocolViolationError(f"undecodable token in reply: {exc}") from exc
        if not compatible(tok, request):
            what = tok.mark.value if tok.mark else tok.kind.value
            raise KindMismatchError(
                f"server returned {what} for a {request.value} request"
            )
        self.last_final_text = bool(payload.get("final_text", False))
        return tok

    def reset(self) -> None:
        self._post("/v1/reset", {"session": self.session_id})
