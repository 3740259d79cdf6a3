"""Drive loop: one scheduler, one generator, to completion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .generators import Generator
from .scheduler import DecodeState, Phase, SchedulerEvent, start
from .tokens import ChunkPolicy, InterleavedSequence, Token, TokenKind


@dataclass
class DecodeRun:
    """The realized outcome of one decode session."""

    state: DecodeState
    events: list[SchedulerEvent]
    reason_requests: int

    @property
    def tokens(self) -> list[Token]:
        return self.state.emitted_tokens

    @property
    def sequence(self) -> InterleavedSequence:
        return self.state.to_sequence()


def run_decode(
    policy: ChunkPolicy,
    generator: Generator,
    *,
    truncate_at: int | None = None,
    external_reasoning: Sequence[Sequence[Token]] | None = None,
    max_steps: int = 1_000_000,
) -> DecodeRun:
    """Run the scheduler against a generator until the response completes.

    In external-reasoning mode the queued chunks are injected whenever the
    schedule reaches a reasoning slot; the generator is then only ever
    asked for text and speech tokens.
    """
    external = [tuple(c) for c in external_reasoning] if external_reasoning is not None else None
    state = start(
        policy,
        truncate_at=truncate_at,
        external_reasoning=external,
    )
    events: list[SchedulerEvent] = []
    reason_requests = 0
    injected = 0
    for _ in range(max_steps):
        if state.phase is Phase.DONE:
            return DecodeRun(state, events, reason_requests)
        if external is not None and state.phase is Phase.AWAIT_REASON:
            events.extend(state.inject_reasoning_chunk(external[injected]))
            injected += 1
            continue
        request = state.next_request()
        assert request is not None
        if request is TokenKind.REASON:
            reason_requests += 1
        token = generator.next(state.emitted_tokens, request)
        hint = bool(getattr(generator, "last_final_text", False))
        events.extend(state.feed(token, final_text=hint))
    raise RuntimeError(f"decode did not complete within {max_steps} steps")
