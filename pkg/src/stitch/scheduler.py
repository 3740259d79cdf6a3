"""Runtime state machine driving a token generator through a chunk pattern.

The scheduler tells the generator which token kind is required next,
consumes emitted tokens, enforces chunk boundaries, injects EOPR when a
runtime chunk-size ceiling is configured, and supports externally supplied
reasoning chunks.

Boundary rules
--------------
Chunk sizes are exact in training data except at the ends, so the machine
accepts a small set of phase-advancing tokens beyond the requested kind:

* A control mark legal for the phase: SOR/SOPR at a chunk opening,
  EOPR/EOR while reasoning, EOS at any point where a speech span may end.
* A speech token while text is expected closes the text chunk early as the
  final (possibly short) text chunk.
* For speaking-first schedules only, a text/speech/EOS arrival at the very
  first reasoning opportunity means the response carries no reasoning at
  all; the machine downgrades to a plain interleaved schedule.

When the machine itself closes a reasoning chunk at the ceiling it appends
EOPR to the emitted stream; a generator echoing that same mark as its next
token is absorbed rather than duplicated, so replaying a recorded sequence
reproduces it token for token.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Sequence

from .builder import split_reasoning
from .errors import (
    BadOptionsError,
    FedAfterDoneError,
    KindMismatchError,
    MarkOutOfPlaceError,
    NotExternalModeError,
    WrongPhaseError,
)
from .tokens import (
    ChunkPolicy,
    ControlMark,
    InterleavedSequence,
    Pattern,
    Segment,
    SegmentKind,
    Token,
    TokenKind,
    control,
)

logger = logging.getLogger(__name__)


class Phase(str, Enum):
    AWAIT_REASON = "await_reason"
    AWAIT_TEXT = "await_text"
    AWAIT_SPEECH = "await_speech"
    RESPONSE_TAIL = "response_tail"
    DONE = "done"


class EventType(str, Enum):
    CHUNK_CLOSED = "chunk_closed"
    FORCED_EOPR = "forced_eopr"
    REASONING_COMPLETE = "reasoning_complete"
    RESPONSE_COMPLETE = "response_complete"
    AUDIO_CHUNK_READY = "audio_chunk_ready"


@dataclass(frozen=True)
class SchedulerEvent:
    type: EventType
    step: int
    chunk_kind: SegmentKind | None = None
    chunk_index: int | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "event": self.type.value,
            "step": self.step,
            "chunk_kind": self.chunk_kind.value if self.chunk_kind else None,
            "chunk_index": self.chunk_index,
        }


class DecodeState:
    """One in-flight decode; owned by a single driver loop.

    Use :func:`start` to construct. The emitted token stream (marks
    included) is available as ``emitted_tokens``; closed chunks as
    ``segments``.
    """

    def __init__(
        self,
        policy: ChunkPolicy,
        truncate_at: int | None,
        external_reasoning: tuple[tuple[Token, ...], ...] | None,
    ) -> None:
        self.policy = policy
        self.truncate_at = truncate_at
        self._external_queue: list[tuple[Token, ...]] | None = (
            list(external_reasoning) if external_reasoning is not None else None
        )
        if policy.pattern in (Pattern.TBS, Pattern.STITCH_R):
            self.phase = Phase.AWAIT_REASON
        else:
            self.phase = Phase.AWAIT_TEXT
        self.reasoning_done = not policy.pattern.has_reasoning
        self.text_done = False
        self._tokens: list[Token] = []
        self._segments: list[Segment] = []
        self._chunk: list[Token] = []
        self._chunk_open = False
        self._pending_mark: ControlMark | None = None
        self._eor_window = False
        self._reason_chunks = 0
        self._speech_chunks = 0

    # --- views -----------------------------------------------------------

    @property
    def emitted_tokens(self) -> list[Token]:
        return self._tokens

    @property
    def segments(self) -> list[Segment]:
        return self._segments

    @property
    def external_mode(self) -> bool:
        return self._external_queue is not None

    @property
    def chunk_counter(self) -> int:
        return len(self._chunk)

    @property
    def reason_chunk_bound(self) -> int | None:
        if not self.policy.pattern.has_chunked_reasoning:
            return None
        return self.truncate_at if self.truncate_at is not None else self.policy.n_reason

    def to_sequence(self) -> InterleavedSequence:
        return InterleavedSequence(self.policy.pattern, tuple(self._segments))

    @property
    def _step(self) -> int:
        return len(self._tokens) - 1

    # --- protocol --------------------------------------------------------

    def next_request(self) -> TokenKind | None:
        """The token kind required next, or None once the response is done."""
        if self.phase is Phase.DONE:
            return None
        if self.phase is Phase.AWAIT_REASON:
            return TokenKind.REASON
        if self.phase is Phase.AWAIT_TEXT:
            return TokenKind.TEXT
        return TokenKind.SPEECH

    def feed(self, token: Token, *, final_text: bool = False) -> list[SchedulerEvent]:
        """Consume one generator token, returning the events it triggered.

        ``final_text`` is the wire-protocol hint that a text token is the
        last one of the final text chunk; generators without the hint are
        handled by the structural rules above.
        """
        if self.phase is Phase.DONE:
            raise FedAfterDoneError("response already complete")
        mark = token.mark
        if mark is not None and self._pending_mark is mark:
            # Echo of a mark this machine already synthesized.
            self._pending_mark = None
            return []
        self._pending_mark = None
        if mark is not None:
            return self._feed_mark(mark)
        self._eor_window = False
        return self._feed_content(token, final_text)

    def inject_reasoning_chunk(self, chunk: Sequence[Token]) -> list[SchedulerEvent]:
        """Append an externally supplied reasoning chunk, bypassing the generator."""
        if self._external_queue is None:
            raise NotExternalModeError("scheduler was not started with external reasoning")
        if self.phase is not Phase.AWAIT_REASON:
            raise WrongPhaseError(f"cannot inject during {self.phase.value}")
        if not self._external_queue:
            raise BadOptionsError("external reasoning queue is exhausted")
        expected = self._external_queue[0]
        if tuple(chunk) != expected:
            raise BadOptionsError("injected chunk does not match the external reasoning queue")
        self._external_queue.pop(0)
        final = not self._external_queue
        self._tokens.append(control(ControlMark.SOPR))
        self._tokens.extend(expected)
        self._tokens.append(control(ControlMark.EOPR))
        events = []
        self._segments.append(Segment(SegmentKind.REASON, expected, final=final))
        self._reason_chunks += 1
        if final:
            self._tokens.append(control(ControlMark.EOR))
            self.reasoning_done = True
        events.append(
            SchedulerEvent(
                EventType.CHUNK_CLOSED, self._step, SegmentKind.REASON, self._reason_chunks - 1
            )
        )
        if final:
            events.append(SchedulerEvent(EventType.REASONING_COMPLETE, self._step))
        self.phase = Phase.AWAIT_TEXT
        return events

    # --- mark handling -----------------------------------------------------

    def _feed_mark(self, mark: ControlMark) -> list[SchedulerEvent]:
        if mark is ControlMark.EOS:
            return self._handle_eos()
        if mark is ControlMark.EOR:
            return self._handle_eor()
        if mark is ControlMark.EOPR:
            if (
                self.phase is Phase.AWAIT_REASON
                and self.policy.pattern.has_chunked_reasoning
                and self._chunk
            ):
                self._tokens.append(control(ControlMark.EOPR))
                return self._close_reason_chunk(forced=False)
            raise MarkOutOfPlaceError(f"EOPR illegal during {self.phase.value}")
        if mark is ControlMark.SOPR:
            if (
                self.phase is Phase.AWAIT_REASON
                and self.policy.pattern.has_chunked_reasoning
                and not self._chunk_open
                and not self.external_mode
            ):
                self._chunk_open = True
                self._tokens.append(control(ControlMark.SOPR))
                return []
            raise MarkOutOfPlaceError(f"SOPR illegal during {self.phase.value}")
        # SOR
        if self.phase is Phase.AWAIT_REASON and self.policy.pattern is Pattern.TBS and not self._chunk_open:
            self._chunk_open = True
            self._tokens.append(control(ControlMark.SOR))
            return []
        raise MarkOutOfPlaceError(f"SOR illegal during {self.phase.value}")

    def _handle_eor(self) -> list[SchedulerEvent]:
        events: list[SchedulerEvent] = []
        if self._eor_window:
            # Directly after an EOPR: the chunk that just closed was final.
            self._eor_window = False
            self._tokens.append(control(ControlMark.EOR))
            self._finalize_last(SegmentKind.REASON)
            self.reasoning_done = True
            events.append(SchedulerEvent(EventType.REASONING_COMPLETE, self._step))
            return events
        if self.phase is not Phase.AWAIT_REASON:
            raise MarkOutOfPlaceError(f"EOR illegal during {self.phase.value}")
        if self.policy.pattern is Pattern.TBS:
            if not self._chunk_open:
                self._tokens.append(control(ControlMark.SOR))
            self._tokens.append(control(ControlMark.EOR))
            self._segments.append(Segment(SegmentKind.REASON, tuple(self._chunk), final=True))
            self._chunk = []
            self._chunk_open = False
            self._reason_chunks += 1
            self.reasoning_done = True
            self.phase = Phase.AWAIT_TEXT
            events.append(
                SchedulerEvent(
                    EventType.CHUNK_CLOSED, self._step, SegmentKind.REASON, self._reason_chunks - 1
                )
            )
            events.append(SchedulerEvent(EventType.REASONING_COMPLETE, self._step))
            return events
        if self._chunk:
            # EOR without a preceding EOPR: close the open chunk implicitly.
            logger.warning("EOR arrived mid-chunk; closing the open reasoning chunk")
            self._tokens.append(control(ControlMark.EOPR))
            events.extend(self._close_reason_chunk(forced=False))
            self._eor_window = False
            self._tokens.append(control(ControlMark.EOR))
            self._finalize_last(SegmentKind.REASON)
            self.reasoning_done = True
            events.append(SchedulerEvent(EventType.REASONING_COMPLETE, self._step))
            return events
        if self.policy.pattern is Pattern.STITCH_R and self._reason_chunks == 0 and not self._chunk_open:
            # Empty reasoning: a bare EOR before the first text chunk.
            self._tokens.append(control(ControlMark.EOR))
            self.reasoning_done = True
            self.phase = Phase.AWAIT_TEXT
            events.append(SchedulerEvent(EventType.REASONING_COMPLETE, self._step))
            return events
        raise MarkOutOfPlaceError("EOR with no reasoning chunk to close")

    def _handle_eos(self) -> list[SchedulerEvent]:
        events: list[SchedulerEvent] = []
        at_boundary = (
            (self.phase is Phase.AWAIT_TEXT and not self._chunk)
            or (self.phase is Phase.RESPONSE_TAIL)
            or (self.phase is Phase.AWAIT_SPEECH and bool(self._chunk))
        )
        if (
            self.phase is Phase.AWAIT_REASON
            and self._stitch_s_reasoning_never_started()
        ):
            self.reasoning_done = True
            events.append(SchedulerEvent(EventType.REASONING_COMPLETE, self._step))
            at_boundary = True
        if not at_boundary:
            raise MarkOutOfPlaceError(f"EOS illegal during {self.phase.value} mid-chunk")
        if self._chunk:
            events.extend(self._close_speech_chunk())
        self._finalize_last(SegmentKind.TEXT)
        self._finalize_last(SegmentKind.SPEECH)
        self._tokens.append(control(ControlMark.EOS))
        self.phase = Phase.DONE
        self._eor_window = False
        events.append(SchedulerEvent(EventType.RESPONSE_COMPLETE, self._step))
        return events

    # --- content handling ---------------------------------------------------

    def _feed_content(self, token: Token, final_text: bool) -> list[SchedulerEvent]:
        if self.phase is Phase.AWAIT_REASON:
            return self._feed_reason_phase(token, final_text)
        if self.phase is Phase.AWAIT_TEXT:
            return self._feed_text_phase(token, final_text)
        # AWAIT_SPEECH / RESPONSE_TAIL
        if token.kind is not TokenKind.SPEECH:
            raise KindMismatchError(f"expected a speech token, got {token.kind.value}")
        self._chunk.append(token)
        self._tokens.append(token)
        if len(self._chunk) == self.policy.n_speech:
            return self._close_speech_chunk()
        return []

    def _feed_reason_phase(self, token: Token, final_text: bool) -> list[SchedulerEvent]:
        if token.kind is TokenKind.REASON:
            if self.external_mode:
                raise KindMismatchError(
                    "external reasoning mode: reasoning chunks arrive via injection"
                )
            if not self._chunk_open:
                opener = ControlMark.SOR if self.policy.pattern is Pattern.TBS else ControlMark.SOPR
                self._tokens.append(control(opener))
                self._chunk_open = True
            self._chunk.append(token)
            self._tokens.append(token)
            bound = self.reason_chunk_bound
            if bound is not None and len(self._chunk) == bound:
                self._tokens.append(control(ControlMark.EOPR))
                self._pending_mark = ControlMark.EOPR
                events = [SchedulerEvent(EventType.FORCED_EOPR, self._step)]
                events.extend(self._close_reason_chunk(forced=True))
                return events
            return []
        if self._stitch_s_reasoning_never_started():
            # Speaking-first schedule whose response carries no reasoning.
            self.reasoning_done = True
            self.phase = Phase.AWAIT_TEXT
            events = [SchedulerEvent(EventType.REASONING_COMPLETE, max(self._step, 0))]
            events.extend(self._feed_content(token, final_text))
            return events
        raise KindMismatchError(f"expected a reasoning token, got {token.kind.value}")

    def _feed_text_phase(self, token: Token, final_text: bool) -> list[SchedulerEvent]:
        if token.kind is TokenKind.TEXT:
            self._chunk.append(token)
            self._tokens.append(token)
            if final_text or len(self._chunk) == self.policy.n_text:
                return self._close_text_chunk(final=final_text)
            return []
        if token.kind is TokenKind.SPEECH:
            events: list[SchedulerEvent] = []
            if self._chunk:
                # Early kind switch: the open text chunk was the short final one.
                events.extend(self._close_text_chunk(final=True))
            else:
                if not any(s.kind is SegmentKind.TEXT for s in self._segments):
                    raise KindMismatchError("speech token before any text chunk")
                self._finalize_last(SegmentKind.TEXT)
                self.text_done = True
                self.phase = Phase.AWAIT_SPEECH
            events.extend(self._feed_content(token, final_text))
            return events
        raise KindMismatchError(f"expected a text token, got {token.kind.value}")

    # --- chunk closing --------------------------------------------------------

    def _close_reason_chunk(self, *, forced: bool) -> list[SchedulerEvent]:
        self._segments.append(Segment(SegmentKind.REASON, tuple(self._chunk), final=False))
        self._chunk = []
        self._chunk_open = False
        self._reason_chunks += 1
        self._eor_window = True
        self.phase = Phase.AWAIT_TEXT
        return [
            SchedulerEvent(
                EventType.CHUNK_CLOSED, self._step, SegmentKind.REASON, self._reason_chunks - 1
            )
        ]

    def _close_text_chunk(self, *, final: bool) -> list[SchedulerEvent]:
        self._segments.append(Segment(SegmentKind.TEXT, tuple(self._chunk), final=final))
        self._chunk = []
        if final:
            self.text_done = True
        self.phase = Phase.AWAIT_SPEECH
        n_text_chunks = sum(1 for s in self._segments if s.kind is SegmentKind.TEXT)
        return [
            SchedulerEvent(EventType.CHUNK_CLOSED, self._step, SegmentKind.TEXT, n_text_chunks - 1)
        ]

    def _close_speech_chunk(self) -> list[SchedulerEvent]:
        index = self._speech_chunks
        self._segments.append(Segment(SegmentKind.SPEECH, tuple(self._chunk), final=False))
        self._chunk = []
        self._speech_chunks += 1
        if self.text_done:
            self.phase = Phase.RESPONSE_TAIL
        elif self.policy.pattern.has_chunked_reasoning and not self.reasoning_done:
            self.phase = Phase.AWAIT_REASON
        else:
            self.phase = Phase.AWAIT_TEXT
        return [
            SchedulerEvent(EventType.CHUNK_CLOSED, self._step, SegmentKind.SPEECH, index),
            SchedulerEvent(EventType.AUDIO_CHUNK_READY, self._step, SegmentKind.SPEECH, index),
        ]

    def _finalize_last(self, kind: SegmentKind) -> None:
        for i in range(len(self._segments) - 1, -1, -1):
            if self._segments[i].kind is kind:
                if not self._segments[i].final:
                    self._segments[i] = replace(self._segments[i], final=True)
                return

    def _stitch_s_reasoning_never_started(self) -> bool:
        return (
            self.phase is Phase.AWAIT_REASON
            and self.policy.pattern is Pattern.STITCH_S
            and not self.reasoning_done
            and self._reason_chunks == 0
            and not self._chunk
            and not self._chunk_open
            and not self.external_mode
        )


def start(
    policy: ChunkPolicy,
    *,
    truncate_at: int | None = None,
    external_reasoning: Sequence[Sequence[Token]] | None = None,
) -> DecodeState:
    """Open a decode session for the policy's pattern.

    ``truncate_at`` caps runtime reasoning chunks at N' tokens
    (1 <= N' <= n_reason); ``external_reasoning`` supplies pre-cropped
    reasoning chunks to inject instead of asking the generator. Both are
    only meaningful for the chunked-reasoning patterns.
    """
    if truncate_at is not None:
        if not policy.pattern.has_chunked_reasoning:
            raise BadOptionsError(
                f"truncate_at is not applicable to pattern {policy.pattern.value}"
            )
        if not 1 <= truncate_at <= policy.n_reason:
            raise BadOptionsError(
                f"truncate_at must be in 1..{policy.n_reason}, got {truncate_at}"
            )
    external: tuple[tuple[Token, ...], ...] | None = None
    if external_reasoning is not None:
        if not policy.pattern.has_chunked_reasoning:
            raise BadOptionsError(
                f"external reasoning is not applicable to pattern {policy.pattern.value}"
            )
        external = tuple(tuple(c) for c in external_reasoning)
        if not external:
            raise BadOptionsError("external reasoning needs at least one chunk")
        bound = truncate_at if truncate_at is not None else policy.n_reason
        for i, chunk in enumerate(external):
            if not chunk:
                raise BadOptionsError(f"external reasoning chunk {i} is empty")
            if len(chunk) > bound:
                raise BadOptionsError(
                    f"external reasoning chunk {i} has {len(chunk)} tokens, limit {bound}"
                )
            for tok in chunk:
                if tok.kind is not TokenKind.REASON:
                    raise BadOptionsError("external reasoning chunks must hold reasoning tokens")
    return DecodeState(policy, truncate_at, external)


def crop_external_reasoning(reasoning: Sequence[Token], n_prime: int) -> list[list[Token]]:
    """Crop a full reasoning trace into injection-ready chunks of n_prime."""
    return [list(seg.tokens) for seg in split_reasoning(reasoning, n_prime)]
