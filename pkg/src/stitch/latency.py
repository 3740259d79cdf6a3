"""Discrete-event model of the generation / synthesis / playback timeline.

Generation is a single serial token stream; synthesis is a single channel
with a fixed per-chunk latency running in parallel with generation;
playback of chunk i starts as soon as both its synthesis is done and the
previous chunk's audio has finished. An underrun is a positive gap between
one chunk's playback end and the next chunk's start.

Control marks are charged generation time at ``mark_cost`` tokens each
(set 0 to reproduce pure content-token arithmetic).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from .errors import NonPositiveInputError
from .tokens import ChunkPolicy, ControlMark, Pattern, Token, TokenKind


@dataclass(frozen=True)
class TimingModel:
    """Token rate, per-chunk audio durations, synthesis latency, mark cost.

    ``chunk_durations`` maps chunk index to playback seconds; the last
    entry repeats for all later chunks. The default scheme reflects a
    shorter first audio chunk (1.6 s) with 2.0 s steady-state chunks; use
    :meth:`uniform` for a single-duration model.
    """

    rate: float = 80.0
    chunk_durations: tuple[float, ...] = (1.6, 2.0)
    synth_latency: float = 0.0
    mark_cost: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "chunk_durations", tuple(self.chunk_durations))
        if self.rate <= 0:
            raise NonPositiveInputError(f"rate must be positive, got {self.rate}")
        if not self.chunk_durations or any(d <= 0 for d in self.chunk_durations):
            raise NonPositiveInputError("all chunk durations must be positive")
        if self.synth_latency < 0:
            raise NonPositiveInputError("synth_latency must be nonnegative")
        if self.mark_cost < 0:
            raise NonPositiveInputError("mark_cost must be nonnegative")

    @classmethod
    def uniform(
        cls,
        rate: float,
        t_chunk: float,
        synth_latency: float = 0.0,
        mark_cost: float = 1.0,
    ) -> "TimingModel":
        return cls(rate, (t_chunk,), synth_latency, mark_cost)

    def duration(self, chunk_index: int) -> float:
        return self.chunk_durations[min(chunk_index, len(self.chunk_durations) - 1)]

    @property
    def min_duration(self) -> float:
        return min(self.chunk_durations)


def max_reason_budget(rate: float, t_chunk: float, n_text: int, n_speech: int) -> float:
    """Reasoning tokens that fit in one audio chunk's playback window.

    rate tokens/s for t_chunk seconds covers the chunk's own text and
    speech tokens plus this many reasoning tokens.
    """
    for name, value in (("rate", rate), ("t_chunk", t_chunk), ("n_text", n_text), ("n_speech", n_speech)):
        if value <= 0:
            raise NonPositiveInputError(f"{name} must be positive, got {value}")
    return rate * t_chunk - (n_text + n_speech)


def max_reason_budget_floor(rate: float, t_chunk: float, n_text: int, n_speech: int) -> int:
    """Integer companion of :func:`max_reason_budget`."""
    return math.floor(max_reason_budget(rate, t_chunk, n_text, n_speech))


def first_packet_latency(
    policy: ChunkPolicy,
    timing: TimingModel,
    reasoning_prefix: int | None = None,
) -> float:
    """Seconds until the first audio chunk can start playing.

    ``reasoning_prefix`` is the token count generated before the first
    text chunk: the full reasoning length for a think-first schedule, one
    reasoning chunk for reason-first cycles, zero otherwise. When omitted
    it defaults per pattern (the think-first prefix has no default).
    """
    pattern = policy.pattern
    if reasoning_prefix is None:
        if pattern is Pattern.TBS:
            raise NonPositiveInputError("a full-reasoning prefix length is required")
        reasoning_prefix = policy.n_reason if pattern is Pattern.STITCH_R else 0
    if reasoning_prefix < 0:
        raise NonPositiveInputError("reasoning_prefix must be nonnegative")
    marks = 2.0 * timing.mark_cost if pattern in (Pattern.TBS, Pattern.STITCH_R) else 0.0
    prefix = reasoning_prefix if pattern.has_reasoning else 0
    tokens = prefix + marks + policy.n_text + policy.n_speech
    return tokens / timing.rate + timing.synth_latency


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    steady_state_slack: float

    def to_json(self) -> dict[str, Any]:
        return {"feasible": self.feasible, "steady_state_slack_s": self.steady_state_slack}


def feasibility(policy: ChunkPolicy, timing: TimingModel) -> FeasibilityReport:
    """Closed-form steady-state check: one full cycle's generation must fit
    in the shortest chunk duration, and synthesis must be faster than any
    chunk's playback."""
    if policy.pattern.has_chunked_reasoning:
        cycle_tokens = policy.n_reason + 2.0 * timing.mark_cost + policy.n_text + policy.n_speech
    else:
        cycle_tokens = float(policy.n_text + policy.n_speech)
    gen_time = cycle_tokens / timing.rate
    slack = timing.min_duration - gen_time
    feasible = gen_time <= timing.min_duration and timing.synth_latency < timing.min_duration
    return FeasibilityReport(feasible, slack)


class TimelineEventKind(str, Enum):
    TOKEN_DONE = "token_done"
    SYNTH_START = "synth_start"
    SYNTH_DONE = "synth_done"
    PLAY_START = "play_start"
    PLAY_END = "play_end"


_EVENT_SORT = {
    TimelineEventKind.TOKEN_DONE: 0,
    TimelineEventKind.SYNTH_START: 1,
    TimelineEventKind.SYNTH_DONE: 2,
    TimelineEventKind.PLAY_END: 3,
    TimelineEventKind.PLAY_START: 4,
}


@dataclass(frozen=True)
class TimelineEvent:
    time: float
    kind: TimelineEventKind
    chunk_index: int | None
    detail: str = ""


@dataclass(frozen=True)
class LatencyMetrics:
    first_packet_latency_s: float
    underrun_total_s: float
    underruns: tuple[tuple[int, float], ...]
    per_chunk_slack_s: tuple[float, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "first_packet_latency_s": self.first_packet_latency_s,
            "underrun_total_s": self.underrun_total_s,
            "underruns": [{"chunk": c, "gap_s": g} for c, g in self.underruns],
            "per_chunk_slack_s": list(self.per_chunk_slack_s),
        }


@dataclass(frozen=True)
class Timeline:
    events: tuple[TimelineEvent, ...]
    metrics: LatencyMetrics

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", "event", "chunk_index", "detail"])
        for ev in self.events:
            index = "" if ev.chunk_index is None else ev.chunk_index
            writer.writerow([repr(ev.time), ev.kind.value, index, ev.detail])
        return buf.getvalue()


@dataclass(frozen=True)
class _Span:
    """One generation span: content tokens plus the marks emitted with it."""

    label: str
    content: int
    marks: int
    closes_chunk: int | None = None


def _reason_chunk_sizes(reasoning_total: int, n_reason: int) -> list[int]:
    if reasoning_total <= 0:
        return []
    full, rem = divmod(reasoning_total, n_reason)
    return [n_reason] * full + ([rem] if rem else [])


def _plan_pattern(policy: ChunkPolicy, reasoning_total: int, response_chunks: int) -> list[_Span]:
    pattern = policy.pattern
    spans: list[_Span] = []
    if pattern is Pattern.TBS:
        spans.append(_Span("reason", reasoning_total, 2))
        chunk_sizes: list[int] = []
    elif pattern.has_chunked_reasoning:
        chunk_sizes = _reason_chunk_sizes(reasoning_total, policy.n_reason)
        if len(chunk_sizes) > response_chunks:
            raise ValueError(
                f"{len(chunk_sizes)} reasoning chunks exceed {response_chunks} response chunks"
            )
    else:
        chunk_sizes = []

    def reason_span(i: int) -> _Span:
        final = i == len(chunk_sizes) - 1
        return _Span(f"reason[{i}]", chunk_sizes[i], 3 if final else 2)

    for i in range(response_chunks):
        if pattern is Pattern.STITCH_R:
            if i < len(chunk_sizes):
                spans.append(reason_span(i))
            elif i == 0 and not chunk_sizes:
                spans.append(_Span("reason[none]", 0, 1))  # bare EOR
        spans.append(_Span(f"text[{i}]", policy.n_text, 0))
        spans.append(_Span(f"speech[{i}]", policy.n_speech, 0, closes_chunk=i))
        if pattern is Pattern.STITCH_S and i < len(chunk_sizes):
            spans.append(reason_span(i))
    spans.append(_Span("eos", 0, 1))
    return spans


def _plan_tokens(tokens: Sequence[Token], policy: ChunkPolicy) -> list[_Span]:
    """Span plan for a realized token stream, marks priced individually.

    Speech runs are cut at n_speech boundaries; the final (possibly
    partial) chunk closes at end of stream.
    """
    spans: list[_Span] = []
    pending_marks = 0
    run_kind: TokenKind | None = None
    run_len = 0
    chunk_index = 0
    counts = {TokenKind.REASON: 0, TokenKind.TEXT: 0, TokenKind.SPEECH: 0}

    def flush() -> None:
        # Every flushed speech run ends a speech span, hence closes a chunk
        # (mid-stream runs are cut at exactly n_speech below; a shorter one
        # is the final partial chunk).
        nonlocal run_kind, run_len, pending_marks, chunk_index
        if run_len or pending_marks:
            closes = None
            if run_kind is TokenKind.SPEECH and run_len:
                closes = chunk_index
                chunk_index += 1
            label = f"{run_kind.value}[{counts[run_kind]}]" if run_kind else "marks"
            if run_kind:
                counts[run_kind] += 1
            spans.append(_Span(label, run_len, pending_marks, closes))
        run_kind = None
        run_len = 0
        pending_marks = 0

    for tok in tokens:
        if tok.kind is TokenKind.CONTROL:
            if run_len:
                flush()
            pending_marks += 1
            continue
        if run_kind is not None and tok.kind is not run_kind:
            flush()
        run_kind = tok.kind
        run_len += 1
        if run_kind is TokenKind.SPEECH and run_len == policy.n_speech:
            flush()
    flush()
    return spans


def _run_timeline(
    spans: Sequence[_Span],
    timing: TimingModel,
    token_times: Sequence[float] | None,
) -> Timeline:
    events: list[TimelineEvent] = []
    now = 0.0
    entry = 0
    chunk_ready: list[tuple[int, float]] = []
    for span in spans:
        n_entries = span.content + span.marks
        if token_times is not None:
            if entry + n_entries > len(token_times):
                raise ValueError("token latency trace is shorter than the schedule")
            dt = sum(token_times[entry : entry + n_entries])
            entry += n_entries
        else:
            dt = (span.content + span.marks * timing.mark_cost) / timing.rate
        now += dt
        if n_entries:
            events.append(
                TimelineEvent(now, TimelineEventKind.TOKEN_DONE, span.closes_chunk, span.label)
            )
        if span.closes_chunk is not None:
            chunk_ready.append((span.closes_chunk, now))

    synth_free = 0.0
    ready: list[float] = []
    for index, gen_done in chunk_ready:
        start = max(gen_done, synth_free)
        done = start + timing.synth_latency
        synth_free = done
        ready.append(done)
        events.append(TimelineEvent(start, TimelineEventKind.SYNTH_START, index))
        events.append(TimelineEvent(done, TimelineEventKind.SYNTH_DONE, index))

    first_packet = 0.0
    prev_end: float | None = None
    underruns: list[tuple[int, float]] = []
    slack: list[float] = []
    for index, synth_done in enumerate(ready):
        if prev_end is None:
            play_start = synth_done
            first_packet = play_start
        else:
            slack.append(prev_end - synth_done)
            play_start = max(prev_end, synth_done)
            gap = play_start - prev_end
            if gap > 0:
                underruns.append((index, gap))
        play_end = play_start + timing.duration(index)
        events.append(TimelineEvent(play_start, TimelineEventKind.PLAY_START, index))
        events.append(TimelineEvent(play_end, TimelineEventKind.PLAY_END, index))
        prev_end = play_end

    events.sort(key=lambda ev: (ev.time, _EVENT_SORT[ev.kind], ev.chunk_index or 0))
    metrics = LatencyMetrics(
        first_packet_latency_s=first_packet,
        underrun_total_s=sum(g for _, g in underruns),
        underruns=tuple(underruns),
        per_chunk_slack_s=tuple(slack),
    )
    return Timeline(tuple(events), metrics)


def simulate(
    policy: ChunkPolicy,
    timing: TimingModel,
    reasoning_total: int,
    response_chunks: int,
    *,
    token_times: Sequence[float] | None = None,
) -> Timeline:
    """Simulate an idealized run: full-size chunks, reasoning split by
    n_reason, ordered per the policy's pattern.

    ``token_times`` replays recorded per-token generation latencies (one
    entry per token, marks included) instead of the uniform rate.
    """
    if response_chunks < 1:
        raise NonPositiveInputError("response_chunks must be >= 1")
    if reasoning_total < 0:
        raise NonPositiveInputError("reasoning_total must be nonnegative")
    spans = _plan_pattern(policy, reasoning_total, response_chunks)
    return _run_timeline(spans, timing, token_times)


def simulate_schedule(
    tokens: Sequence[Token],
    policy: ChunkPolicy,
    timing: TimingModel,
    *,
    token_times: Sequence[float] | None = None,
) -> Timeline:
    """Simulate the timeline of a realized (decoded or built) token stream."""
    spans = _plan_tokens(tokens, policy)
    return _run_timeline(spans, timing, token_times)
