"""Builders turning (query, reasoning, response) triples into interleaved
target sequences, the grammar validator, and the inverse reconstruction.

Builders are pure functions over immutable inputs and are safe to fan out
across workers, one triple each.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from .errors import InvalidSequenceError, MalformedResponseError, TokenDecodeError
from .tokens import (
    ChunkPolicy,
    ControlMark,
    InterleavedSequence,
    Pattern,
    Segment,
    SegmentKind,
    Token,
    TokenKind,
    segment_from_json,
    segment_to_json,
    token_from_json,
    token_to_json,
)


@dataclass(frozen=True)
class ResponseSegments:
    """The spoken response: text chunks interleaved with speech chunks.

    Interleave order is fixed as t1, s1, t2, s2, ... with any surplus
    speech chunks trailing, so the text chunk count never exceeds the
    speech chunk count.
    """

    text_chunks: tuple[tuple[Token, ...], ...]
    speech_chunks: tuple[tuple[Token, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "text_chunks", tuple(tuple(c) for c in self.text_chunks))
        object.__setattr__(self, "speech_chunks", tuple(tuple(c) for c in self.speech_chunks))

    def check(self, policy: ChunkPolicy | None = None) -> None:
        """Raise MalformedResponseError if the interleaving invariants fail.

        With a policy, chunk sizes are checked too: every non-final text
        chunk must have exactly n_text tokens (the final one may be
        shorter) and every non-final speech chunk exactly n_speech (the
        final span may be longer).
        """
        if not self.text_chunks or not self.speech_chunks:
            raise MalformedResponseError("response needs at least one text and one speech chunk")
        if len(self.text_chunks) > len(self.speech_chunks):
            raise MalformedResponseError(
                f"{len(self.text_chunks)} text chunks exceed "
                f"{len(self.speech_chunks)} speech chunks"
            )
        for name, chunks, kind in (
            ("text", self.text_chunks, TokenKind.TEXT),
            ("speech", self.speech_chunks, TokenKind.SPEECH),
        ):
            for i, chunk in enumerate(chunks):
                if not chunk:
                    raise MalformedResponseError(f"{name} chunk {i} is empty")
                for tok in chunk:
                    if tok.kind is not kind:
                        raise MalformedResponseError(
                            f"{name} chunk {i} holds a {tok.kind.value} token"
                        )
        if policy is None:
            return
        for i, chunk in enumerate(self.text_chunks):
            if i < len(self.text_chunks) - 1 and len(chunk) != policy.n_text:
                raise MalformedResponseError(
                    f"non-final text chunk {i} has {len(chunk)} tokens, expected {policy.n_text}"
                )
            if len(chunk) > policy.n_text:
                raise MalformedResponseError(
                    f"text chunk {i} has {len(chunk)} tokens, exceeding {policy.n_text}"
                )
        for i, chunk in enumerate(self.speech_chunks):
            if i < len(self.speech_chunks) - 1 and len(chunk) != policy.n_speech:
                raise MalformedResponseError(
                    f"non-final speech chunk {i} has {len(chunk)} tokens, "
                    f"expected {policy.n_speech}"
                )


@dataclass(frozen=True)
class TrainingTriple:
    """One training instance: spoken query, unspoken reasoning, response."""

    id: str
    input_tokens: tuple[Token, ...]
    reasoning: tuple[Token, ...]
    response: ResponseSegments

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_tokens", tuple(self.input_tokens))
        object.__setattr__(self, "reasoning", tuple(self.reasoning))


class DropReason(str, Enum):
    REASONING_OUTRUNS_TEXT = "reasoning_outruns_text"


@dataclass(frozen=True)
class BuildOutcome:
    """Either a built sequence or the reason the triple was dropped."""

    sequence: InterleavedSequence | None = None
    dropped: DropReason | None = None

    def __post_init__(self) -> None:
        if (self.sequence is None) == (self.dropped is None):
            raise ValueError("exactly one of sequence/dropped must be set")

    @property
    def ok(self) -> bool:
        return self.sequence is not None


def split_reasoning(z: Sequence[Token], n_reason: int) -> list[Segment]:
    """Split reasoning tokens into chunks of n_reason, last one 1..n_reason.

    Concatenating the chunk tokens reproduces z exactly; empty z yields
    an empty list.
    """
    if n_reason < 1:
        raise ValueError(f"n_reason must be >= 1, got {n_reason}")
    chunks = [tuple(z[i : i + n_reason]) for i in range(0, len(z), n_reason)]
    return [
        Segment(SegmentKind.REASON, chunk, final=(i == len(chunks) - 1))
        for i, chunk in enumerate(chunks)
    ]


def _response_segments(response: ResponseSegments) -> list[Segment]:
    """Interleave text/speech chunks as t1 s1 t2 s2 ... with surplus speech trailing."""
    texts = response.text_chunks
    speeches = response.speech_chunks
    out: list[Segment] = []
    for i in range(len(speeches)):
        if i < len(texts):
            out.append(Segment(SegmentKind.TEXT, texts[i], final=(i == len(texts) - 1)))
        out.append(Segment(SegmentKind.SPEECH, speeches[i], final=(i == len(speeches) - 1)))
    return out


def build_tbs(triple: TrainingTriple) -> InterleavedSequence:
    """Full reasoning span first, then the interleaved response. Never drops."""
    triple.response.check()
    segments = [Segment(SegmentKind.REASON, triple.reasoning, final=True)]
    segments.extend(_response_segments(triple.response))
    return InterleavedSequence(Pattern.TBS, tuple(segments))


def build_no_reason(triple: TrainingTriple, pattern: Pattern = Pattern.NO_REASON) -> InterleavedSequence:
    """Interleaved response only; reasoning is discarded."""
    if pattern not in (Pattern.NO_REASON, Pattern.BASELINE):
        raise ValueError(f"pattern {pattern.value} is not a plain interleaved pattern")
    triple.response.check()
    return InterleavedSequence(pattern, tuple(_response_segments(triple.response)))


def _build_chunked(triple: TrainingTriple, policy: ChunkPolicy, reason_first: bool) -> BuildOutcome:
    triple.response.check(policy)
    reason_chunks = split_reasoning(triple.reasoning, policy.n_reason)
    texts = triple.response.text_chunks
    speeches = triple.response.speech_chunks
    m, k = len(reason_chunks), len(texts)
    if m > k:
        return BuildOutcome(dropped=DropReason.REASONING_OUTRUNS_TEXT)
    segments: list[Segment] = []
    for i in range(len(speeches)):
        has_cycle_text = i < k
        if reason_first and has_cycle_text and i < m:
            segments.append(reason_chunks[i])
        if has_cycle_text:
            segments.append(Segment(SegmentKind.TEXT, texts[i], final=(i == k - 1)))
        segments.append(
            Segment(SegmentKind.SPEECH, speeches[i], final=(i == len(speeches) - 1))
        )
        if not reason_first and has_cycle_text and i < m:
            segments.append(reason_chunks[i])
    return BuildOutcome(sequence=InterleavedSequence(policy.pattern, tuple(segments)))


def build_stitch_r(triple: TrainingTriple, policy: ChunkPolicy) -> BuildOutcome:
    """Reasoning-first cycles: z1 t1 s1 z2 t2 s2 ...

    Drops the triple when its reasoning chunk count exceeds its text
    chunk count (the reasoning thinks slower than the text spans).
    """
    if policy.pattern is not Pattern.STITCH_R:
        raise ValueError(f"policy pattern is {policy.pattern.value}, expected stitch_r")
    return _build_chunked(triple, policy, reason_first=True)


def build_stitch_s(triple: TrainingTriple, policy: ChunkPolicy) -> BuildOutcome:
    """Speaking-first cycles: t1 s1 z1 t2 s2 z2 ... Same drop rule as stitch_r."""
    if policy.pattern is not Pattern.STITCH_S:
        raise ValueError(f"policy pattern is {policy.pattern.value}, expected stitch_s")
    return _build_chunked(triple, policy, reason_first=False)


def build(triple: TrainingTriple, policy: ChunkPolicy) -> BuildOutcome:
    """Dispatch to the pattern-specific builder."""
    if policy.pattern is Pattern.TBS:
        return BuildOutcome(sequence=build_tbs(triple))
    if policy.pattern in (Pattern.NO_REASON, Pattern.BASELINE):
        return BuildOutcome(sequence=build_no_reason(triple, policy.pattern))
    if policy.pattern is Pattern.STITCH_R:
        return build_stitch_r(triple, policy)
    return build_stitch_s(triple, policy)


# --- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    position: int

    def to_json(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "position": self.position}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str, position: int) -> None:
        self.violations.append(Violation(code, message, position))

    def warn(self, code: str, message: str, position: int) -> None:
        self.warnings.append(Violation(code, message, position))

    def to_json(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": [v.to_json() for v in self.violations],
            "warnings": [v.to_json() for v in self.warnings],
        }


@dataclass
class _Run:
    kind: TokenKind
    position: int
    count: int


@dataclass
class _Mark:
    mark: ControlMark
    position: int


def _itemize(tokens: Sequence[Token]) -> list[_Run | _Mark]:
    """Collapse the stream into maximal same-kind content runs and marks."""
    items: list[_Run | _Mark] = []
    for i, tok in enumerate(tokens):
        if tok.kind is TokenKind.CONTROL:
            items.append(_Mark(ControlMark(tok.payload), i))
        elif items and isinstance(items[-1], _Run) and items[-1].kind is tok.kind:
            items[-1].count += 1
        else:
            items.append(_Run(tok.kind, i, 1))
    return items


class _StreamChecker:
    """Walks the itemized stream against one pattern's grammar."""

    def __init__(self, items: list[_Run | _Mark], policy: ChunkPolicy, report: ValidationReport):
        self.items = items
        self.policy = policy
        self.report = report
        self.pos = 0

    def peek(self) -> _Run | _Mark | None:
        return self.items[self.pos] if self.pos < len(self.items) else None

    def take(self) -> _Run | _Mark:
        item = self.items[self.pos]
        self.pos += 1
        return item

    def last_index(self, kind: TokenKind) -> int:
        for i in range(len(self.items) - 1, -1, -1):
            item = self.items[i]
            if isinstance(item, _Run) and item.kind is kind:
                return i
        return -1

    def check_text_run(self, run: _Run, item_index: int) -> None:
        is_last = item_index == self.last_index(TokenKind.TEXT)
        n = self.policy.n_text
        if run.count > n:
            self.report.add(
                "oversize_chunk", f"text chunk has {run.count} tokens, limit {n}", run.position
            )
        elif not is_last and run.count < n:
            self.report.add(
                "short_nonfinal_chunk",
                f"non-final text chunk has {run.count} tokens, expected {n}",
                run.position,
            )

    def check_speech_run(self, run: _Run, item_index: int) -> None:
        # The final speech span absorbs any surplus chunks, so only
        # non-final spans are pinned to exactly n_speech.
        if item_index == self.last_index(TokenKind.SPEECH):
            return
        n = self.policy.n_speech
        if run.count != n:
            code = "oversize_chunk" if run.count > n else "short_nonfinal_chunk"
            self.report.add(
                code, f"non-final speech chunk has {run.count} tokens, expected {n}", run.position
            )


def validate_tokens(tokens: Sequence[Token], policy: ChunkPolicy) -> ValidationReport:
    """Check a flat token stream against the pattern grammar.

    Violations are data, not exceptions: the report lists chunk-size
    mismatches, mark imbalance, misplaced or duplicated EOR, pattern-order
    breaks, and content after EOS.
    """
    report = ValidationReport()
    eos_positions = [i for i, t in enumerate(tokens) if t.is_mark(ControlMark.EOS)]
    if not eos_positions:
        report.add("missing_eos", "sequence does not end with EOS", max(len(tokens) - 1, 0))
        body = list(tokens)
    else:
        first_eos = eos_positions[0]
        if first_eos != len(tokens) - 1:
            report.add(
                "tokens_after_eos",
                f"{len(tokens) - first_eos - 1} tokens after EOS",
                first_eos + 1,
            )
        body = list(tokens[:first_eos])

    items = _itemize(body)
    checker = _StreamChecker(items, policy, report)
    if policy.pattern is Pattern.TBS:
        _check_tbs(checker)
    elif policy.pattern.has_chunked_reasoning:
        _check_stitch(checker, reason_first=policy.pattern is Pattern.STITCH_R)
    else:
        _check_plain(checker)
    return report


def _check_response_cycles(c: _StreamChecker) -> None:
    """Consume alternating text/speech runs to the end of the stream."""
    saw_text = False
    while c.peek() is not None:
        item = c.take()
        if isinstance(item, _Run) and item.kind is TokenKind.TEXT:
            c.check_text_run(item, c.pos - 1)
            saw_text = True
            nxt = c.peek()
            if isinstance(nxt, _Run) and nxt.kind is TokenKind.SPEECH:
                c.take()
                c.check_speech_run(nxt, c.pos - 1)
            else:
                c.report.add(
                    "pattern_order",
                    "text chunk is not followed by a speech chunk",
                    item.position,
                )
        elif isinstance(item, _Run) and item.kind is TokenKind.SPEECH:
            # Trailing surplus merges into one run, so a standalone speech
            # run can only legally appear before any text was seen: never.
            c.check_speech_run(item, c.pos - 1)
            c.report.add("pattern_order", "speech chunk without a preceding text chunk", item.position)
        else:
            pos = item.position
            what = item.mark.value if isinstance(item, _Mark) else item.kind.value
            c.report.add("pattern_order", f"unexpected {what} in response section", pos)
    if not saw_text:
        c.report.add("pattern_order", "response has no text chunk", 0)


def _check_tbs(c: _StreamChecker) -> None:
    item = c.peek()
    if isinstance(item, _Mark) and item.mark is ControlMark.SOR:
        c.take()
    else:
        c.report.add("pattern_order", "sequence does not open with SOR", 0)
    item = c.peek()
    if isinstance(item, _Run) and item.kind is TokenKind.REASON:
        c.take()
    item = c.peek()
    if isinstance(item, _Mark) and item.mark is ControlMark.EOR:
        c.take()
    else:
        c.report.add("mark_imbalance", "reasoning span is not closed by EOR", 0)
    _forbid_marks(c, {ControlMark.SOPR, ControlMark.EOPR, ControlMark.SOR, ControlMark.EOR})
    _check_response_cycles(c)


def _check_plain(c: _StreamChecker) -> None:
    _forbid_marks(c, {ControlMark.SOR, ControlMark.EOR, ControlMark.SOPR, ControlMark.EOPR})
    kept: list[_Run | _Mark] = []
    for item in c.items:
        if isinstance(item, _Run) and item.kind is TokenKind.REASON:
            c.report.add(
                "pattern_order", "reasoning tokens in a no-reasoning pattern", item.position
            )
        else:
            kept.append(item)
    c.items = kept
    c.pos = 0
    _check_response_cycles(c)


def _forbid_marks(c: _StreamChecker, marks: set[ControlMark]) -> None:
    """Report and strip forbidden marks from the remaining items."""
    kept: list[_Run | _Mark] = c.items[: c.pos]
    for item in c.items[c.pos :]:
        if isinstance(item, _Mark) and item.mark in marks:
            c.report.add(
                "pattern_order", f"{item.mark.value} is illegal in this pattern", item.position
            )
        else:
            kept.append(item)
    c.items = kept


def _check_stitch(c: _StreamChecker, *, reason_first: bool) -> None:
    """Grammar for the chunked-reasoning patterns.

    Reason-first cycles look like [SOPR] z [EOPR] t s; speaking-first
    cycles look like t s [SOPR] z [EOPR]. The final chunk's EOPR is
    immediately followed by EOR, after which only t/s content may appear,
    with any surplus speech trailing.
    """
    _forbid_marks(c, {ControlMark.SOR})
    eor_seen = False
    eor_count = 0
    chunk_count = 0
    reasoning_stopped = False  # a cycle skipped its chunk before EOR
    saw_text = False
    prev: str | None = None  # last consumed structural element
    last_eor_position = -1
    last_text_position = -1

    def consume_reason_chunk() -> None:
        nonlocal eor_seen, eor_count, chunk_count, last_eor_position, prev
        sopr = c.take()
        assert isinstance(sopr, _Mark) and sopr.mark is ControlMark.SOPR
        if eor_seen:
            c.report.add("pattern_order", "reasoning chunk after EOR", sopr.position)
        elif reasoning_stopped:
            c.report.add(
                "pattern_order",
                "reasoning chunks must occupy a contiguous prefix of cycles",
                sopr.position,
            )
        if prev == "chunk":
            c.report.add("pattern_order", "adjacent reasoning chunks", sopr.position)
        elif prev == "text":
            c.report.add(
                "pattern_order", "reasoning chunk splits a text/speech pair", sopr.position
            )
        elif prev is None and not reason_first:
            c.report.add(
                "pattern_order", "reasoning chunk before any spoken response", sopr.position
            )
        size = 0
        run_pos = sopr.position
        item = c.peek()
        if isinstance(item, _Run) and item.kind is TokenKind.REASON:
            c.take()
            size = item.count
            run_pos = item.position
        item = c.peek()
        if isinstance(item, _Mark) and item.mark is ControlMark.EOPR:
            c.take()
        else:
            c.report.add("mark_imbalance", "SOPR without matching EOPR", sopr.position)
            prev = "chunk"
            return
        chunk_count += 1
        prev = "chunk"
        nxt = c.peek()
        is_final = isinstance(nxt, _Mark) and nxt.mark is ControlMark.EOR
        if is_final:
            eor = c.take()
            eor_count += 1
            eor_seen = True
            last_eor_position = eor.position
        if size == 0:
            c.report.add("empty_chunk", "reasoning chunk has no tokens", run_pos)
        elif size > c.policy.n_reason:
            c.report.add(
                "oversize_chunk",
                f"reasoning chunk has {size} tokens, limit {c.policy.n_reason}",
                run_pos,
            )
        elif not is_final and size < c.policy.n_reason:
            c.report.add(
                "short_nonfinal_chunk",
                f"non-final reasoning chunk has {size} tokens, expected {c.policy.n_reason}",
                run_pos,
            )

    while c.peek() is not None:
        item = c.peek()
        if isinstance(item, _Mark):
            if item.mark is ControlMark.SOPR:
                consume_reason_chunk()
                continue
            if item.mark is ControlMark.EOR:
                c.take()
                eor_count += 1
                if reason_first and not eor_seen and chunk_count == 0 and not saw_text:
                    # Degenerate empty reasoning: a bare leading EOR.
                    eor_seen = True
                    last_eor_position = item.position
                else:
                    c.report.add(
                        "duplicate_eor" if eor_seen else "pattern_order",
                        "EOR is not adjacent to a final reasoning chunk",
                        item.position,
                    )
                    eor_seen = True
                continue
            if item.mark is ControlMark.EOPR:
                c.take()
                c.report.add("mark_imbalance", "EOPR without matching SOPR", item.position)
                continue
            c.take()
            c.report.add("pattern_order", f"unexpected {item.mark.value}", item.position)
            continue
        if item.kind is TokenKind.REASON:
            c.take()
            c.report.add("mark_imbalance", "reasoning tokens outside SOPR/EOPR", item.position)
            continue
        if item.kind is TokenKind.TEXT:
            if reason_first and not eor_seen and prev != "chunk":
                # A reason-first cycle opened with text: its chunk is missing.
                reasoning_stopped = True
            c.take()
            c.check_text_run(item, c.pos - 1)
            saw_text = True
            last_text_position = item.position
            prev = "text"
            nxt = c.peek()
            if isinstance(nxt, _Run) and nxt.kind is TokenKind.SPEECH:
                c.take()
                c.check_speech_run(nxt, c.pos - 1)
                prev = "speech"
            else:
                c.report.add(
                    "pattern_order", "text chunk is not followed by a speech chunk", item.position
                )
            if not reason_first and not eor_seen and chunk_count > 0 and prev == "speech":
                nxt = c.peek()
                if not (isinstance(nxt, _Mark) and nxt.mark is ControlMark.SOPR):
                    reasoning_stopped = True
            continue
        # A standalone speech run: legal only as the trailing surplus span
        # after a speaking-first pattern's final reasoning chunk.
        c.take()
        c.check_speech_run(item, c.pos - 1)
        legal_surplus = not reason_first and prev == "chunk" and eor_seen
        if not legal_surplus:
            code = "pattern_order"
            msg = (
                "speech chunk before any text chunk"
                if not saw_text
                else "speech chunk without a preceding text chunk"
            )
            c.report.add(code, msg, item.position)
        elif c.peek() is not None:
            nxt = c.peek()
            c.report.add(
                "pattern_order", "content after the trailing speech span", nxt.position
            )
        prev = "speech"

    if not saw_text:
        c.report.add("pattern_order", "response has no text chunk", 0)
    if eor_count == 0 and (chunk_count > 0 or reason_first):
        c.report.add("missing_eor", "reasoning structure is never closed by EOR", 0)
    if eor_count > 1:
        c.report.add("duplicate_eor", f"EOR appears {eor_count} times", 0)
    if (
        not reason_first
        and eor_count == 1
        and chunk_count > 0
        and last_eor_position > last_text_position >= 0
    ):
        c.report.warn(
            "reasoning_ends_sequence",
            "final reasoning chunk follows the last text chunk",
            last_eor_position,
        )


def validate_sequence(seq: InterleavedSequence, policy: ChunkPolicy) -> ValidationReport:
    """Validate a segment sequence by checking its flattened token stream."""
    report = validate_tokens(seq.to_tokens(), policy)
    if seq.pattern is not policy.pattern and not (
        {seq.pattern, policy.pattern} <= {Pattern.BASELINE, Pattern.NO_REASON}
    ):
        report.add(
            "pattern_mismatch",
            f"sequence pattern {seq.pattern.value} differs from policy {policy.pattern.value}",
            0,
        )
    return report


# --- reconstruction -----------------------------------------------------------


def reconstruct(seq: InterleavedSequence) -> tuple[list[Token], ResponseSegments]:
    """Invert a built sequence back into (reasoning tokens, response).

    Raises InvalidSequenceError when the segment arrangement cannot have
    come from a builder.
    """
    reason_tokens: list[Token] = []
    texts: list[tuple[Token, ...]] = []
    speeches: list[tuple[Token, ...]] = []
    prev_content: SegmentKind | None = None
    for seg in seq.segments:
        if seg.kind is SegmentKind.REASON:
            if not seq.pattern.has_reasoning:
                raise InvalidSequenceError(
                    f"reason segment in {seq.pattern.value} sequence"
                )
            reason_tokens.extend(seg.tokens)
            continue
        if seg.kind is SegmentKind.TEXT:
            if prev_content is SegmentKind.TEXT:
                raise InvalidSequenceError("adjacent text chunks")
            if len(texts) < len(speeches):
                raise InvalidSequenceError("text chunk after surplus speech began")
            texts.append(seg.tokens)
        else:
            if prev_content is None and seq.pattern is not Pattern.TBS:
                pass  # leading speech caught below by count check
            speeches.append(seg.tokens)
        prev_content = seg.kind
    if not texts or not speeches:
        raise InvalidSequenceError("sequence lacks text or speech chunks")
    if len(texts) > len(speeches):
        raise InvalidSequenceError("more text chunks than speech chunks")
    return reason_tokens, ResponseSegments(tuple(texts), tuple(speeches))


# --- JSONL wire format --------------------------------------------------------


def triple_from_json(obj: Any) -> TrainingTriple:
    if not isinstance(obj, dict):
        raise TokenDecodeError("triple record must be an object")
    try:
        triple_id = obj["id"]
        input_tokens = tuple(token_from_json(t) for t in obj["input"])
        reasoning = tuple(token_from_json(t) for t in obj["reasoning"])
        resp = obj["response"]
        response = ResponseSegments(
            tuple(tuple(token_from_json(t) for t in chunk) for chunk in resp["text_chunks"]),
            tuple(tuple(token_from_json(t) for t in chunk) for chunk in resp["speech_chunks"]),
        )
    except (KeyError, TypeError) as exc:
        raise TokenDecodeError(f"bad triple record: {exc}") from exc
    if not isinstance(triple_id, str):
        raise TokenDecodeError("triple id must be a string")
    for tok in reasoning:
        if tok.kind is not TokenKind.REASON:
            raise TokenDecodeError(f"reasoning holds a {tok.kind.value} token")
    return TrainingTriple(triple_id, input_tokens, reasoning, response)


def triple_to_json(triple: TrainingTriple) -> dict[str, Any]:
    return {
        "id": triple.id,
        "input": [token_to_json(t) for t in triple.input_tokens],
        "reasoning": [token_to_json(t) for t in triple.reasoning],
        "response": {
            "text_chunks": [[token_to_json(t) for t in c] for c in triple.response.text_chunks],
            "speech_chunks": [
                [token_to_json(t) for t in c] for c in triple.response.speech_chunks
            ],
        },
    }


def built_record_to_json(triple_id: str, pattern: Pattern, outcome: BuildOutcome) -> dict[str, Any]:
    return {
        "id": triple_id,
        "pattern": pattern.value,
        "segments": (
            [segment_to_json(s) for s in outcome.sequence.segments] if outcome.ok else None
        ),
        "dropped": outcome.dropped.value if outcome.dropped else None,
    }


def built_record_from_json(obj: Any) -> tuple[str, Pattern, BuildOutcome]:
    if not isinstance(obj, dict):
        raise TokenDecodeError("built record must be an object")
    try:
        pattern = Pattern(obj["pattern"])
        triple_id = obj["id"]
    except (KeyError, ValueError) as exc:
        raise TokenDecodeError(f"bad built record: {exc}") from exc
    if obj.get("dropped"):
        return triple_id, pattern, BuildOutcome(dropped=DropReason(obj["dropped"]))
    segments = obj.get("segments")
    if not isinstance(segments, list):
        raise TokenDecodeError("built record has neither segments nor a drop reason")
    seq = InterleavedSequence(pattern, tuple(segment_from_json(s) for s in segments))
    return triple_id, pattern, BuildOutcome(sequence=seq)
