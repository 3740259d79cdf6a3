"""Token vocabulary, control marks, chunk policies, and their wire formats.

Everything here is immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

from .errors import TokenDecodeError, ZeroChunkError, ZeroReasonError


class TokenKind(str, Enum):
    REASON = "reason"
    TEXT = "text"
    SPEECH = "speech"
    CONTROL = "control"


class ControlMark(str, Enum):
    """Control marks delimiting reasoning structure and sequence end.

    SOR/EOR enclose a complete reasoning span; SOPR/EOPR enclose one
    partial reasoning chunk; EOS terminates every sequence.
    """

    SOR = "SOR"
    EOR = "EOR"
    SOPR = "SOPR"
    EOPR = "EOPR"
    EOS = "EOS"


class Pattern(str, Enum):
    """Generation pattern selecting how reasoning interleaves with speech."""

    BASELINE = "baseline"
    NO_REASON = "no_reason"
    TBS = "tbs"
    STITCH_R = "stitch_r"
    STITCH_S = "stitch_s"

    @property
    def has_chunked_reasoning(self) -> bool:
        return self in (Pattern.STITCH_R, Pattern.STITCH_S)

    @property
    def has_reasoning(self) -> bool:
        return self in (Pattern.TBS, Pattern.STITCH_R, Pattern.STITCH_S)


@dataclass(frozen=True)
class Token:
    """One atomic unit of model output.

    ``payload`` is an opaque identifier (int or str) supplied by upstream
    tooling; control tokens carry exactly one :class:`ControlMark` name.
    """

    kind: TokenKind
    payload: int | str
    display: str | None = None

    def __post_init__(self) -> None:
        if self.kind is TokenKind.CONTROL:
            try:
                ControlMark(self.payload)
            except ValueError:
                raise TokenDecodeError(f"unknown control mark: {self.payload!r}") from None

    @property
    def mark(self) -> ControlMark | None:
        """The control mark carried by this token, or None for content tokens."""
        if self.kind is TokenKind.CONTROL:
            return ControlMark(self.payload)
        return None

    def is_mark(self, mark: ControlMark) -> bool:
        return self.kind is TokenKind.CONTROL and self.payload == mark.value


def control(mark: ControlMark) -> Token:
    return Token(TokenKind.CONTROL, mark.value)


def reason(payload: int | str, display: str | None = None) -> Token:
    return Token(TokenKind.REASON, payload, display)


def text(payload: int | str, display: str | None = None) -> Token:
    return Token(TokenKind.TEXT, payload, display)


def speech(payload: int | str, display: str | None = None) -> Token:
    return Token(TokenKind.SPEECH, payload, display)


# Defaults match the interleaved decoding ratio of GLM-4-Voice-style models
# (13 text / 26 speech) and the trained reasoning chunk size of 100.
DEFAULT_N_REASON = 100
DEFAULT_N_TEXT = 13
DEFAULT_N_SPEECH = 26


@dataclass(frozen=True)
class ChunkPolicy:
    """Per-chunk token counts plus the pattern they apply to.

    Counts cover content tokens only; control marks are separate and are
    priced explicitly by the latency model.
    """

    pattern: Pattern
    n_reason: int = DEFAULT_N_REASON
    n_text: int = DEFAULT_N_TEXT
    n_speech: int = DEFAULT_N_SPEECH


def make_policy(
    pattern: Pattern | str,
    n_reason: int | None = None,
    n_text: int | None = None,
    n_speech: int | None = None,
) -> ChunkPolicy:
    """Build a validated policy, applying defaults for omitted counts.

    Raises ZeroChunkError when n_text or n_speech is zero, and
    ZeroReasonError when a chunked-reasoning pattern gets n_reason = 0.
    """
    pattern = Pattern(pattern)
    n_reason = DEFAULT_N_REASON if n_reason is None else n_reason
    n_text = DEFAULT_N_TEXT if n_text is None else n_text
    n_speech = DEFAULT_N_SPEECH if n_speech is None else n_speech
    for name, value in (("n_reason", n_reason), ("n_text", n_text), ("n_speech", n_speech)):
        if not isinstance(value, int) or value < 0:
            raise ZeroChunkError(f"{name} must be a nonnegative integer, got {value!r}")
    if n_text == 0 or n_speech == 0:
        raise ZeroChunkError(f"chunk sizes must be >= 1, got n_text={n_text}, n_speech={n_speech}")
    if pattern.has_chunked_reasoning and n_reason == 0:
        raise ZeroReasonError(f"pattern {pattern.value} requires n_reason >= 1")
    return ChunkPolicy(pattern=pattern, n_reason=n_reason, n_text=n_text, n_speech=n_speech)


class SegmentKind(str, Enum):
    REASON = "reason"
    TEXT = "text"
    SPEECH = "speech"

    @property
    def token_kind(self) -> TokenKind:
        return TokenKind(self.value)


@dataclass(frozen=True)
class Segment:
    """One chunk of content tokens.

    A reason segment's token list excludes its enclosing SOPR/EOPR marks;
    marks are re-attached when the owning sequence is flattened. ``final``
    marks the last chunk of its kind.
    """

    kind: SegmentKind
    tokens: tuple[Token, ...]
    final: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for tok in self.tokens:
            if tok.kind is not self.kind.token_kind:
                raise TokenDecodeError(
                    f"{self.kind.value} segment cannot hold a {tok.kind.value} token"
                )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class InterleavedSequence:
    """An ordered run of segments forming one training target or response.

    ``to_tokens`` flattens the segments into the full token stream,
    re-attaching the control marks implied by the pattern.
    """

    pattern: Pattern
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))

    def segments_of(self, kind: SegmentKind) -> list[Segment]:
        return [s for s in self.segments if s.kind is kind]

    def to_tokens(self) -> list[Token]:
        """Flatten to the token stream, marks included, ending with EOS."""
        out: list[Token] = []
        if self.pattern is Pattern.TBS:
            out.append(control(ControlMark.SOR))
            for seg in self.segments:
                if seg.kind is SegmentKind.REASON:
                    out.extend(seg.tokens)
            out.append(control(ControlMark.EOR))
            for seg in self.segments:
                if seg.kind is not SegmentKind.REASON:
                    out.extend(seg.tokens)
        elif self.pattern.has_chunked_reasoning:
            reason_segs = self.segments_of(SegmentKind.REASON)
            if self.pattern is Pattern.STITCH_R and not reason_segs:
                # Degenerate empty reasoning: a bare EOR keeps the invariant
                # that everything after EOR is pure response.
                out.append(control(ControlMark.EOR))
            for seg in self.segments:
                if seg.kind is SegmentKind.REASON:
                    out.append(control(ControlMark.SOPR))
                    out.extend(seg.tokens)
                    out.append(control(ControlMark.EOPR))
                    if seg.final:
                        out.append(control(ControlMark.EOR))
                else:
                    out.extend(seg.tokens)
        else:
            for seg in self.segments:
                out.extend(seg.tokens)
        out.append(control(ControlMark.EOS))
        return out


# --- JSON wire format -------------------------------------------------------


def token_to_json(tok: Token) -> dict[str, Any]:
    return {"kind": tok.kind.value, "payload": tok.payload, "display": tok.display}


def token_from_json(obj: Any) -> Token:
    if not isinstance(obj, dict):
        raise TokenDecodeError(f"token record must be an object, got {type(obj).__name__}")
    try:
        kind = TokenKind(obj["kind"])
    except (KeyError, ValueError) as exc:
        raise TokenDecodeError(f"bad token kind in {obj!r}") from exc
    if "payload" not in obj:
        raise TokenDecodeError(f"token record missing payload: {obj!r}")
    payload = obj["payload"]
    if not isinstance(payload, (int, str)) or isinstance(payload, bool):
        raise TokenDecodeError(f"payload must be int or str, got {payload!r}")
    display = obj.get("display")
    if display is not None and not isinstance(display, str):
        raise TokenDecodeError(f"display must be a string or null, got {display!r}")
    return Token(kind, payload, display)


def segment_to_json(seg: Segment) -> dict[str, Any]:
    return {
        "kind": seg.kind.value,
        "tokens": [token_to_json(t) for t in seg.tokens],
        "final": seg.final,
    }


def segment_from_json(obj: Any) -> Segment:
    if not isinstance(obj, dict):
        raise TokenDecodeError(f"segment record must be an object, got {type(obj).__name__}")
    try:
        kind = SegmentKind(obj["kind"])
    except (KeyError, ValueError) as exc:
        raise TokenDecodeError(f"bad segment kind in record") from exc
    toks = obj.get("tokens")
    if not isinstance(toks, list):
        raise TokenDecodeError("segment tokens must be a list")
    final = obj.get("final", False)
    if not isinstance(final, bool):
        raise TokenDecodeError("segment final flag must be a boolean")
    return Segment(kind, tuple(token_from_json(t) for t in toks), final)


def tokens_to_json(tokens: Iterable[Token]) -> list[dict[str, Any]]:
    return [token_to_json(t) for t in tokens]


def tokens_from_json(objs: Iterable[Any]) -> list[Token]:
    return [token_from_json(o) for o in objs]
