"""Chunked interleaved decoding schedules for spoken language models.

The package covers three concerns: building interleaved training
sequences from (query, reasoning, response) triples, scheduling a live
decode over any token generator, and simulating the playback timeline to
quantify first-packet latency and underruns.
"""

from .builder import (
    BuildOutcome,
    DropReason,
    ResponseSegments,
    TrainingTriple,
    ValidationReport,
    Violation,
    build,
    build_no_reason,
    build_stitch_r,
    build_stitch_s,
    build_tbs,
    reconstruct,
    split_reasoning,
    validate_sequence,
    validate_tokens,
)
from .driver import DecodeRun, run_decode
from .errors import (
    BadOptionsError,
    FedAfterDoneError,
    InvalidSequenceError,
    KindMismatchError,
    MalformedResponseError,
    MarkOutOfPlaceError,
    NonPositiveInputError,
    NotExternalModeError,
    ProtocolViolationError,
    StitchError,
    TokenDecodeError,
    TraceExhaustedError,
    TraceKindMismatchError,
    TransportError,
    WrongPhaseError,
    ZeroChunkError,
    ZeroReasonError,
)
from .generators import (
    Generator,
    LengthDistribution,
    RemoteGenerator,
    SyntheticConfig,
    SyntheticGenerator,
    TraceGenerator,
)
from .latency import (
    FeasibilityReport,
    LatencyMetrics,
    Timeline,
    TimelineEvent,
    TimelineEventKind,
    TimingModel,
    feasibility,
    first_packet_latency,
    max_reason_budget,
    max_reason_budget_floor,
    simulate,
    simulate_schedule,
)
from .scheduler import (
    DecodeState,
    EventType,
    Phase,
    SchedulerEvent,
    crop_external_reasoning,
    start,
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
    make_policy,
    reason,
    segment_from_json,
    segment_to_json,
    speech,
    text,
    token_from_json,
    token_to_json,
)

__all__ = [name for name in dir() if not name.startswith("_")]
