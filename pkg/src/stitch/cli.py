"""Command-line front door: budget, build, run, sweep, validate.

Machine-readable reports (JSON / CSV) go to stdout and the output
directory; human-readable notes go to stderr. Exit status: 0 success,
1 validation or decode failure, 2 usage error, 3 I/O or transport error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from .builder import (
    build,
    built_record_from_json,
    built_record_to_json,
    triple_from_json,
    validate_tokens,
)
from .driver import DecodeRun, run_decode
from .errors import (
    BadOptionsError,
    NonPositiveInputError,
    ProtocolViolationError,
    StitchError,
    TokenDecodeError,
    TransportError,
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
from .latency import TimingModel, max_reason_budget, max_reason_budget_floor, simulate_schedule
from .scheduler import crop_external_reasoning
from .tokens import (
    ChunkPolicy,
    Pattern,
    Token,
    TokenKind,
    make_policy,
    token_from_json,
    tokens_to_json,
)

_USAGE_ERRORS = (BadOptionsError, ZeroChunkError, ZeroReasonError, NonPositiveInputError, ValueError)
_TRANSPORT_ERRORS = (TransportError, ProtocolViolationError, OSError)

REMOTE_URL_ENV = "STITCH_REMOTE_URL"


def _eprint(msg: str) -> None:
    print(msg, file=sys.stderr)


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":")) + "\n"


def _policy_from_args(args: argparse.Namespace) -> ChunkPolicy:
    return make_policy(
        args.pattern,
        n_reason=args.policy_n_reason,
        n_text=args.policy_n_text,
        n_speech=args.policy_n_speech,
    )


def _timing_from_args(args: argparse.Namespace) -> TimingModel:
    durations = tuple(float(part) for part in args.chunk_durations.split(",") if part.strip())
    return TimingModel(
        rate=args.rate,
        chunk_durations=durations,
        synth_latency=args.synth_latency,
        mark_cost=args.mark_cost,
    )


def _read_jsonl(path: Path) -> list[tuple[int, Any]]:
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            records.append((lineno, json.loads(line)))
    return records


def _read_token_file(path: Path) -> list[Token]:
    return [token_from_json(obj) for _, obj in _read_jsonl(path)]


# --- budget -------------------------------------------------------------------


def cmd_budget(args: argparse.Namespace) -> int:
    value = max_reason_budget(args.rate, args.chunk, args.n_text, args.n_speech)
    floor = max_reason_budget_floor(args.rate, args.chunk, args.n_text, args.n_speech)
    sys.stdout.write(_dump_json({"max_reason_tokens": value, "floor": floor}))
    _eprint(f"reasoning budget: {value} tokens (floor {floor})")
    return 0


# --- build --------------------------------------------------------------------


def cmd_build(args: argparse.Namespace) -> int:
    policy = _policy_from_args(args)
    in_path = Path(args.input)
    out_path = Path(args.output)
    total = built = dropped = 0
    dropped_by_reason: dict[str, int] = {}
    errors: list[dict[str, Any]] = []
    with out_path.open("w", encoding="utf-8") as out:
        for lineno, obj in _read_jsonl(in_path):
            total += 1
            try:
                triple = triple_from_json(obj)
                outcome = build(triple, policy)
            except StitchError as exc:
                errors.append({"line": lineno, "error": str(exc)})
                continue
            out.write(_dump_json(built_record_to_json(triple.id, policy.pattern, outcome)))
            if outcome.ok:
                built += 1
            else:
                dropped += 1
                key = outcome.dropped.value
                dropped_by_reason[key] = dropped_by_reason.get(key, 0) + 1
    stats = {
        "total": total,
        "built": built,
        "dropped": dropped,
        "dropped_by_reason": dropped_by_reason,
        "errors": len(errors),
    }
    if errors:
        stats["error_lines"] = errors
    if args.stats:
        Path(args.stats).write_text(_dump_json(stats), encoding="utf-8")
    sys.stdout.write(_dump_json(stats))
    _eprint(f"built {built}/{total} ({dropped} dropped, {len(errors)} bad lines) -> {out_path}")
    return 0


# --- run ----------------------------------------------------------------------


def _make_generator(args: argparse.Namespace, policy: ChunkPolicy) -> Generator:
    if args.generator == "trace":
        if not args.trace_file:
            raise BadOptionsError("--trace-file is required for the trace generator")
        return TraceGenerator(_read_token_file(Path(args.trace_file)))
    if args.generator == "synthetic":
        config = SyntheticConfig(
            seed=args.seed,
            reasoning_length=LengthDistribution(args.reason_mean, args.reason_spread),
            text_chunk_count=LengthDistribution(args.text_chunks_mean, args.text_chunks_spread),
            early_eopr_probability=args.early_eopr,
        )
        return SyntheticGenerator(config, policy)
    url = args.remote_url or os.environ.get(REMOTE_URL_ENV)
    if not url:
        raise BadOptionsError(f"remote generator needs --remote-url or ${REMOTE_URL_ENV}")
    return RemoteGenerator(
        url,
        session_id=args.remote_session,
        timeout=args.remote_timeout,
        auth_header=args.remote_auth_header,
    )


def _effective_policy(policy: ChunkPolicy, truncate_at: int | None) -> ChunkPolicy:
    """Validation policy for truncated runs: N' is the realized chunk size."""
    if truncate_at is None:
        return policy
    return ChunkPolicy(policy.pattern, truncate_at, policy.n_text, policy.n_speech)


def _execute_run(
    args: argparse.Namespace,
    policy: ChunkPolicy,
    timing: TimingModel,
    out_dir: Path,
    *,
    truncate_at: int | None,
    seed: int,
) -> dict[str, Any]:
    args.seed = seed
    generator = _make_generator(args, policy)
    external = None
    if args.external_reasoning:
        reasoning = _read_token_file(Path(args.external_reasoning))
        n_prime = args.n_prime if args.n_prime else policy.n_reason
        external = crop_external_reasoning(reasoning, n_prime)
    run = run_decode(
        policy,
        generator,
        truncate_at=truncate_at,
        external_reasoning=external,
    )
    report = validate_tokens(run.tokens, _effective_policy(policy, truncate_at))
    timeline = simulate_schedule(run.tokens, policy, timing)

    out_dir.mkdir(parents=True, exist_ok=True)
    record = built_record_to_json("run", policy.pattern, _record_outcome(run))
    (out_dir / "sequence.jsonl").write_text(_dump_json(record), encoding="utf-8")
    with (out_dir / "events.jsonl").open("w", encoding="utf-8") as fh:
        for event in run.events:
            fh.write(_dump_json(event.to_json()))
    (out_dir / "timeline.csv").write_text(timeline.to_csv(), encoding="utf-8")
    metrics = timeline.metrics.to_json()
    (out_dir / "metrics.json").write_text(_dump_json(metrics), encoding="utf-8")
    (out_dir / "validation.json").write_text(_dump_json(report.to_json()), encoding="utf-8")

    reason_total = sum(
        1 for t in run.tokens if t.kind is TokenKind.REASON
    )
    speech_chunks = sum(
        1 for e in run.events if e.type.value == "audio_chunk_ready"
    )
    return {
        "metrics": metrics,
        "validation_ok": report.ok,
        "reasoning_tokens_total": reason_total,
        "chunks_emitted": speech_chunks,
        "tokens": len(run.tokens),
    }


def _record_outcome(run: DecodeRun):
    from .builder import BuildOutcome

    return BuildOutcome(sequence=run.sequence)


def cmd_run(args: argparse.Namespace) -> int:
    policy = _policy_from_args(args)
    timing = _timing_from_args(args)
    out_dir = Path(args.out_dir)
    summary = _execute_run(
        args, policy, timing, out_dir, truncate_at=args.truncate_at, seed=args.seed
    )
    sys.stdout.write(_dump_json(summary["metrics"]))
    _eprint(
        f"run complete: {summary['tokens']} tokens, {summary['chunks_emitted']} audio chunks"
        f" -> {out_dir}"
    )
    if not summary["validation_ok"]:
        _eprint("emitted sequence failed validation (see validation.json)")
        return 1
    return 0


# --- sweep ----------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.n_prime_min > args.n_prime_max:
        raise BadOptionsError("--n-prime-min must not exceed --n-prime-max")
    if args.n_prime_step < 1:
        raise BadOptionsError("--n-prime-step must be >= 1")
    policy = _policy_from_args(args)
    if not policy.pattern.has_chunked_reasoning:
        raise BadOptionsError("sweep requires a chunked-reasoning pattern")
    timing = _timing_from_args(args)
    out_dir = Path(args.out_dir)
    rows = []
    failed = False
    for n_prime in range(args.n_prime_min, args.n_prime_max + 1, args.n_prime_step):
        run_dir = out_dir / f"n_prime_{n_prime:03d}"
        summary = _execute_run(
            args, policy, timing, run_dir, truncate_at=n_prime, seed=args.seed
        )
        failed = failed or not summary["validation_ok"]
        rows.append(
            {
                "n_prime": n_prime,
                "first_packet_latency_s": summary["metrics"]["first_packet_latency_s"],
                "underrun_total_s": summary["metrics"]["underrun_total_s"],
                "chunks_emitted": summary["chunks_emitted"],
                "reasoning_tokens_total": summary["reasoning_tokens_total"],
            }
        )
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf,
        fieldnames=[
            "n_prime",
            "first_packet_latency_s",
            "underrun_total_s",
            "chunks_emitted",
            "reasoning_tokens_total",
        ],
        lineterminator="\n",
    )
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    _eprint(f"sweep complete: {len(rows)} rows -> {out_dir / 'sweep.csv'}")
    return 1 if failed else 0


# --- validate ---------------------------------------------------------------------


def _tokens_from_record(obj: Any) -> tuple[str, list[Token] | None]:
    """Extract a token stream from a sequence-file record.

    Accepts builder output records (segments are flattened, dropped rows
    skipped), {"tokens": [...]} records, and bare token arrays.
    """
    if isinstance(obj, list):
        return "", [token_from_json(t) for t in obj]
    if not isinstance(obj, dict):
        raise TokenDecodeError("record must be an object or token array")
    rec_id = str(obj.get("id", ""))
    if "tokens" in obj:
        return rec_id, [token_from_json(t) for t in obj["tokens"]]
    if "segments" in obj:
        _, _, outcome = built_record_from_json(obj)
        if not outcome.ok:
            return rec_id, None
        return rec_id, outcome.sequence.to_tokens()
    raise TokenDecodeError("record has neither tokens nor segments")


def cmd_validate(args: argparse.Namespace) -> int:
    policy = _policy_from_args(args)
    checked = skipped = 0
    bad_lines: list[dict[str, Any]] = []
    violations_total = 0
    for lineno, obj in _read_jsonl(Path(args.input)):
        try:
            rec_id, tokens = _tokens_from_record(obj)
        except TokenDecodeError as exc:
            bad_lines.append({"line": lineno, "id": "", "error": str(exc)})
            violations_total += 1
            continue
        if tokens is None:
            skipped += 1
            continue
        checked += 1
        report = validate_tokens(tokens, policy)
        if isinstance(obj, dict) and obj.get("pattern") not in (None, policy.pattern.value):
            report.add(
                "pattern_mismatch",
                f"record declares pattern {obj['pattern']}, validating as {policy.pattern.value}",
                0,
            )
        if not report.ok or report.warnings:
            entry = {"line": lineno, "id": rec_id}
            entry.update(report.to_json())
            if not report.ok:
                bad_lines.append(entry)
                violations_total += len(report.violations)
    result = {
        "checked": checked,
        "skipped_dropped": skipped,
        "clean": violations_total == 0,
        "violations_total": violations_total,
        "lines": bad_lines,
    }
    sys.stdout.write(_dump_json(result))
    _eprint(
        f"validated {checked} sequences: "
        + ("clean" if violations_total == 0 else f"{violations_total} violations")
    )
    return 0 if violations_total == 0 else 1


# --- parser ----------------------------------------------------------------------


def _add_policy_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--pattern",
        choices=[p.value for p in Pattern],
        default=Pattern.STITCH_R.value,
        help="chunk pattern (default stitch_r)",
    )
    parser.add_argument("--policy-n-reason", type=int, default=None, help="reasoning chunk size")
    parser.add_argument("--policy-n-text", type=int, default=None, help="text chunk size")
    parser.add_argument("--policy-n-speech", type=int, default=None, help="speech chunk size")


def _add_timing_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rate", type=float, default=80.0, help="generation rate, tokens/s")
    parser.add_argument(
        "--chunk-durations",
        default="1.6,2.0",
        help="comma list of per-chunk audio seconds; last repeats (default 1.6,2.0)",
    )
    parser.add_argument("--synth-latency", type=float, default=0.0, help="per-chunk synthesis seconds")
    parser.add_argument("--mark-cost", type=float, default=1.0, help="token cost per control mark")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    _add_policy_flags(parser)
    _add_timing_flags(parser)
    parser.add_argument(
        "--generator", choices=["trace", "synthetic", "remote"], default="synthetic"
    )
    parser.add_argument("--trace-file", help="token JSONL replayed by the trace generator")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--reason-mean", type=float, default=322.40, help="synthetic reasoning length mean")
    parser.add_argument("--reason-spread", type=float, default=None, help="spread (default mean/4)")
    parser.add_argument("--text-chunks-mean", type=float, default=6.0)
    parser.add_argument("--text-chunks-spread", type=float, default=None)
    parser.add_argument("--early-eopr", type=float, default=0.0, help="early chunk close probability")
    parser.add_argument("--external-reasoning", help="token JSONL injected as reasoning")
    parser.add_argument("--n-prime", type=int, default=None, help="crop size for external reasoning")
    parser.add_argument("--remote-url", default=None, help=f"server base URL (or ${REMOTE_URL_ENV})")
    parser.add_argument("--remote-session", default="default")
    parser.add_argument("--remote-timeout", type=float, default=30.0)
    parser.add_argument("--remote-auth-header", default=None, help='e.g. "Authorization: Bearer t"')
    parser.add_argument("--out-dir", default="stitch_out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stitch", description="Interleaved decoding schedules: build, run, simulate, report."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_budget = sub.add_parser("budget", help="reasoning-token budget for one audio chunk")
    p_budget.add_argument("--rate", type=float, required=True, help="tokens per second")
    p_budget.add_argument("--chunk", type=float, required=True, help="audio chunk seconds")
    p_budget.add_argument("--n-text", type=int, default=13)
    p_budget.add_argument("--n-speech", type=int, default=26)
    p_budget.set_defaults(func=cmd_budget)

    p_build = sub.add_parser("build", help="build training sequences from triples JSONL")
    p_build.add_argument("input", help="triples JSONL")
    p_build.add_argument("output", help="built sequences JSONL")
    _add_policy_flags(p_build)
    p_build.add_argument("--stats", help="also write the stats JSON here")
    p_build.set_defaults(func=cmd_build)

    p_run = sub.add_parser("run", help="drive a generator through one decode")
    _add_run_flags(p_run)
    p_run.add_argument("--truncate-at", type=int, default=None, help="runtime reasoning chunk cap N'")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run across a range of reasoning chunk caps")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--n-prime-min", type=int, default=60)
    p_sweep.add_argument("--n-prime-max", type=int, default=100)
    p_sweep.add_argument("--n-prime-step", type=int, default=10)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="validate a sequence file against the pattern grammar")
    p_val.add_argument("input", help="sequence JSONL (built records or token streams)")
    _add_policy_flags(p_val)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        _eprint(f"error: {exc}")
        return 2
    except _TRANSPORT_ERRORS as exc:
        _eprint(f"error: {exc}")
        return 3
    except json.JSONDecodeError as exc:
        _eprint(f"error: malformed JSON input: {exc}")
        return 3
    except StitchError as exc:
        _eprint(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
