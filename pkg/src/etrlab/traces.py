"""Trace file format, boxed-answer extraction, and exact-match grading.

Traces are stored one JSON object per line (UTF-8) with a top-level
`schema: 1` tag. The schema is permissive on purpose: real model dumps
carry step texts and token counts, while simulator dumps carry only
singleton token-entropy lists. Grading is deliberately plain exact match
after whitespace normalization; traces may instead ship a precomputed
`correct` flag from any external grader.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .entropy import EntropyTrajectory, step_entropies
from .errors import ExtractionError, ValidationError
from .toy_env import ToyEpisode

SCHEMA_VERSION = 1

_BOXED = "\\boxed{"
_WS_RUN = re.compile(r"\s+")


@dataclass(frozen=True)
class TraceStep:
    """One reasoning step: optional text, token entropies, optional count."""

    token_entropies: tuple[float, ...]
    text: str | None = None
    token_count: int | None = None

    def __post_init__(self):
        if not self.token_entropies:
            raise ValidationError("token_entropies must hold at least one value")
        for i, h in enumerate(self.token_entropies):
            if h < 0.0 or not math.isfinite(h):
                raise ValidationError(
                    f"token_entropies[{i}] must be finite and >= 0, got {h!r}"
                )
        if self.token_count is not None and self.token_count < 0:
            raise ValidationError(f"token_count must be >= 0, got {self.token_count}")


@dataclass(frozen=True)
class Trace:
    """A segmented rollout with per-token entropies and grading fields."""

    id: str
    steps: tuple[TraceStep, ...]
    question: str | None = None
    correct: bool | None = None
    final_answer: str | None = None
    ground_truth: str | None = None

    def __post_init__(self):
        if not self.steps:
            raise ValidationError("a trace needs at least one step")

    def entropy_trajectory(self) -> EntropyTrajectory:
        return step_entropies(self)


def extract_boxed_answer(text: str) -> str | None:
    """Content of the last `\\boxed{...}` in `text`, braces balanced.

    Returns None when no box occurs. An opener whose braces never balance
    raises ExtractionError naming the byte offset of that opener.
    """
    start = text.rfind(_BOXED)
    if start < 0:
        return None
    i = start + len(_BOXED)
    depth = 1
    begin = i
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[begin:i]
        i += 1
    offset = len(text[:start].encode("utf-8"))
    raise ExtractionError(
        f"unbalanced braces after \\boxed{{ opener at byte offset {offset}"
    )


def normalize_answer(text: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces."""
    return _WS_RUN.sub(" ", text.strip())


def grade_exact(extracted: str, ground_truth: str) -> bool:
    """Exact match after whitespace normalization; no symbolic equivalence."""
    return normalize_answer(extracted) == normalize_answer(ground_truth)


def resolve_correct(trace: Trace) -> bool:
    """Correctness for the reward gate.

    Prefers an explicit `correct` flag; otherwise extracts a boxed answer
    from `final_answer` (falling back to the raw field) and grades it
    against `ground_truth`.
    """
    if trace.correct is not None:
        return trace.correct
    if trace.final_answer is None or trace.ground_truth is None:
        raise ValidationError(
            f"trace {trace.id!r} has neither a correct flag nor both "
            "final_answer and ground_truth"
        )
    extracted = extract_boxed_answer(trace.final_answer)
    if extracted is None:
        extracted = trace.final_answer
    return grade_exact(extracted, trace.ground_truth)


def _trace_to_record(trace: Trace) -> dict:
    record: dict = {"schema": SCHEMA_VERSION, "id": trace.id}
    if trace.question is not None:
        record["question"] = trace.question
    steps = []
    for step in trace.steps:
        s: dict = {"token_entropies": list(step.token_entropies)}
        if step.text is not None:
            s["text"] = step.text
        if step.token_count is not None:
            s["token_count"] = step.token_count
        steps.append(s)
    record["steps"] = steps
    if trace.correct is not None:
        record["correct"] = trace.correct
    if trace.final_answer is not None:
        record["final_answer"] = trace.final_answer
    if trace.ground_truth is not None:
        record["ground_truth"] = trace.ground_truth
    return record


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _trace_from_record(record: dict) -> Trace:
    _require(isinstance(record, dict), "record must be a JSON object")
    schema = record.get("schema")
    _require(
        schema == SCHEMA_VERSION,
        f"unsupported schema tag {schema!r} (expected {SCHEMA_VERSION})",
    )
    _require("id" in record, "missing field 'id'")
    _require("steps" in record, "missing field 'steps'")
    raw_steps = record["steps"]
    _require(
        isinstance(raw_steps, list) and raw_steps, "'steps' must be a non-empty list"
    )
    steps = []
    for i, s in enumerate(raw_steps):
        _require(isinstance(s, dict), f"steps[{i}] must be an object")
        _require(
            "token_entropies" in s, f"steps[{i}] is missing 'token_entropies'"
        )
        tok = s["token_entropies"]
        _require(
            isinstance(tok, list) and tok,
            f"steps[{i}].token_entropies must be a non-empty list",
        )
        try:
            steps.append(
                TraceStep(
                    token_entropies=tuple(float(h) for h in tok),
                    text=s.get("text"),
                    token_count=s.get("token_count"),
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"steps[{i}]: {exc}") from None
        except (TypeError, ValueError):
            raise ValidationError(
                f"steps[{i}].token_entropies must contain numbers"
            ) from None
    correct = record.get("correct")
    _require(
        correct is None or isinstance(correct, bool),
        "'correct' must be a boolean when present",
    )
    return Trace(
        id=str(record["id"]),
        steps=tuple(steps),
        question=record.get("question"),
        correct=correct,
        final_answer=record.get("final_answer"),
        ground_truth=record.get("ground_truth"),
    )


def write_traces(traces: Iterable[Trace], path: str | Path) -> int:
    """Write traces one JSON record per line; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(_trace_to_record(trace), sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_traces(
    path: str | Path,
    strict: bool = True,
    on_error=None,
) -> Iterator[Trace]:
    """Stream traces from a line-delimited file.

    In strict mode any malformed line aborts with a ValidationError naming
    the line number. Otherwise malformed lines are skipped after reporting
    them through `on_error(line_number, message)`.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                yield _trace_from_record(record)
            except (json.JSONDecodeError, ValidationError) as exc:
                message = f"line {line_no}: {exc}"
                if strict:
                    raise ValidationError(message) from None
                if on_error is not None:
                    on_error(line_no, str(exc))


def episode_to_trace(
    episode: ToyEpisode, trace_id: str, ground_truth: int | None = None
) -> Trace:
    """Serialize a simulator episode in the trace schema.

    Step entropies become singleton token-entropy lists, so the trace
    round-trips through the same analytics as real dumps.
    """
    steps = tuple(
        TraceStep(token_entropies=(h,))
        for h in episode.entropy_trajectory.values
    )
    return Trace(
        id=trace_id,
        steps=steps,
        correct=episode.correct,
        final_answer=str(episode.emitted_answer),
        ground_truth=None if ground_truth is None else str(ground_truth),
    )
