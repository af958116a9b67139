"""Measurement suite: rank-correlation trend statistic, accuracy-efficiency
score, compression rate, and the behavioral decomposition of traces.

The trend statistic is the Spearman rank correlation between a trace's step
index and its step entropy: rank both sequences (average ranks on ties) and
take their Pearson correlation. A negative value means uncertainty globally
descends along the trace.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import UndefinedCorrelationError, ValidationError

# Lexicon of hedging / backtracking words counted by the behavior profile.
# Matching is case-insensitive, whole-word, longest-match-first so that
# "double-check" is one hit rather than also a "check" hit.
REFLECTION_MARKERS = (
    "wait",
    "alternatively",
    "hmm",
    "but",
    "however",
    "alternative",
    "another",
    "check",
    "double-check",
    "oh",
    "maybe",
)

DEFAULT_RHO_BINS = 10


@dataclass(frozen=True)
class MethodSummary:
    """Accuracy and mean response length of one method, for comparisons.

    Accuracy may be a fraction in [0, 1] or a percentage; the two summaries
    in a comparison must use the same convention (the score is built from
    relative changes, so the unit cancels).
    """

    accuracy: float
    mean_length: float
    label: str = ""

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 100.0):
            raise ValidationError(
                f"accuracy must be a fraction or percentage, got {self.accuracy!r}"
            )
        if not (self.mean_length > 0.0 and math.isfinite(self.mean_length)):
            raise ValidationError(
                f"mean length must be positive, got {self.mean_length!r}"
            )


@dataclass(frozen=True)
class BehaviorProfile:
    """Mean steps, tokens per step, and reflection-marker count per trace."""

    num_steps: float
    tokens_per_step: float
    reflection_markers: float
    traces_without_text: int = 0
    fallback_token_counts: int = 0


def _average_ranks(values: Sequence[float]) -> list[float]:
    """Fractional ranks (1-based), ties receiving the mean of their span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    cov = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = math.fsum((x - mx) ** 2 for x in xs)
    vy = math.fsum((y - my) ** 2 for y in ys)
    return cov / math.sqrt(vx * vy)


def spearman_rho(values: Sequence[float]) -> float:
    """Rank correlation between the step index 1..T and `values`.

    Raises UndefinedCorrelationError when all values are identical (the
    value ranks have zero variance); callers skip such episodes.
    """
    if len(values) < 2:
        raise ValidationError("rank correlation needs at least 2 values")
    first = values[0]
    if all(v == first for v in values):
        raise UndefinedCorrelationError(
            "rank correlation undefined: all values identical"
        )
    index_ranks = [float(i + 1) for i in range(len(values))]
    value_ranks = _average_ranks(values)
    rho = _pearson(index_ranks, value_ranks)
    return max(-1.0, min(1.0, rho))


def aes(base: MethodSummary, model: MethodSummary, sigma_weight: float = 5.0) -> float:
    """Accuracy-efficiency trade-off score of `model` against `base`.

    Relative length reduction plus sigma_weight times the relative accuracy
    change; the weight prioritizes accuracy over length.
    """
    if base.mean_length <= 0.0:
        raise ValidationError("base mean length must be positive")
    if base.accuracy <= 0.0:
        raise ValidationError("base accuracy must be positive")
    length_gain = (base.mean_length - model.mean_length) / base.mean_length
    accuracy_gain = (model.accuracy - base.accuracy) / base.accuracy
    return length_gain + sigma_weight * accuracy_gain


def compression_rate(base_length: float, model_length: float) -> float:
    """Model mean length over base mean length, as a fraction."""
    if base_length <= 0.0:
        raise ValidationError("base length must be positive")
    return model_length / base_length


def _marker_pattern(markers: Iterable[str]) -> re.Pattern:
    # Longest alternatives first so compound markers win over their parts.
    ordered = sorted(markers, key=len, reverse=True)
    return re.compile(
        r"\b(?:" + "|".join(re.escape(m) for m in ordered) + r")\b",
        re.IGNORECASE,
    )


def count_reflection_markers(
    text: str, markers: Iterable[str] = REFLECTION_MARKERS
) -> int:
    """Whole-word marker occurrences in `text`, longest match first."""
    return len(_marker_pattern(markers).findall(text))


def behavior_profile(
    traces, markers: Iterable[str] = REFLECTION_MARKERS
) -> BehaviorProfile:
    """Decompose traces into steps, per-step verbosity, and reflection count.

    Token counts come from step metadata when present; otherwise the
    whitespace word count of the step text stands in, and the trace is
    counted in `fallback_token_counts`. Traces without any step text only
    contribute to the step-count statistic and are tallied in
    `traces_without_text`.
    """
    traces = list(traces)
    if not traces:
        raise ValidationError("behavior profile needs at least one trace")
    pattern = _marker_pattern(markers)

    step_counts = []
    tokens_per_step = []
    marker_counts = []
    without_text = 0
    fallback = 0
    for trace in traces:
        n_steps = len(trace.steps)
        step_counts.append(float(n_steps))
        texts = [s.text for s in trace.steps if s.text is not None]
        if not texts:
            without_text += 1
            continue
        used_fallback = False
        total_tokens = 0
        for step in trace.steps:
            if step.token_count is not None:
                total_tokens += step.token_count
            elif step.text is not None:
                total_tokens += len(step.text.split())
                used_fallback = True
        if used_fallback:
            fallback += 1
        tokens_per_step.append(total_tokens / n_steps)
        marker_counts.append(float(len(pattern.findall("\n\n".join(texts)))))

    return BehaviorProfile(
        num_steps=math.fsum(step_counts) / len(step_counts),
        tokens_per_step=(
            math.fsum(tokens_per_step) / len(tokens_per_step)
            if tokens_per_step
            else 0.0
        ),
        reflection_markers=(
            math.fsum(marker_counts) / len(marker_counts) if marker_counts else 0.0
        ),
        traces_without_text=without_text,
        fallback_token_counts=fallback,
    )


def rho_histogram(
    rhos: Sequence[float], bins: int = DEFAULT_RHO_BINS
) -> list[tuple[float, float, int]]:
    """Equal-width histogram of rank correlations over [-1, 1].

    Returns (low, high, count) per bin; the top bin includes its upper edge.
    """
    if bins < 1:
        raise ValidationError("need at least one bin")
    width = 2.0 / bins
    counts = [0] * bins
    for rho in rhos:
        if not -1.0 <= rho <= 1.0:
            raise ValidationError(f"rank correlation out of range: {rho!r}")
        idx = min(int((rho + 1.0) / width), bins - 1)
        counts[idx] += 1
    return [(-1.0 + i * width, -1.0 + (i + 1) * width, c) for i, c in enumerate(counts)]
