"""Shannon entropy of discrete distributions and step-level entropy trajectories.

A reasoning trace is segmented into steps; each step carries token-level
entropy values. This module turns those into a per-step scalar trajectory
H_1..H_T and the step-wise changes Delta_t = H_{t-1} - H_t that the reward
layer consumes. A positive delta means uncertainty went down between
consecutive steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ValidationError

# Probabilities below this are treated as exact zeros in the entropy sum to
# avoid log underflow.
_PROB_FLOOR = 1e-300

# |sum(p) - 1| beyond this fails validation.
_SUM_TOLERANCE = 1e-9

NATS = "nats"
BITS = "bits"


@dataclass(frozen=True)
class DiscreteDistribution:
    """A validated probability vector over a finite outcome set.

    Raises:
        ValidationError: if any entry is negative (the message names the
            offending index) or the entries do not sum to 1 within 1e-9.
    """

    probabilities: tuple[float, ...]

    def __init__(self, probabilities: Iterable[float]):
        probs = tuple(float(p) for p in probabilities)
        if not probs:
            raise ValidationError("distribution must have at least one outcome")
        for i, p in enumerate(probs):
            if p < 0.0:
                raise ValidationError(
                    f"probability at index {i} is negative: {p!r}"
                )
            if not math.isfinite(p):
                raise ValidationError(
                    f"probability at index {i} is not finite: {p!r}"
                )
        total = math.fsum(probs)
        if abs(total - 1.0) > _SUM_TOLERANCE:
            raise ValidationError(
                f"probabilities sum to {total!r}, off by more than {_SUM_TOLERANCE}"
            )
        object.__setattr__(self, "probabilities", probs)

    def __len__(self) -> int:
        return len(self.probabilities)


@dataclass(frozen=True)
class EntropyTrajectory:
    """Per-step entropies H_1..H_T of a trace, in nats (or bits upstream)."""

    values: tuple[float, ...]

    def __init__(self, values: Iterable[float]):
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ValidationError("entropy trajectory must have at least one step")
        for i, v in enumerate(vals):
            if v < 0.0 or not math.isfinite(v):
                raise ValidationError(
                    f"entropy at step {i + 1} must be finite and >= 0, got {v!r}"
                )
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DeltaSequence:
    """Step-wise entropy changes: deltas[t] = H_t - H_{t+1} (0-indexed pairs).

    Empty for single-step trajectories. Positive entries mark uncertainty
    reduction.
    """

    deltas: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.deltas)


def shannon_entropy(dist: DiscreteDistribution, base: str = NATS) -> float:
    """Return -sum(p * log p) with 0*log(0) treated as 0.

    `base` selects the unit: "nats" (natural log, default) or "bits" (log2).
    The result is non-negative and bounded by log(K) for K outcomes.
    """
    if base not in (NATS, BITS):
        raise ValidationError(f"base must be {NATS!r} or {BITS!r}, got {base!r}")
    terms = [
        -p * math.log(p) for p in dist.probabilities if p > _PROB_FLOOR
    ]
    h = math.fsum(terms)
    if base == BITS:
        h /= math.log(2.0)
    # Rounding can leave a tiny negative residue for near-point-mass inputs.
    return max(0.0, h)


def step_entropies(trace) -> EntropyTrajectory:
    """Average each step's token-level entropies into the trajectory H_1..H_T.

    Accepts any object with a `steps` attribute whose items expose
    `token_entropies` (the trace type from `etrlab.traces`, or a toy-episode
    dump). A step with no token entropies fails validation, naming the step.
    """
    steps = trace.steps
    if not steps:
        raise ValidationError("trace must contain at least one step")
    values = []
    for i, step in enumerate(steps):
        tok = step.token_entropies
        if not tok:
            raise ValidationError(f"step {i} has no token entropies")
        values.append(math.fsum(tok) / len(tok))
    return EntropyTrajectory(values)


def entropy_deltas(traj: EntropyTrajectory) -> DeltaSequence:
    """Return the T-1 consecutive differences H_t - H_{t+1} of a trajectory."""
    v = traj.values
    return DeltaSequence(tuple(v[i] - v[i + 1] for i in range(len(v) - 1)))


def segment_text(raw: str) -> list[str]:
    """Split reasoning text into steps on blank-line delimiters.

    Splits on two consecutive newlines, drops segments that are empty or
    whitespace-only, and preserves order. Empty input yields an empty list.
    """
    return [seg for seg in raw.split("\n\n") if seg.strip()]


def deltas_of(values: Sequence[float]) -> tuple[float, ...]:
    """Consecutive differences of a raw value sequence (no validation)."""
    return tuple(values[i] - values[i + 1] for i in range(len(values) - 1))
