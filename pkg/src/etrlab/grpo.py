"""Group-relative advantages and the clipped surrogate objective.

Rollouts for one problem form a group; each response's scalar return is
standardized against its own group (mean 0, population std 1), which makes
the learning signal insensitive to reward offset and scale. The policy then
ascends the usual clipped surrogate with a KL penalty against a frozen
reference policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigurationError, ValidationError

# Below this population std a group is degenerate and gets all-zero
# advantages rather than a noise-amplifying epsilon division.
_DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class RolloutGroup:
    """Scalar returns of the G responses sampled for one problem (G >= 2)."""

    rewards: tuple[float, ...]
    group_id: str = ""

    def __init__(self, rewards: Sequence[float], group_id: str = ""):
        rw = tuple(float(r) for r in rewards)
        if len(rw) < 2:
            raise ValidationError(
                f"a rollout group needs at least 2 responses, got {len(rw)}"
            )
        for i, r in enumerate(rw):
            if not math.isfinite(r):
                raise ValidationError(f"reward at index {i} is not finite: {r!r}")
        object.__setattr__(self, "rewards", rw)
        object.__setattr__(self, "group_id", group_id)

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class AdvantageVector:
    """Standardized per-response advantages.

    Construction enforces the contract: mean 0 within 1e-12 and population
    std 1 within 1e-9, unless every entry is exactly 0 (degenerate group).
    """

    values: tuple[float, ...]

    def __init__(self, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ValidationError("advantage vector cannot be empty")
        if any(v != 0.0 for v in vals):
            n = len(vals)
            mean = math.fsum(vals) / n
            if abs(mean) > 1e-12:
                raise ValidationError(f"advantages must have zero mean, got {mean!r}")
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / n)
            if abs(std - 1.0) > 1e-9:
                raise ValidationError(
                    f"advantages must have unit population std, got {std!r}"
                )
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SurrogateConfig:
    """Clip radius and KL weight of the surrogate objective."""

    epsilon: float = 0.2
    beta: float = 5e-3

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigurationError(
                f"epsilon must lie in (0, 1), got {self.epsilon!r}"
            )
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise ConfigurationError(f"beta must be >= 0, got {self.beta!r}")


@dataclass(frozen=True)
class ResponseTerms:
    """Per-response inputs to the objective.

    `ratios` are the per-action likelihood ratios pi_theta / pi_old;
    `advantage` is the response-level advantage broadcast over its actions;
    the log-prob pairs feed the KL penalty against the frozen reference.
    """

    ratios: tuple[float, ...]
    advantage: float
    logprob_current: tuple[float, ...] = ()
    logprob_reference: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.ratios:
            raise ValidationError("a response must carry at least one action ratio")
        if self.logprob_current or self.logprob_reference:
            if not (
                len(self.logprob_current)
                == len(self.logprob_reference)
                == len(self.ratios)
            ):
                raise ValidationError(
                    "per-action log-prob sequences must align with the ratios"
                )


def group_advantages(group: RolloutGroup) -> AdvantageVector:
    """Standardize a group's returns: (r_i - mean) / population std.

    A zero-variance group yields all-zero advantages: identical returns
    carry no relative signal, and that is reported honestly instead of
    dividing by an epsilon floor.
    """
    n = len(group)
    mean = math.fsum(group.rewards) / n
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in group.rewards) / n)
    if std < _DEGENERATE_STD:
        return AdvantageVector((0.0,) * n)
    values = [(r - mean) / std for r in group.rewards]
    # Standardization leaves an O(eps * |r|/std) mean residue; remove it so
    # the zero-mean contract holds by construction.
    residue = math.fsum(values) / n
    return AdvantageVector(tuple(v - residue for v in values))


def clipped_surrogate(ratio: float, advantage: float, cfg: SurrogateConfig) -> float:
    """min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) for one action."""
    if not (ratio > 0.0 and math.isfinite(ratio)):
        raise ValidationError(
            f"likelihood ratio must be positive and finite, got {ratio!r}; "
            "check the log-prob bookkeeping upstream"
        )
    clipped = min(max(ratio, 1.0 - cfg.epsilon), 1.0 + cfg.epsilon)
    return min(ratio * advantage, clipped * advantage)


def kl_penalty_term(logprob_current: float, logprob_reference: float) -> float:
    """Non-negative per-action KL estimate exp(d) - d - 1, d = ref - cur.

    Zero exactly when the two log-probs agree; the caller sums the terms
    and weights them by beta.
    """
    if not (math.isfinite(logprob_current) and math.isfinite(logprob_reference)):
        raise ValidationError("KL penalty needs finite log-probs")
    d = logprob_reference - logprob_current
    return math.exp(d) - d - 1.0


def group_objective(
    groups: Sequence[Sequence[ResponseTerms]], cfg: SurrogateConfig
) -> float:
    """Scalar objective the trainer ascends.

    Per group: the mean over responses of each response's mean clipped
    surrogate, minus beta times the group's mean per-action KL penalty.
    The result is the mean over groups.
    """
    if not groups:
        raise ValidationError("objective needs at least one rollout group")
    per_group = []
    for gi, responses in enumerate(groups):
        if not responses:
            raise ValidationError(f"group {gi} has no responses")
        surr = math.fsum(
            math.fsum(clipped_surrogate(r, resp.advantage, cfg) for r in resp.ratios)
            / len(resp.ratios)
            for resp in responses
        ) / len(responses)
        kl = 0.0
        if cfg.beta > 0.0:
            terms = [
                kl_penalty_term(c, r)
                for resp in responses
                for c, r in zip(resp.logprob_current, resp.logprob_reference)
            ]
            if terms:
                kl = math.fsum(terms) / len(terms)
        per_group.append(surr - cfg.beta * kl)
    return math.fsum(per_group) / len(per_group)
