"""Entropy-trend reward: telescoping baseline, momentum trend, and the
correctness-gated two-stage composition.

The naive reward sums the step deltas and telescopes to H_1 - H_T, so a
smooth descent and a spiky round trip with the same endpoints score the
same. The momentum form fixes that by accumulating a trend state

    S_t = gamma * S_{t-1} + Delta_t,      S_1 = 0,

and scoring sum(S_t) for t = 2..T. Unrolling gives the equivalent weighted
form sum(alpha_t * Delta_t) with

    alpha_t = (1 - gamma^(T - t + 1)) / (1 - gamma),

strictly decreasing in t, so earlier uncertainty reduction is worth more.
The two-stage composition gates everything on answer correctness: wrong
answers score -1 flat, correct ones 1 + lambda * R_entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .entropy import EntropyTrajectory, deltas_of
from .errors import ConfigurationError, ValidationError


class RewardVariant(str, Enum):
    """Reward selections: the momentum trend plus its ablation variants."""

    ETR = "ETR"
    NAIVE_NO_GAMMA = "NAIVE_NO_GAMMA"
    MIN_H = "MIN_H"
    MAX_H = "MAX_H"
    NO_CORRECTNESS = "NO_CORRECTNESS"
    CORRECTNESS_ONLY = "CORRECTNESS_ONLY"


@dataclass(frozen=True)
class RewardConfig:
    """Momentum coefficient, shaping weight, and variant selection.

    gamma must lie strictly inside (0, 1): the closed-form weights divide by
    1 - gamma, and gamma -> 0 behaviour is available via NAIVE_NO_GAMMA.
    """

    gamma: float = 0.9
    lam: float = 0.1
    variant: RewardVariant = RewardVariant.ETR

    def __post_init__(self):
        _check_gamma(self.gamma)
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam!r}")
        if not isinstance(self.variant, RewardVariant):
            object.__setattr__(self, "variant", RewardVariant(self.variant))


@dataclass(frozen=True)
class TrendState:
    """Momentum-accumulated trend at one step; S_1 = 0 by definition."""

    s: float = 0.0
    step_index: int = 1

    def __post_init__(self):
        if self.step_index < 1:
            raise ValidationError("step_index starts at 1")
        if self.step_index == 1 and self.s != 0.0:
            raise ValidationError("trend state must be 0 at step 1")

    def advance(self, delta: float, gamma: float) -> "TrendState":
        _check_gamma(gamma)
        return TrendState(gamma * self.s + delta, self.step_index + 1)


@dataclass(frozen=True)
class RewardBreakdown:
    """Composed reward with its parts kept visible.

    For the gated variants, total is -1 when incorrect (entropy_term is
    still reported for diagnostics) and 1 + lambda * entropy_term when
    correct. NO_CORRECTNESS bypasses the gate entirely: total is
    lambda * entropy_term regardless of correctness_term. per_step_trend
    always carries the momentum states S_2..S_T as a diagnostic.
    """

    total: float
    correctness_term: float
    entropy_term: float
    per_step_trend: tuple[float, ...] = field(default_factory=tuple)


def _check_gamma(gamma: float) -> None:
    if not (0.0 < gamma < 1.0):
        raise ConfigurationError(
            f"gamma must lie in the open interval (0, 1), got {gamma!r}"
        )


def naive_reward(traj: EntropyTrajectory) -> float:
    """Telescoped sum of deltas: H_1 - H_T. Zero for single-step traces."""
    v = traj.values
    return v[0] - v[-1]


def trend_rewards_from_deltas(
    deltas: Sequence[float], gamma: float
) -> tuple[float, tuple[float, ...]]:
    """Run the momentum recursion over raw deltas.

    Returns (sum of S_t for t=2..T, the S_t sequence). Empty deltas give
    (0.0, ()).
    """
    _check_gamma(gamma)
    s = 0.0
    trend = []
    for d in deltas:
        s = gamma * s + d
        trend.append(s)
    return math.fsum(trend), tuple(trend)


def etr_entropy_reward(
    traj: EntropyTrajectory, gamma: float
) -> tuple[float, tuple[float, ...]]:
    """Momentum-trend entropy reward of a trajectory (recursive form).

    Returns the reward together with the trend states S_2..S_T. A
    single-step trajectory has no deltas and scores 0 with an empty trend.
    """
    return trend_rewards_from_deltas(deltas_of(traj.values), gamma)


def closed_form_weights(num_steps: int, gamma: float) -> tuple[float, ...]:
    """Weights alpha_2..alpha_T of the unrolled recursion.

    alpha_t = (1 - gamma^(T - t + 1)) / (1 - gamma); strictly decreasing,
    with alpha_T = 1 exactly. Requires T >= 2 (there are no weights for a
    single-step trace).
    """
    _check_gamma(gamma)
    if num_steps < 2:
        raise ValidationError(
            f"closed-form weights need at least 2 steps, got {num_steps}"
        )
    return tuple(
        (1.0 - gamma ** (num_steps - t + 1)) / (1.0 - gamma)
        for t in range(2, num_steps + 1)
    )


def trend_reward_closed_form_from_deltas(
    deltas: Sequence[float], gamma: float
) -> float:
    """Weighted-delta form sum(alpha_t * Delta_t); agrees with the recursion."""
    _check_gamma(gamma)
    if not deltas:
        return 0.0
    weights = closed_form_weights(len(deltas) + 1, gamma)
    return math.fsum(w * d for w, d in zip(weights, deltas))


def etr_entropy_reward_closed_form(traj: EntropyTrajectory, gamma: float) -> float:
    """Closed-form momentum reward of a trajectory."""
    return trend_reward_closed_form_from_deltas(deltas_of(traj.values), gamma)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def compose_reward(
    correct: bool, traj: EntropyTrajectory, cfg: RewardConfig
) -> RewardBreakdown:
    """Two-stage reward: hard correctness gate, then entropy shaping.

    The variant selects the entropy term: ETR and NO_CORRECTNESS use the
    momentum trend, NAIVE_NO_GAMMA the telescoped endpoint difference,
    MIN_H / MAX_H the signed mean step entropy, CORRECTNESS_ONLY zero.
    NO_CORRECTNESS is the ungated ablation and returns lambda * entropy
    directly.
    """
    variant = cfg.variant
    _, trend = etr_entropy_reward(traj, cfg.gamma)

    if variant in (RewardVariant.ETR, RewardVariant.NO_CORRECTNESS):
        entropy_term = math.fsum(trend)
    elif variant is RewardVariant.NAIVE_NO_GAMMA:
        entropy_term = naive_reward(traj)
    elif variant is RewardVariant.MIN_H:
        entropy_term = -_mean(traj.values)
    elif variant is RewardVariant.MAX_H:
        entropy_term = _mean(traj.values)
    else:  # CORRECTNESS_ONLY
        entropy_term = 0.0

    correctness_term = 1.0 if correct else -1.0
    if variant is RewardVariant.NO_CORRECTNESS:
        total = cfg.lam * entropy_term
    elif correct:
        total = 1.0 + cfg.lam * entropy_term
    else:
        total = -1.0
    return RewardBreakdown(
        total=total,
        correctness_term=correctness_term,
        entropy_term=entropy_term,
        per_step_trend=trend,
    )
