"""Seeded GRPO training loop over the belief-refinement environment.

Each update samples a batch of problems, rolls out a group of episodes per
problem under a frozen snapshot of the policy, scores them with the
configured reward variant, standardizes returns within each group, and
ascends the clipped surrogate objective by plain gradient ascent on the two
policy parameters. The KL penalty references the policy frozen at training
start. Everything is driven by one seed and is bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .analysis import spearman_rho
from .errors import UndefinedCorrelationError, ValidationError
from .grpo import (
    ResponseTerms,
    RolloutGroup,
    SurrogateConfig,
    group_advantages,
    group_objective,
)
from .rewards import RewardConfig, compose_reward
from .toy_env import (
    ProblemInstance,
    ToyEpisode,
    ToyPolicy,
    action_logprobs_under,
    decision_terms,
    rollout,
)

# Episodes shorter than this are excluded from trend-correlation averages:
# rank correlation over fewer than 3 points is degenerate.
MIN_STEPS_FOR_RHO = 3


@dataclass(frozen=True)
class EnvConfig:
    """Problem-distribution defaults for training and evaluation.

    Instances come in two difficulty tiers: easy ones with high evidence
    quality and hard ones where misleading evidence is common.
    """

    num_answers: int = 8
    t_max: int = 40
    boost: float = 1.5
    q_easy: float = 0.95
    q_hard: float = 0.7
    easy_fraction: float = 0.5

    def __post_init__(self):
        if self.t_max < 1:
            raise ValidationError("t_max must be >= 1")
        if not 0.0 <= self.easy_fraction <= 1.0:
            raise ValidationError("easy_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    reward: RewardConfig = field(default_factory=RewardConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    group_size: int = 5
    batch_instances: int = 8
    updates: int = 300
    learning_rate: float = 0.05
    epochs_per_batch: int = 1
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    initial_policy: ToyPolicy = field(default_factory=lambda: ToyPolicy(-2.0, 1.0))

    def __post_init__(self):
        if self.group_size < 2:
            raise ValidationError("group_size must be >= 2")
        if self.batch_instances < 1:
            raise ValidationError("batch_instances must be >= 1")
        if self.updates < 0:
            raise ValidationError("updates must be >= 0")
        if not (self.learning_rate > 0.0 and math.isfinite(self.learning_rate)):
            raise ValidationError("learning_rate must be positive")
        if self.epochs_per_batch < 1:
            raise ValidationError("epochs_per_batch must be >= 1")


@dataclass(frozen=True)
class UpdateRecord:
    """Batch statistics (under the pre-update snapshot) plus new parameters."""

    update: int
    mean_length: float
    accuracy: float
    mean_reward: float
    mean_rho: float
    w0: float
    w1: float


@dataclass(frozen=True)
class TrainReport:
    records: tuple[UpdateRecord, ...]
    final_policy: ToyPolicy

    def to_table(self) -> str:
        header = f"{'update':>6} {'mean_len':>10} {'accuracy':>10} {'mean_reward':>12} {'mean_rho':>10} {'w0':>10} {'w1':>10}"
        lines = [header]
        for r in self.records:
            lines.append(
                f"{r.update:>6d} {r.mean_length:>10.6g} {r.accuracy:>10.6g} "
                f"{r.mean_reward:>12.6g} {r.mean_rho:>10.6g} {r.w0:>10.6g} {r.w1:>10.6g}"
            )
        return "\n".join(lines)


def sample_instance(env: EnvConfig, rng: np.random.Generator) -> ProblemInstance:
    """Draw a problem: difficulty tier first, then the hidden answer."""
    easy = rng.random() < env.easy_fraction
    true_answer = int(rng.integers(0, env.num_answers))
    return ProblemInstance(
        true_answer=true_answer,
        num_answers=env.num_answers,
        evidence_quality=env.q_easy if easy else env.q_hard,
        boost=env.boost,
    )


def _mean_rho(episodes: Sequence[ToyEpisode]) -> float:
    rhos = []
    for ep in episodes:
        if ep.length < MIN_STEPS_FOR_RHO:
            continue
        try:
            rhos.append(spearman_rho(ep.entropy_trajectory.values))
        except UndefinedCorrelationError:
            continue
    return math.fsum(rhos) / len(rhos) if rhos else float("nan")


def _objective_and_gradient(
    batch: Sequence[tuple[Sequence[ToyEpisode], Sequence[float]]],
    policy: ToyPolicy,
    old_policy: ToyPolicy,
    reference: ToyPolicy,
    cfg: SurrogateConfig,
) -> tuple[float, float, float]:
    """Objective value and its analytic gradient over (w0, w1).

    The value itself comes from `group_objective` so the trainer ascends
    exactly the objective the surrogate module defines. Gradient rules per
    action: the surrogate term passes gradient through the ratio only when
    the unclipped branch attains the min; the KL term contributes
    (1 - exp(ref - cur)) times the log-prob gradient.
    """
    g0 = 0.0
    g1 = 0.0
    groups_terms = []
    n_groups = len(batch)
    for episodes, advantages in batch:
        responses = []
        kl_actions = 0
        kl_g0 = 0.0
        kl_g1 = 0.0
        surr_g0 = 0.0
        surr_g1 = 0.0
        for ep, adv in zip(episodes, advantages):
            lp_cur = action_logprobs_under(ep, policy)
            lp_old = ep.action_logprobs
            lp_ref = action_logprobs_under(ep, reference)
            ratios = tuple(
                math.exp(c - o) for c, o in zip(lp_cur, lp_old)
            )
            responses.append(
                ResponseTerms(
                    ratios=ratios,
                    advantage=adv,
                    logprob_current=lp_cur,
                    logprob_reference=lp_ref,
                )
            )
            terms = decision_terms(ep)
            n_actions = len(terms)
            kl_actions += n_actions
            for (feature, is_stop, is_decision), ratio, c, r in zip(
                terms, ratios, lp_cur, lp_ref
            ):
                if not is_decision:
                    continue
                sigma = policy.stop_probability(feature)
                score = (1.0 - sigma) if is_stop else -sigma
                # Surrogate branch: min(ratio*A, clip(ratio)*A).
                clipped = min(max(ratio, 1.0 - cfg.epsilon), 1.0 + cfg.epsilon)
                if ratio * adv <= clipped * adv:
                    coeff = adv * ratio / n_actions
                    surr_g0 += coeff * score
                    surr_g1 += coeff * score * feature
                if cfg.beta > 0.0:
                    kcoeff = 1.0 - math.exp(r - c)
                    kl_g0 += kcoeff * score
                    kl_g1 += kcoeff * score * feature
        groups_terms.append(responses)
        n_resp = len(episodes)
        g0 += (surr_g0 / n_resp - cfg.beta * (kl_g0 / kl_actions)) / n_groups
        g1 += (surr_g1 / n_resp - cfg.beta * (kl_g1 / kl_actions)) / n_groups
    return group_objective(groups_terms, cfg), g0, g1


def train(cfg: TrainConfig) -> TrainReport:
    """Run the seeded training loop and return the per-update report."""
    rng = np.random.default_rng(cfg.seed)
    policy = cfg.initial_policy
    reference = cfg.initial_policy
    records = []
    for update in range(cfg.updates):
        old_policy = policy
        batch = []
        batch_episodes: list[ToyEpisode] = []
        batch_rewards: list[float] = []
        for _ in range(cfg.batch_instances):
            instance = sample_instance(cfg.env, rng)
            episodes = [
                rollout(instance, old_policy, cfg.env.t_max, rng)
                for _ in range(cfg.group_size)
            ]
            rewards = [
                compose_reward(ep.correct, ep.entropy_trajectory, cfg.reward).total
                for ep in episodes
            ]
            advantages = group_advantages(RolloutGroup(rewards)).values
            batch.append((episodes, advantages))
            batch_episodes.extend(episodes)
            batch_rewards.extend(rewards)

        for _ in range(cfg.epochs_per_batch):
            _, g0, g1 = _objective_and_gradient(
                batch, policy, old_policy, reference, cfg.surrogate
            )
            if not (math.isfinite(g0) and math.isfinite(g1)):
                raise RuntimeError(
                    f"non-finite gradient at update {update}: ({g0!r}, {g1!r})"
                )
            w0 = policy.w0 + cfg.learning_rate * g0
            w1 = policy.w1 + cfg.learning_rate * g1
            if not (math.isfinite(w0) and math.isfinite(w1)):
                raise RuntimeError(
                    f"non-finite policy parameters at update {update}: "
                    f"({w0!r}, {w1!r})"
                )
            policy = ToyPolicy(w0, w1)

        n = len(batch_episodes)
        records.append(
            UpdateRecord(
                update=update,
                mean_length=math.fsum(ep.length for ep in batch_episodes) / n,
                accuracy=math.fsum(1.0 for ep in batch_episodes if ep.correct) / n,
                mean_reward=math.fsum(batch_rewards) / n,
                mean_rho=_mean_rho(batch_episodes),
                w0=policy.w0,
                w1=policy.w1,
            )
        )
    return TrainReport(records=tuple(records), final_policy=policy)


def evaluate(
    policy: ToyPolicy,
    n_instances: int,
    seed: int,
    env: EnvConfig | None = None,
) -> tuple[float, float, float]:
    """Monte-Carlo evaluation under the same stochastic policy.

    Returns (accuracy, mean episode length, mean trend correlation), the
    latter averaged over episodes with at least MIN_STEPS_FOR_RHO steps and
    a defined correlation.
    """
    if n_instances < 1:
        raise ValidationError("evaluation needs at least one instance")
    env = env or EnvConfig()
    rng = np.random.default_rng(seed)
    episodes = []
    for _ in range(n_instances):
        instance = sample_instance(env, rng)
        episodes.append(rollout(instance, policy, env.t_max, rng))
    accuracy = math.fsum(1.0 for ep in episodes if ep.correct) / n_instances
    mean_length = math.fsum(ep.length for ep in episodes) / n_instances
    return accuracy, mean_length, _mean_rho(episodes)


def evaluation_episodes(
    policy: ToyPolicy, n_instances: int, seed: int, env: EnvConfig | None = None
) -> list[ToyEpisode]:
    """The episodes behind `evaluate`, for serialization or inspection."""
    env = env or EnvConfig()
    rng = np.random.default_rng(seed)
    return [
        rollout(sample_instance(env, rng), policy, env.t_max, rng)
        for _ in range(n_instances)
    ]


def variant_config(base: TrainConfig, variant) -> TrainConfig:
    """Copy of `base` with only the reward variant switched."""
    return replace(base, reward=replace(base.reward, variant=variant))
