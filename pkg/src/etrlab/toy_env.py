"""A seedable belief-refinement environment for desk-scale reward studies.

Each problem hides one true answer among K. The agent starts from a uniform
belief; every THINK step draws evidence that multiplies one answer's belief
mass by (1 + eta) and renormalizes - the true answer with probability q,
otherwise a uniformly random wrong one. The agent stops by taking ANSWER,
sampling its answer from the current belief. The belief's Shannon entropy
is recorded at every step, so each episode yields an entropy trajectory
that the reward layer can score exactly like a real trace.

The stop decision is a two-parameter logistic policy on the confidence
feature ln(K) - H(belief): w0 is a stop bias, w1 a confidence gain. At the
step cap the episode is closed with a forced ANSWER; the forced stop is an
environment event with probability one, so only the answer-sampling
log-probability is attributed to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .entropy import EntropyTrajectory
from .errors import ValidationError


class Action(str, Enum):
    THINK = "THINK"
    ANSWER = "ANSWER"


@dataclass(frozen=True)
class ProblemInstance:
    """One hidden-answer problem: K candidates, evidence quality q, boost eta."""

    true_answer: int
    num_answers: int = 8
    evidence_quality: float = 0.95
    boost: float = 1.5

    def __post_init__(self):
        if self.num_answers < 2:
            raise ValidationError("need at least 2 candidate answers")
        if not 0 <= self.true_answer < self.num_answers:
            raise ValidationError(
                f"true answer {self.true_answer} outside [0, {self.num_answers})"
            )
        if not 0.5 < self.evidence_quality <= 1.0:
            raise ValidationError(
                f"evidence quality must lie in (0.5, 1], got {self.evidence_quality!r}"
            )
        if not self.boost > 0.0:
            raise ValidationError(f"boost must be positive, got {self.boost!r}")


@dataclass(frozen=True)
class BeliefState:
    """Belief over the K answers after `step - 1` THINK updates."""

    belief: tuple[float, ...]
    step: int = 1

    def entropy(self) -> float:
        return belief_entropy(self.belief)


@dataclass(frozen=True)
class ToyPolicy:
    """Logistic stop policy: p_stop = sigmoid(w0 + w1 * (ln K - H))."""

    w0: float = 0.0
    w1: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.w0) and math.isfinite(self.w1)):
            raise ValidationError("policy parameters must be finite")

    def stop_probability(self, confidence: float) -> float:
        return _sigmoid(self.w0 + self.w1 * confidence)


@dataclass(frozen=True)
class ToyEpisode:
    """One rollout: the entropy trajectory plus action bookkeeping.

    `action_logprobs` holds the log-probability of each realized action
    under the behaviour policy; the final ANSWER entry includes the
    answer-sampling term ln(belief[answer]), kept separately in
    `answer_logprob` so the total can be re-evaluated under other policy
    parameters. `forced` marks an episode closed by the step cap, whose
    stop decision had probability one.
    """

    entropy_trajectory: EntropyTrajectory
    actions: tuple[Action, ...]
    action_logprobs: tuple[float, ...]
    emitted_answer: int
    correct: bool
    length: int
    num_answers: int
    answer_logprob: float
    forced: bool

    def __post_init__(self):
        if self.length != len(self.actions) or self.length != len(
            self.entropy_trajectory
        ):
            raise ValidationError("episode length must match actions and trajectory")
        if self.actions[-1] is not Action.ANSWER:
            raise ValidationError("the final action must be ANSWER")
        if any(a is not Action.THINK for a in self.actions[:-1]):
            raise ValidationError("ANSWER must occur exactly once, at the end")


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def belief_entropy(belief) -> float:
    """Shannon entropy (nats) of a belief vector, tolerant of exact zeros."""
    h = -math.fsum(p * math.log(p) for p in belief if p > 0.0)
    return max(0.0, h)


def apply_evidence(belief: list[float], target: int, boost: float) -> list[float]:
    """Multiply one answer's mass by (1 + boost) and renormalize."""
    out = list(belief)
    out[target] *= 1.0 + boost
    total = math.fsum(out)
    return [p / total for p in out]


def _sample_categorical(belief: list[float], rng: np.random.Generator) -> int:
    u = rng.random() * math.fsum(belief)
    acc = 0.0
    for i, p in enumerate(belief):
        acc += p
        if u < acc:
            return i
    return len(belief) - 1


def rollout(
    instance: ProblemInstance,
    policy: ToyPolicy,
    t_max: int,
    rng: np.random.Generator,
) -> ToyEpisode:
    """Sample one episode; bitwise deterministic given the generator state.

    Per step: record H(belief); below the cap, stop with probability
    sigmoid(w0 + w1 * (ln K - H)); stopping samples the answer from the
    belief, thinking draws evidence (true answer with probability q, else a
    uniformly random wrong answer gets the identical boost). At step t_max
    the ANSWER is forced.
    """
    if t_max < 1:
        raise ValidationError(f"t_max must be >= 1, got {t_max}")
    k = instance.num_answers
    log_k = math.log(k)
    belief = [1.0 / k] * k

    trajectory: list[float] = []
    actions: list[Action] = []
    logprobs: list[float] = []

    for step in range(1, t_max + 1):
        h = belief_entropy(belief)
        trajectory.append(h)
        forced = step == t_max
        if forced:
            stop = True
            stop_logprob = 0.0
        else:
            p_stop = policy.stop_probability(log_k - h)
            stop = rng.random() < p_stop
            stop_logprob = (
                math.log(p_stop) if stop else math.log1p(-p_stop)
            )
        if stop:
            answer = _sample_categorical(belief, rng)
            answer_logprob = math.log(belief[answer])
            actions.append(Action.ANSWER)
            logprobs.append(stop_logprob + answer_logprob)
            return ToyEpisode(
                entropy_trajectory=EntropyTrajectory(trajectory),
                actions=tuple(actions),
                action_logprobs=tuple(logprobs),
                emitted_answer=answer,
                correct=answer == instance.true_answer,
                length=step,
                num_answers=k,
                answer_logprob=answer_logprob,
                forced=forced,
            )
        actions.append(Action.THINK)
        logprobs.append(stop_logprob)
        if rng.random() < instance.evidence_quality:
            target = instance.true_answer
        else:
            offset = int(rng.integers(1, k))
            target = (instance.true_answer + offset) % k
        belief = apply_evidence(belief, target, instance.boost)
    raise AssertionError("unreachable: the cap forces an ANSWER")


def decision_terms(episode: ToyEpisode) -> list[tuple[float, bool, bool]]:
    """Per-action (confidence feature, is_stop, is_decision) triples.

    Features are recomputed from the stored trajectory, so log-probs and
    gradients can be evaluated under any parameters. The forced final stop
    is not a decision and carries no parameter dependence.
    """
    log_k = math.log(episode.num_answers)
    last = episode.length - 1
    return [
        (log_k - h, t == last, not (t == last and episode.forced))
        for t, h in enumerate(episode.entropy_trajectory.values)
    ]


def episode_logprob(episode: ToyEpisode, policy: ToyPolicy) -> float:
    """Total log-probability of the episode's actions under `policy`.

    Includes the answer-sampling term, which is parameter-free and cancels
    in likelihood ratios.
    """
    total = episode.answer_logprob
    for feature, is_stop, is_decision in decision_terms(episode):
        if not is_decision:
            continue
        p_stop = policy.stop_probability(feature)
        total += math.log(p_stop) if is_stop else math.log1p(-p_stop)
    return total


def action_logprobs_under(episode: ToyEpisode, policy: ToyPolicy) -> tuple[float, ...]:
    """Per-action log-probs of the realized choices under `policy`."""
    out = []
    for feature, is_stop, is_decision in decision_terms(episode):
        if not is_decision:
            out.append(episode.answer_logprob)
            continue
        p_stop = policy.stop_probability(feature)
        lp = math.log(p_stop) if is_stop else math.log1p(-p_stop)
        if is_stop:
            lp += episode.answer_logprob
        out.append(lp)
    return tuple(out)


def policy_grad_logprob(episode: ToyEpisode, policy: ToyPolicy) -> np.ndarray:
    """Gradient of episode_logprob with respect to (w0, w1).

    Logistic score function: a taken stop contributes (1 - sigma), a taken
    think contributes -sigma, each scaled by [1, feature]. The forced stop
    and the answer draw are parameter-free.
    """
    g0 = 0.0
    g1 = 0.0
    for feature, is_stop, is_decision in decision_terms(episode):
        if not is_decision:
            continue
        sigma = policy.stop_probability(feature)
        score = (1.0 - sigma) if is_stop else -sigma
        g0 += score
        g1 += score * feature
    return np.array([g0, g1])
