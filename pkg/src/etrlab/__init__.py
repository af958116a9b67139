"""Entropy-trend reward toolkit.

Step-entropy trajectories, momentum-aggregated trend rewards with a
correctness gate, group-relative advantage machinery, trace analytics, and
a seedable policy-gradient sandbox.
"""

from .analysis import (
    BehaviorProfile,
    MethodSummary,
    aes,
    behavior_profile,
    compression_rate,
    spearman_rho,
)
from .entropy import (
    DeltaSequence,
    DiscreteDistribution,
    EntropyTrajectory,
    entropy_deltas,
    segment_text,
    shannon_entropy,
    step_entropies,
)
from .errors import (
    ConfigurationError,
    ExtractionError,
    UndefinedCorrelationError,
    ValidationError,
)
from .grpo import (
    AdvantageVector,
    ResponseTerms,
    RolloutGroup,
    SurrogateConfig,
    clipped_surrogate,
    group_advantages,
    group_objective,
    kl_penalty_term,
)
from .rewards import (
    RewardBreakdown,
    RewardConfig,
    RewardVariant,
    TrendState,
    closed_form_weights,
    compose_reward,
    etr_entropy_reward,
    etr_entropy_reward_closed_form,
    naive_reward,
)
from .toy_env import (
    Action,
    BeliefState,
    ProblemInstance,
    ToyEpisode,
    ToyPolicy,
    episode_logprob,
    policy_grad_logprob,
    rollout,
)
from .trainer import EnvConfig, TrainConfig, TrainReport, evaluate, train
from .traces import (
    Trace,
    TraceStep,
    episode_to_trace,
    extract_boxed_answer,
    grade_exact,
    read_traces,
    resolve_correct,
    write_traces,
)

__version__ = "0.1.0"
