"""Command-line surface: score, analyze, report, train-toy, selfcheck.

Exit status: 0 on success, 1 on validation failure, 2 on usage errors.
Numeric output is printed with 6 significant digits. Stochastic
subcommands take a required --seed; identical inputs and seed reproduce
identical bytes on stdout.

Configuration: a flat JSON document (--config, or the ETRLAB_CONFIG
environment variable pointing at one) provides defaults; explicit flags
override file values. The environment variable only relocates the config
file, it never carries settings itself.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, rewards, trainer
from .entropy import BITS, NATS
from .errors import (
    ConfigurationError,
    ExtractionError,
    UndefinedCorrelationError,
    ValidationError,
)
from .grpo import RolloutGroup, SurrogateConfig, group_advantages, kl_penalty_term
from .rewards import RewardConfig, RewardVariant, compose_reward
from .toy_env import ProblemInstance, ToyPolicy, policy_grad_logprob, rollout
from .traces import episode_to_trace, read_traces, resolve_correct, write_traces

CONFIG_ENV_VAR = "ETRLAB_CONFIG"

_CONFIG_KEYS = (
    "gamma",
    "lambda",
    "variant",
    "epsilon",
    "beta",
    "sigma_weight",
    "entropy_base",
    "markers",
)


@dataclass(frozen=True)
class ToolConfig:
    """Flat tool-wide settings; one value per reward/analysis symbol."""

    gamma: float = 0.9
    lam: float = 0.1
    variant: RewardVariant = RewardVariant.ETR
    epsilon: float = 0.2
    beta: float = 5e-3
    sigma_weight: float = 5.0
    entropy_base: str = NATS
    markers: tuple[str, ...] = field(default=analysis.REFLECTION_MARKERS)

    def __post_init__(self):
        RewardConfig(gamma=self.gamma, lam=self.lam, variant=self.variant)
        SurrogateConfig(epsilon=self.epsilon, beta=self.beta)
        if self.entropy_base not in (NATS, BITS):
            raise ConfigurationError(
                f"entropy_base must be {NATS!r} or {BITS!r}, got {self.entropy_base!r}"
            )
        if self.sigma_weight < 0:
            raise ConfigurationError("sigma_weight must be >= 0")

    def reward_config(self) -> RewardConfig:
        return RewardConfig(gamma=self.gamma, lam=self.lam, variant=self.variant)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _load_config_file(path: str | None) -> dict:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a flat JSON object")
    unknown = sorted(set(data) - set(_CONFIG_KEYS))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    return data


def _tool_config(args) -> ToolConfig:
    values = _load_config_file(getattr(args, "config", None))
    merged = {
        "gamma": values.get("gamma", 0.9),
        "lam": values.get("lambda", 0.1),
        "variant": values.get("variant", RewardVariant.ETR.value),
        "epsilon": values.get("epsilon", 0.2),
        "beta": values.get("beta", 5e-3),
        "sigma_weight": values.get("sigma_weight", 5.0),
        "entropy_base": values.get("entropy_base", NATS),
        "markers": tuple(values.get("markers", analysis.REFLECTION_MARKERS)),
    }
    overrides = {
        "gamma": getattr(args, "gamma", None),
        "lam": getattr(args, "lam", None),
        "variant": getattr(args, "variant", None),
        "epsilon": getattr(args, "epsilon", None),
        "beta": getattr(args, "beta", None),
        "sigma_weight": getattr(args, "sigma_weight", None),
        "entropy_base": getattr(args, "entropy_base", None),
    }
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    markers_flag = getattr(args, "markers", None)
    if markers_flag is not None:
        merged["markers"] = tuple(
            m.strip() for m in markers_flag.split(",") if m.strip()
        )
    try:
        merged["variant"] = RewardVariant(merged["variant"])
    except ValueError:
        raise ValidationError(
            f"unknown reward variant {merged['variant']!r}"
        ) from None
    return ToolConfig(**merged)


def _write_json(path: str | None, payload: dict) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_score(args) -> int:
    cfg = _tool_config(args)
    reward_cfg = cfg.reward_config()
    rows = []
    for trace in read_traces(args.traces, strict=not args.skip_bad,
                             on_error=_line_error):
        correct = resolve_correct(trace)
        breakdown = compose_reward(correct, trace.entropy_trajectory(), reward_cfg)
        rows.append((trace.id, correct, len(trace.steps), breakdown))

    print(f"{'id':<20} {'correct':<8} {'steps':>5} {'entropy_term':>14} {'total':>12}")
    for trace_id, correct, steps, b in rows:
        print(
            f"{trace_id:<20} {str(correct).lower():<8} {steps:>5d} "
            f"{_fmt(b.entropy_term):>14} {_fmt(b.total):>12}"
        )
    n = len(rows)
    if n:
        mean_total = math.fsum(b.total for *_, b in rows) / n
        mean_entropy = math.fsum(b.entropy_term for *_, b in rows) / n
        print(f"traces {n} mean_entropy_term {_fmt(mean_entropy)} "
              f"mean_total {_fmt(mean_total)}")
    else:
        print("traces 0")
    _write_json(
        args.json_out,
        {
            "gamma": cfg.gamma,
            "lambda": cfg.lam,
            "variant": cfg.variant.value,
            "traces": [
                {
                    "id": trace_id,
                    "correct": correct,
                    "steps": steps,
                    "entropy_term": b.entropy_term,
                    "per_step_trend": list(b.per_step_trend),
                    "total": b.total,
                }
                for trace_id, correct, steps, b in rows
            ],
        },
    )
    return 0


def _line_error(line_no: int, message: str) -> None:
    print(f"skipping line {line_no}: {message}", file=sys.stderr)


def _cmd_analyze(args) -> int:
    cfg = _tool_config(args)
    traces = list(read_traces(args.traces, strict=not args.skip_bad,
                              on_error=_line_error))
    if not traces:
        print("traces 0")
        _write_json(args.json_out, {"traces": 0})
        return 0

    profile = analysis.behavior_profile(traces, cfg.markers)
    rho_rows = []
    rhos = []
    for trace in traces:
        values = trace.entropy_trajectory().values
        if len(values) < 2:
            rho_rows.append((trace.id, None, "too-short"))
            continue
        try:
            rho = analysis.spearman_rho(values)
        except UndefinedCorrelationError:
            rho_rows.append((trace.id, None, "undefined"))
            continue
        rho_rows.append((trace.id, rho, ""))
        rhos.append(rho)

    print(f"traces {len(traces)}")
    print(f"mean_steps {_fmt(profile.num_steps)}")
    print(f"mean_tokens_per_step {_fmt(profile.tokens_per_step)}")
    print(f"mean_reflection_markers {_fmt(profile.reflection_markers)}")
    print(f"traces_without_text {profile.traces_without_text}")
    print(f"fallback_token_counts {profile.fallback_token_counts}")
    for trace_id, rho, note in rho_rows:
        if rho is None:
            print(f"rho {trace_id:<20} skipped ({note})")
        else:
            print(f"rho {trace_id:<20} {_fmt(rho)}")
    if rhos:
        print(f"mean_rho {_fmt(math.fsum(rhos) / len(rhos))} (over {len(rhos)} traces)")
        for low, high, count in analysis.rho_histogram(rhos):
            print(f"rho_bin [{_fmt(low)},{_fmt(high)}) {count}")
    _write_json(
        args.json_out,
        {
            "traces": len(traces),
            "mean_steps": profile.num_steps,
            "mean_tokens_per_step": profile.tokens_per_step,
            "mean_reflection_markers": profile.reflection_markers,
            "traces_without_text": profile.traces_without_text,
            "fallback_token_counts": profile.fallback_token_counts,
            "rho": {
                trace_id: rho for trace_id, rho, _ in rho_rows if rho is not None
            },
            "mean_rho": (math.fsum(rhos) / len(rhos)) if rhos else None,
        },
    )
    return 0


def _cmd_report(args) -> int:
    cfg = _tool_config(args)
    base = analysis.MethodSummary(
        accuracy=args.base_acc, mean_length=args.base_len, label=args.base_label
    )
    model = analysis.MethodSummary(
        accuracy=args.model_acc, mean_length=args.model_len, label=args.model_label
    )
    score = analysis.aes(base, model, cfg.sigma_weight)
    cr = analysis.compression_rate(base.mean_length, model.mean_length)
    print(f"{'label':<16} {'accuracy':>10} {'mean_length':>12}")
    print(f"{base.label:<16} {_fmt(base.accuracy):>10} {_fmt(base.mean_length):>12}")
    print(f"{model.label:<16} {_fmt(model.accuracy):>10} {_fmt(model.mean_length):>12}")
    print(f"AES {_fmt(score)} (sigma_weight {_fmt(cfg.sigma_weight)})")
    print(f"CR {_fmt(cr)} ({_fmt(cr * 100.0)}%)")
    _write_json(
        args.json_out,
        {
            "base": {"label": base.label, "accuracy": base.accuracy,
                     "mean_length": base.mean_length},
            "model": {"label": model.label, "accuracy": model.accuracy,
                      "mean_length": model.mean_length},
            "sigma_weight": cfg.sigma_weight,
            "aes": score,
            "compression_rate": cr,
        },
    )
    return 0


def _cmd_train_toy(args) -> int:
    cfg = _tool_config(args)
    env = trainer.EnvConfig(
        num_answers=args.num_answers, t_max=args.t_max
    )
    train_cfg = trainer.TrainConfig(
        reward=cfg.reward_config(),
        surrogate=SurrogateConfig(epsilon=cfg.epsilon, beta=cfg.beta),
        group_size=args.group_size,
        batch_instances=args.batch_instances,
        updates=args.updates,
        learning_rate=args.learning_rate,
        epochs_per_batch=args.epochs_per_batch,
        seed=args.seed,
        env=env,
    )
    report = trainer.train(train_cfg)
    if report.records:
        print(report.to_table())
    final = report.final_policy
    print(f"final_policy w0 {_fmt(final.w0)} w1 {_fmt(final.w1)}")
    eval_seed = args.seed + 1
    accuracy, mean_length, mean_rho = trainer.evaluate(
        final, args.eval_instances, eval_seed, env
    )
    print(
        f"eval accuracy {_fmt(accuracy)} mean_length {_fmt(mean_length)} "
        f"mean_rho {_fmt(mean_rho)} (instances {args.eval_instances}, seed {eval_seed})"
    )
    if args.traces_out:
        episodes = trainer.evaluation_episodes(
            final, args.eval_instances, eval_seed, env
        )
        n = write_traces(
            (
                episode_to_trace(ep, f"toy-{i:05d}")
                for i, ep in enumerate(episodes)
            ),
            args.traces_out,
        )
        print(f"wrote {n} traces to {args.traces_out}")
    _write_json(
        args.json_out,
        {
            "variant": cfg.variant.value,
            "updates": args.updates,
            "seed": args.seed,
            "final_policy": {"w0": final.w0, "w1": final.w1},
            "eval": {
                "accuracy": accuracy,
                "mean_length": mean_length,
                "mean_rho": None if math.isnan(mean_rho) else mean_rho,
                "instances": args.eval_instances,
                "seed": eval_seed,
            },
            "records": [
                {
                    "update": r.update,
                    "mean_length": r.mean_length,
                    "accuracy": r.accuracy,
                    "mean_reward": r.mean_reward,
                    "mean_rho": None if math.isnan(r.mean_rho) else r.mean_rho,
                    "w0": r.w0,
                    "w1": r.w1,
                }
                for r in report.records
            ],
        },
    )
    return 0


def _selfcheck_equivalence(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(1000):
        gamma = rng.uniform(0.01, 0.99)
        t = int(rng.integers(2, 51))
        deltas = rng.standard_normal(t - 1)
        recursive, _ = rewards.trend_rewards_from_deltas(deltas, gamma)
        closed = rewards.trend_reward_closed_form_from_deltas(deltas, gamma)
        worst = max(worst, abs(recursive - closed))
    return worst <= 1e-9, f"max |recursive - closed| = {worst:.3g}"


def _selfcheck_telescoping(rng) -> tuple[bool, str]:
    from .entropy import EntropyTrajectory, entropy_deltas
    worst = 0.0
    for _ in range(1000):
        t = int(rng.integers(1, 40))
        traj = EntropyTrajectory(rng.uniform(0.0, 5.0, size=t))
        total = math.fsum(entropy_deltas(traj).deltas)
        worst = max(worst, abs(rewards.naive_reward(traj) - total))
    return worst <= 1e-12, f"max telescoping error = {worst:.3g}"


def _selfcheck_weights() -> tuple[bool, str]:
    for gamma in np.arange(0.1, 1.0, 0.05):
        gamma = float(gamma)
        for t in (2, 3, 5, 10, 50, 100):
            w = rewards.closed_form_weights(t, gamma)
            if abs(w[-1] - 1.0) > 1e-12:
                return False, f"alpha_T != 1 at T={t}, gamma={gamma}"
            if any(a <= b for a, b in zip(w, w[1:])):
                return False, f"weights not strictly decreasing at T={t}"
            if any(a >= 1.0 / (1.0 - gamma) for a in w):
                return False, f"weight above 1/(1-gamma) at T={t}"
    return True, "strictly decreasing, alpha_T = 1, bounded"


def _selfcheck_advantages(rng) -> tuple[bool, str]:
    for _ in range(1000):
        g = int(rng.integers(2, 17))
        rewards_vec = rng.standard_normal(g) * rng.uniform(0.1, 10.0)
        adv = group_advantages(RolloutGroup(rewards_vec)).values
        shifted = group_advantages(
            RolloutGroup([3.7 * r + 11.0 for r in rewards_vec])
        ).values
        if any(abs(a - b) > 1e-9 for a, b in zip(adv, shifted)):
            return False, "affine invariance violated"
    return True, "mean-0 / unit-std / affine invariance hold"


def _selfcheck_spearman(rng) -> tuple[bool, str]:
    for _ in range(1000):
        n = int(rng.integers(2, 8))
        values = [float(rng.integers(0, 4)) for _ in range(n)]
        if all(v == values[0] for v in values):
            continue
        rho = analysis.spearman_rho(values)
        transformed = analysis.spearman_rho([math.exp(v) for v in values])
        if abs(rho - transformed) > 1e-9:
            return False, "not invariant under increasing transform"
        if not -1.0 <= rho <= 1.0:
            return False, "out of range"
    inc = analysis.spearman_rho([1.0, 2.0, 5.0, 9.0])
    dec = analysis.spearman_rho([4.0, 3.0, 1.0, 0.5])
    if inc != 1.0 or dec != -1.0:
        return False, "monotone sequences not at +/-1"
    return True, "monotone endpoints and transform invariance hold"


def _selfcheck_kl(rng) -> tuple[bool, str]:
    for _ in range(1000):
        cur = float(rng.normal())
        ref = float(rng.normal())
        k = kl_penalty_term(cur, ref)
        if k < 0.0:
            return False, f"negative KL estimate {k}"
        if abs(cur - ref) < 1e-12 and k > 1e-12:
            return False, "KL not zero at equality"
    if kl_penalty_term(0.3, 0.3) != 0.0:
        return False, "KL not exactly zero at equality"
    return True, "estimator non-negative, zero at equality"


def _selfcheck_rollout(rng) -> tuple[bool, str]:
    for _ in range(100):
        seed = int(rng.integers(0, 2**31))
        instance = ProblemInstance(
            true_answer=int(rng.integers(0, 8)), num_answers=8,
            evidence_quality=0.7, boost=1.5,
        )
        policy = ToyPolicy(float(rng.normal()), float(rng.normal()))
        ep1 = rollout(instance, policy, 40, np.random.default_rng(seed))
        ep2 = rollout(instance, policy, 40, np.random.default_rng(seed))
        if ep1 != ep2:
            return False, "same seed produced different episodes"
        log_k = math.log(8)
        if any(not 0.0 <= h <= log_k + 1e-12 for h in ep1.entropy_trajectory.values):
            return False, "entropy outside [0, ln K]"
    return True, "deterministic, trajectory within [0, ln K]"


def _selfcheck_gradient(rng) -> tuple[bool, str]:
    from .toy_env import episode_logprob
    h = 1e-5
    worst = 0.0
    for _ in range(50):
        instance = ProblemInstance(
            true_answer=0, num_answers=8,
            evidence_quality=float(rng.uniform(0.55, 1.0)), boost=1.5,
        )
        policy = ToyPolicy(float(rng.normal(-1, 1)), float(rng.normal(0, 1)))
        ep = rollout(instance, policy, 30, np.random.default_rng(int(rng.integers(0, 2**31))))
        grad = policy_grad_logprob(ep, policy)
        fd0 = (
            episode_logprob(ep, ToyPolicy(policy.w0 + h, policy.w1))
            - episode_logprob(ep, ToyPolicy(policy.w0 - h, policy.w1))
        ) / (2 * h)
        fd1 = (
            episode_logprob(ep, ToyPolicy(policy.w0, policy.w1 + h))
            - episode_logprob(ep, ToyPolicy(policy.w0, policy.w1 - h))
        ) / (2 * h)
        for a, b in ((grad[0], fd0), (grad[1], fd1)):
            scale = max(1e-8, abs(a), abs(b))
            worst = max(worst, abs(a - b) / scale)
    return worst <= 1e-4, f"max relative gradient error = {worst:.3g}"


def _cmd_selfcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    checks = [
        ("recursion-closed-form-equivalence", lambda: _selfcheck_equivalence(rng)),
        ("naive-reward-telescoping", lambda: _selfcheck_telescoping(rng)),
        ("closed-form-weight-structure", _selfcheck_weights),
        ("group-advantage-invariants", lambda: _selfcheck_advantages(rng)),
        ("rank-correlation-properties", lambda: _selfcheck_spearman(rng)),
        ("kl-estimator-properties", lambda: _selfcheck_kl(rng)),
        ("rollout-determinism", lambda: _selfcheck_rollout(rng)),
        ("score-gradient-vs-finite-difference", lambda: _selfcheck_gradient(rng)),
    ]
    failures = 0
    for name, fn in checks:
        ok, detail = fn()
        status = "ok" if ok else "FAIL"
        print(f"{status:<5} {name}: {detail}")
        if not ok:
            failures += 1
    print(f"selfcheck {'passed' if failures == 0 else 'FAILED'} "
          f"({len(checks) - failures}/{len(checks)})")
    return 0 if failures == 0 else 1


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--gamma", type=float, default=None,
                        help="momentum coefficient in (0, 1)")
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="entropy shaping weight (>= 0)")
    parser.add_argument("--variant", default=None,
                        choices=[v.value for v in RewardVariant],
                        help="reward variant")
    parser.add_argument("--epsilon", type=float, default=None,
                        help="surrogate clip radius")
    parser.add_argument("--beta", type=float, default=None, help="KL weight")
    parser.add_argument("--sigma-weight", dest="sigma_weight", type=float,
                        default=None, help="accuracy weight in the AES score")
    parser.add_argument("--entropy-base", dest="entropy_base", default=None,
                        choices=[NATS, BITS], help="entropy unit")
    parser.add_argument("--markers", default=None,
                        help="comma-separated reflection-marker override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etrlab",
        description="Entropy-trend reward toolkit: trace scoring, analytics, "
                    "and a seeded policy-gradient sandbox.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score traces with the two-stage reward")
    p_score.add_argument("traces", help="line-delimited trace file")
    p_score.add_argument("--skip-bad", action="store_true",
                         help="skip malformed lines instead of aborting")
    p_score.add_argument("--json-out", help="write a machine-readable summary")
    _add_config_flags(p_score)
    p_score.set_defaults(fn=_cmd_score)

    p_an = sub.add_parser("analyze", help="trend and behavior analytics for traces")
    p_an.add_argument("traces", help="line-delimited trace file")
    p_an.add_argument("--skip-bad", action="store_true",
                      help="skip malformed lines instead of aborting")
    p_an.add_argument("--json-out", help="write a machine-readable summary")
    _add_config_flags(p_an)
    p_an.set_defaults(fn=_cmd_analyze)

    p_rep = sub.add_parser("report", help="AES / compression-rate comparison")
    p_rep.add_argument("--base-acc", type=float, required=True)
    p_rep.add_argument("--base-len", type=float, required=True)
    p_rep.add_argument("--model-acc", type=float, required=True)
    p_rep.add_argument("--model-len", type=float, required=True)
    p_rep.add_argument("--base-label", default="base")
    p_rep.add_argument("--model-label", default="model")
    p_rep.add_argument("--json-out", help="write a machine-readable summary")
    _add_config_flags(p_rep)
    p_rep.set_defaults(fn=_cmd_report)

    p_tr = sub.add_parser("train-toy", help="run the seeded sandbox training loop")
    p_tr.add_argument("--seed", type=int, required=True)
    p_tr.add_argument("--updates", type=int, default=300)
    p_tr.add_argument("--group-size", type=int, default=5)
    p_tr.add_argument("--batch-instances", type=int, default=8)
    p_tr.add_argument("--learning-rate", type=float, default=0.05)
    p_tr.add_argument("--epochs-per-batch", type=int, default=1)
    p_tr.add_argument("--t-max", type=int, default=40)
    p_tr.add_argument("--num-answers", type=int, default=8)
    p_tr.add_argument("--eval-instances", type=int, default=1000)
    p_tr.add_argument("--traces-out", help="write evaluation episodes as traces")
    p_tr.add_argument("--json-out", help="write a machine-readable summary")
    _add_config_flags(p_tr)
    p_tr.set_defaults(fn=_cmd_train_toy)

    p_sc = sub.add_parser("selfcheck", help="run the embedded property suite")
    p_sc.add_argument("--seed", type=int, required=True)
    p_sc.set_defaults(fn=_cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, ConfigurationError, ExtractionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
