"""Group-relative policy optimization on a synthetic span-localization task.

A linear-softmax policy picks one of several candidate phrases per prompt;
one candidate is the injected hallucination.  Rewards flow through the real
response grader (responses are rendered as ``<think></think>\\boxed{phrase}``
strings), advantages are group-mean-centered, and the update ascends the
clipped importance-ratio objective.  Everything is deterministic given the
seed so traces are byte-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import Caption, CorruptionRecord, HallucinationType, VicritError
from .injector import record_from_edit
from .verifier import reward

__all__ = [
    "GroupRollout",
    "GroupTooSmall",
    "MetricsTrace",
    "NonFiniteGradient",
    "RolloutSample",
    "StepStats",
    "SyntheticEnv",
    "ToyPolicy",
    "TrainConfig",
    "clipped_term",
    "group_advantages",
    "grpo_step",
    "train",
]


class GroupTooSmall(VicritError):
    """A rollout group needs at least two samples for a meaningful baseline."""


class NonFiniteGradient(VicritError):
    """The policy gradient left the finite range; the step is aborted."""


def group_advantages(rewards: Sequence[float | Fraction]) -> list[Fraction]:
    """Group-mean-centered advantages, in exact rational arithmetic so they
    sum to zero exactly for decimal rewards."""
    if len(rewards) < 2:
        raise GroupTooSmall(f"group has {len(rewards)} samples, need >= 2")
    exact = [Fraction(r) for r in rewards]
    mean = sum(exact) / len(exact)
    return [r - mean for r in exact]


def clipped_term(advantage: float, ratio: float, epsilon: float) -> float:
    """min(A*rho, A*clip(rho, 1-eps, 1+eps)), the per-sample objective."""
    if ratio <= 0:
        raise ValueError(f"importance ratio must be positive, got {ratio}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(advantage * ratio, advantage * clipped)


@dataclass
class RolloutSample:
    """One sampled action with the quantities the update needs."""

    action: int
    reward: float
    logp_old: float
    logp_new: Optional[float] = None
    advantage: Optional[float] = None
    ratio: Optional[float] = None


@dataclass
class GroupRollout:
    """All samples drawn for one prompt, sharing its candidate features."""

    prompt_id: int
    features: np.ndarray  # (n_candidates, n_features)
    samples: list[RolloutSample]


@dataclass(frozen=True)
class ToyPolicy:
    """Linear softmax over candidate feature vectors."""

    weights: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("policy weights must be finite")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def zeros(cls, n_features: int, temperature: float = 1.0) -> "ToyPolicy":
        return cls(np.zeros(n_features, dtype=np.float64), temperature)

    def probs(self, features: np.ndarray) -> np.ndarray:
        z = features @ self.weights / self.temperature
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def logp(self, features: np.ndarray, action: int) -> float:
        return float(np.log(self.probs(features)[action]))

    def grad_logp(self, features: np.ndarray, action: int) -> np.ndarray:
        """d log pi(action)/d weights for the softmax score function."""
        p = self.probs(features)
        return (features[action] - p @ features) / self.temperature


@dataclass
class StepStats:
    objective: float
    mean_reward: float
    grad_norm: float


def grpo_step(
    policy: ToyPolicy,
    groups: Sequence[GroupRollout],
    epsilon: float,
    lr: float,
    advantage_norm: str = "none",
) -> tuple[ToyPolicy, StepStats]:
    """One ascent step on the clipped group-relative objective.

    Fills logp_new/advantage/ratio on every sample, then updates the weights
    with the analytic softmax score-function gradient.  Samples are reduced
    in (group, sample) order so reruns are bit-identical.
    """
    if not groups:
        raise ValueError("no rollout groups")
    grad = np.zeros_like(policy.weights)
    objective = 0.0
    reward_sum = 0.0
    n = 0
    for group in groups:
        advs = group_advantages([s.reward for s in group.samples])
        if advantage_norm == "std":
            floats = np.array([float(a) for a in advs])
            std = float(floats.std())
            advs = [a / std if std > 0 else Fraction(0) for a in advs]
        for sample, adv in zip(group.samples, advs):
            a = float(adv)
            sample.advantage = a
            sample.logp_new = policy.logp(group.features, sample.action)
            sample.ratio = math.exp(sample.logp_new - sample.logp_old)
            objective += clipped_term(a, sample.ratio, epsilon)
            reward_sum += sample.reward
            n += 1
            # gradient of min(A*rho, A*clip(rho)): the clipped branch is
            # constant in theta, so only the unclipped-active case contributes
            clipped_rho = min(max(sample.ratio, 1.0 - epsilon), 1.0 + epsilon)
            if a * sample.ratio <= a * clipped_rho:
                grad += (a * sample.ratio) * policy.grad_logp(group.features, sample.action)
    objective /= n
    grad /= n
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("aborting step: gradient has non-finite components")
    new_policy = ToyPolicy(policy.weights + lr * grad, policy.temperature)
    return new_policy, StepStats(
        objective=objective,
        mean_reward=reward_sum / n,
        grad_norm=float(np.linalg.norm(grad)),
    )


# --- synthetic environment ---------------------------------------------------

_ENV_COLORS = [
    "red", "blue", "green", "yellow", "purple", "orange", "pink", "brown",
    "silver", "teal", "maroon", "crimson",
]
_ENV_NOUNS = [
    "car", "bird", "tree", "door", "chair", "lamp", "boat", "kite",
    "vase", "clock", "bench", "flag", "drum", "tent",
]


@dataclass(frozen=True)
class Prompt:
    """One synthetic instance: the record plus candidate phrases/features."""

    index: int
    record: CorruptionRecord
    phrases: tuple[str, ...]
    features: np.ndarray
    truth: int


@dataclass(frozen=True)
class SyntheticEnv:
    """Deterministic prompt generator: captions listing colored objects, one
    of which had its color flipped.  Feature 0 of each candidate is a noisy
    inconsistency indicator (+1 on the flipped phrase)."""

    seed: int
    noise: float = 0.0
    n_candidates: int = 5
    n_features: int = 3

    def __post_init__(self):
        if not 0 <= self.noise < 1:
            raise ValueError("noise must be in [0, 1)")
        if self.n_candidates < 2 or self.n_candidates > min(len(_ENV_COLORS) - 1, len(_ENV_NOUNS)):
            raise ValueError("n_candidates out of range")
        if self.n_features < 1:
            raise ValueError("need at least the indicator feature")

    def make_prompt(self, index: int) -> Prompt:
        rng = np.random.default_rng([self.seed, index])
        m = self.n_candidates
        nouns = rng.choice(len(_ENV_NOUNS), size=m, replace=False)
        colors = rng.choice(len(_ENV_COLORS), size=m + 1, replace=False)
        truth = int(rng.integers(m))

        slot = lambda k, color_idx: f"a {_ENV_COLORS[color_idx]} {_ENV_NOUNS[nouns[k]]}"
        corrupted_slots = [slot(k, colors[k]) for k in range(m)]
        original_slots = list(corrupted_slots)
        original_slots[truth] = slot(truth, colors[m])

        original = "The picture shows " + ", ".join(original_slots[:-1]) + " and " + original_slots[-1] + "."
        record = record_from_edit(
            Caption(original),
            original_slots[truth],
            corrupted_slots[truth],
            h_type=HallucinationType.COLOR,
            image_ref=f"synthetic://{self.seed}/{index}",
        )

        features = rng.normal(0.0, 1.0, size=(m, self.n_features))
        features[:, 0] = self.noise * rng.normal(0.0, 1.0, size=m)
        features[truth, 0] += 1.0
        return Prompt(
            index=index,
            record=record,
            phrases=tuple(corrupted_slots),
            features=features,
            truth=truth,
        )


def render_response(phrase: str) -> str:
    """The response string a rollout submits to the grader."""
    return f"<think></think>\\boxed{{{phrase}}}"


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    steps: int = 200
    group_size: int = 8
    epsilon: float = 0.2
    lr: float = 1.0
    noise: float = 0.0
    candidates_per_prompt: int = 5
    features: int = 3
    prompts_per_step: int = 8
    inner_epochs: int = 1
    temperature: float = 1.0
    advantage_norm: str = "none"
    eval_prompts: int = 100

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class MetricsTrace:
    steps: list[dict] = field(default_factory=list)
    final_accuracy: float = 0.0
    initial_accuracy: float = 0.0

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.steps)


def _argmax_accuracy(policy: ToyPolicy, prompts: Sequence[Prompt]) -> float:
    hits = sum(1 for p in prompts if int(np.argmax(policy.probs(p.features))) == p.truth)
    return hits / len(prompts)


def train(env: SyntheticEnv, config: TrainConfig) -> MetricsTrace:
    """Run the GRPO loop and return the per-step metrics trace.

    Each step draws fresh prompts, samples a group per prompt under the
    current weights (which therefore serve as the old policy for the single
    inner epoch), grades the rendered responses, and applies one update.
    """
    policy = ToyPolicy.zeros(config.features, config.temperature)
    env = SyntheticEnv(env.seed, config.noise, config.candidates_per_prompt, config.features)
    action_rng = np.random.default_rng([config.seed, 0xAC710])

    eval_prompts = [env.make_prompt(1_000_000 + i) for i in range(config.eval_prompts)]
    trace = MetricsTrace(initial_accuracy=_argmax_accuracy(policy, eval_prompts))

    for step in range(config.steps):
        prompts = [
            env.make_prompt(step * config.prompts_per_step + k) for k in range(config.prompts_per_step)
        ]
        groups = []
        for prompt in prompts:
            probs = policy.probs(prompt.features)
            actions = action_rng.choice(len(probs), size=config.group_size, p=probs)
            samples = []
            for a in actions:
                a = int(a)
                r = reward(render_response(prompt.phrases[a]), prompt.record).total
                samples.append(RolloutSample(action=a, reward=r, logp_old=policy.logp(prompt.features, a)))
            groups.append(GroupRollout(prompt_id=prompt.index, features=prompt.features, samples=samples))

        accuracy = _argmax_accuracy(policy, prompts)
        stats = None
        for _ in range(config.inner_epochs):
            policy, stats = grpo_step(policy, groups, config.epsilon, config.lr, config.advantage_norm)
        trace.steps.append(
            {
                "step": step,
                "mean_reward": stats.mean_reward,
                "accuracy": accuracy,
                "objective": stats.objective,
                "grad_norm": stats.grad_norm,
            }
        )

    trace.final_accuracy = _argmax_accuracy(policy, eval_prompts)
    return trace
