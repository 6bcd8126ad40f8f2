"""Group-normalized advantages and the sequence-level clipped objective.

Values only: gradients belong to the external trainer. Advantages normalize
rewards by the group mean and population standard deviation; the importance
ratio is the geometric mean of per-token policy ratios, computed in log
space; the objective is the clipped surrogate averaged over the group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptySequenceError, GroupTooSmallError, LengthMismatchError

DEGENERATE_STD = 1e-8
DEFAULT_EPSILON = 3e-4


@dataclass(frozen=True)
class PolicySample:
    reward: float
    logp_new: tuple[float, ...]
    logp_old: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "logp_new", tuple(self.logp_new))
        object.__setattr__(self, "logp_old", tuple(self.logp_old))
        if len(self.logp_new) != len(self.logp_old):
            raise LengthMismatchError(
                f"log-prob sequences differ in length: "
                f"{len(self.logp_new)} vs {len(self.logp_old)}")
        if not self.logp_new:
            raise EmptySequenceError("a sample needs at least one token")
        for seq in (self.logp_new, self.logp_old):
            if any(not math.isfinite(lp) or lp > 0 for lp in seq):
                raise ValueError("log-probabilities must be finite and <= 0")


@dataclass(frozen=True)
class PolicyGroup:
    samples: tuple[PolicySample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 2:
            raise GroupTooSmallError(
                f"a policy group needs G >= 2 samples, got {len(self.samples)}")

    @property
    def rewards(self) -> list[float]:
        return [s.reward for s in self.samples]


@dataclass(frozen=True)
class GspoResult:
    advantages: tuple[float, ...]
    ratios: tuple[float, ...]
    objective: float
    clipped_flags: tuple[bool, ...]

    def to_dict(self) -> dict:
        return {
            "advantages": list(self.advantages),
            "ratios": list(self.ratios),
            "objective": self.objective,
            "clipped_flags": list(self.clipped_flags),
        }


def group_advantages(rewards) -> list[float]:
    """(r - mean) / population std; a zero-variance group gets all zeros."""
    rewards = [float(r) for r in rewards]
    if len(rewards) < 2:
        raise GroupTooSmallError(f"need G >= 2 rewards, got {len(rewards)}")
    mean = math.fsum(rewards) / len(rewards)
    variance = math.fsum((r - mean) ** 2 for r in rewards) / len(rewards)
    std = math.sqrt(variance)
    if std < DEGENERATE_STD:
        return [0.0] * len(rewards)
    return [(r - mean) / std for r in rewards]


def sequence_ratio(logp_new, logp_old) -> float:
    """exp(mean per-token log ratio): the geometric-mean policy ratio."""
    logp_new, logp_old = list(logp_new), list(logp_old)
    if len(logp_new) != len(logp_old):
        raise LengthMismatchError(
            f"log-prob sequences differ in length: {len(logp_new)} vs {len(logp_old)}")
    if not logp_new:
        raise EmptySequenceError("sequence_ratio needs at least one token")
    mean_diff = math.fsum(n - o for n, o in zip(logp_new, logp_old)) / len(logp_new)
    return math.exp(mean_diff)


def gspo_objective(group: PolicyGroup, epsilon: float = DEFAULT_EPSILON) -> GspoResult:
    """Clipped sequence-level surrogate averaged over the group.

    ``clipped_flags[i]`` is true exactly when the clipped branch was the
    strictly smaller term for sample i.
    """
    if not (0 < epsilon < 1):
        raise ValueError("epsilon must lie in (0, 1)")
    advantages = group_advantages(group.rewards)
    ratios = [sequence_ratio(s.logp_new, s.logp_old) for s in group.samples]

    terms = []
    clipped_flags = []
    for adv, ratio in zip(advantages, ratios):
        raw = ratio * adv
        clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon) * adv
        terms.append(min(raw, clipped))
        clipped_flags.append(clipped < raw)

    objective = math.fsum(terms) / len(terms)
    return GspoResult(
        advantages=tuple(advantages),
        ratios=tuple(ratios),
        objective=objective,
        clipped_flags=tuple(clipped_flags),
    )
