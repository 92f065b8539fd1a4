"""Utility function and reinforcement signal.

The per-tick utility blends normalized throughput, resource frugality and an
SLO-violation penalty; the reward handed to the learner is the utility
difference across an enacted scaling action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RewardWeights:
    """Relative importance of throughput / resource cost / SLO violations."""

    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0

    def __post_init__(self):
        for name in ("w1", "w2", "w3"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)

    @property
    def total(self) -> float:
        return self.w1 + self.w2 + self.w3


@dataclass(frozen=True)
class SloConfig:
    """Desired response time plus the normalization constants of the utility."""

    rt_des_ms: float
    th_max: float
    vm_max: int

    def __post_init__(self):
        if not (self.rt_des_ms > 0 and self.th_max > 0 and self.vm_max > 0):
            raise ValueError(f"SLO constants must be strictly positive: {self}")


def penalty_h(rt_ms: float, rt_des_ms: float) -> float:
    """SLO penalty: 0 up to the desired response time, 1 from twice it,
    linear in between."""
    if rt_ms <= rt_des_ms:
        return 0.0
    if rt_ms >= 2.0 * rt_des_ms:
        return 1.0
    return (rt_ms - rt_des_ms) / rt_des_ms


def utility(obs, weights: RewardWeights, slo: SloConfig) -> float:
    """Weighted utility of an observation (needs .th, .vm, .rt_ms).

    Throughput and node count are clamped into their design ranges before
    normalizing so measurement spikes cannot push the utility out of range.
    """
    th = min(max(float(obs.th), 0.0), slo.th_max)
    vm = min(max(float(obs.vm), 1.0), float(slo.vm_max))
    return (
        weights.w1 * (th / slo.th_max)
        + weights.w2 * (1.0 - vm / slo.vm_max)
        + weights.w3 * (1.0 - penalty_h(obs.rt_ms, slo.rt_des_ms))
    )


def reward(u_now: float, u_prev: float) -> float:
    """Reinforcement signal: utility gained (or lost) since the last tick."""
    return u_now - u_prev
