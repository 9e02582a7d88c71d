"""Dynamic teacher/assistant supervision weights over training."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ScheduleWeights:
    alpha_t: float  # teacher weight, eta(t)
    alpha_v: float  # assistant weight, 1 - eta(t)

    def __post_init__(self):
        if self.alpha_t + self.alpha_v != 1.0:
            raise ValueError("schedule weights must sum to 1")


def schedule(t: int, total: int, kind: str = "cosine") -> ScheduleWeights:
    """Weight ramp from assistant-dominant to teacher-dominant.

    cosine: eta(t) = 0.5 * (1 - cos(pi * t / total)); linear: eta = t/total;
    teacher-only pins eta = 1 (ablation surface). t past total is clamped.
    """
    if total < 1:
        raise ValueError("total must be >= 1")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    t = min(t, total)
    if kind == "cosine":
        eta = 0.5 * (1.0 - math.cos(math.pi * t / total))
    elif kind == "linear":
        eta = t / total
    elif kind == "teacher-only":
        eta = 1.0
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return ScheduleWeights(alpha_t=eta, alpha_v=1.0 - eta)
