"""Closed-form step rewards for the attack and defense agents.

Attack side:
    recon:   r_recon - proximity * ln(recon_streak)
    inject:  r_inject + ln(inject_count) - proximity * inject_count
             (+ r_goal when the goal condition was injected this step)

Defense side:
    assess:  r_assess - assess_weight * ln(tolerance * assess_streak)
             + proximity * tolerance
    block:   r_block - tolerance - ln(block_count)

`proximity` is the fraction of the designated attack chain completed and
`tolerance` is exactly ``1 - proximity``.  Streaks and totals include the
action being scored, so every logarithm argument is positive by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class DomainError(ValueError):
    """A reward input fell outside its mathematical domain."""


@dataclass(frozen=True)
class RewardConstants:
    """Base payoffs for the four actions plus the goal bonus.

    Defaults are not calibrated values; they only preserve the intended
    ordering (goal bonus >> inject > recon) and are config-overridable.
    """

    r_recon: float = 0.25
    r_inject: float = 2.0
    r_goal: float = 10.0
    r_assess: float = 1.0
    r_block: float = 2.0
    assess_weight: float = 0.01  # weight of the log term in the assess reward

    def validate(self) -> None:
        for name in ("r_recon", "r_inject", "r_goal", "r_assess", "r_block", "assess_weight"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.assess_weight < 0:
            raise DomainError(f"assess_weight must be >= 0, got {self.assess_weight!r}")


@dataclass(frozen=True)
class RewardContext:
    """Per-step quantities the reward formulas consume.

    Counters count the current action too: on a recon step ``recon_streak >= 1``,
    on an inject step ``inject_count >= 1``, and likewise for the defense side.
    """

    proximity: float
    recon_streak: int = 0
    assess_streak: int = 0
    inject_count: int = 0
    block_count: int = 0
    goal_hit: bool = False
    tolerance: float = field(default=-1.0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.proximity < 1.0:
            raise DomainError(f"proximity must be in [0, 1), got {self.proximity!r}")
        if self.tolerance < 0.0:
            object.__setattr__(self, "tolerance", 1.0 - self.proximity)
        elif self.tolerance != 1.0 - self.proximity:
            raise DomainError(
                f"tolerance must equal 1 - proximity exactly "
                f"({self.tolerance!r} != {1.0 - self.proximity!r})"
            )


def tolerance(proximity: float) -> float:
    """Defense tolerance for a given attack proximity: ``1 - proximity``."""
    if not 0.0 <= proximity < 1.0:
        raise DomainError(f"proximity must be in [0, 1), got {proximity!r}")
    return 1.0 - proximity


def aggression_trigger(proximity: float, tol: float) -> bool:
    """True once tolerance has fallen to or below proximity (i.e. proximity >= 0.5).

    Reported as a metric and usable as an optional exploration bias; it never
    overrides learned Q-values.
    """
    return tol <= proximity


def attack_reward(ctx: RewardContext, recon: bool, k: RewardConstants) -> float:
    """Reward for the attack agent's current action (recon or inject)."""
    if recon:
        if ctx.recon_streak < 1:
            raise DomainError(f"recon_streak must be >= 1 on a recon step, got {ctx.recon_streak}")
        return k.r_recon - ctx.proximity * math.log(ctx.recon_streak)
    if ctx.inject_count < 1:
        raise DomainError(f"inject_count must be >= 1 on an inject step, got {ctx.inject_count}")
    bonus = k.r_goal if ctx.goal_hit else 0.0
    return k.r_inject + math.log(ctx.inject_count) - ctx.proximity * ctx.inject_count + bonus


def defense_reward(ctx: RewardContext, assess: bool, k: RewardConstants) -> float:
    """Reward for the defense agent's current action (assess or block)."""
    if assess:
        arg = ctx.tolerance * ctx.assess_streak
        if arg <= 0.0:
            raise DomainError(f"tolerance * assess_streak must be > 0, got {arg!r}")
        return k.r_assess - k.assess_weight * math.log(arg) + ctx.proximity * ctx.tolerance
    if ctx.block_count < 1:
        raise DomainError(f"block_count must be >= 1 on a block step, got {ctx.block_count}")
    return k.r_block - ctx.tolerance - math.log(ctx.block_count)
