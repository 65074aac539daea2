"""Learning-rate schedules as pure functions of the step index.

Driving optimizer groups from these (rather than stateful scheduler
objects) keeps histories byte-reproducible and makes the invariants
directly testable.
"""

from __future__ import annotations

import math

from ..errors import ConfigError


def one_cycle_lr(step: int, total_steps: int, peak_lr: float,
                 pct_warmup: float = 0.3, div_factor: float = 25.0,
                 final_div_factor: float = 1e4) -> float:
    """Cosine ramp from peak/div up to peak, then cosine anneal far below.

    The peak is hit exactly at the end of the warmup phase; the final lr
    sits below the starting lr by final_div_factor.
    """
    if peak_lr <= 0:
        raise ConfigError("peak_lr must be positive")
    if not 0.0 < pct_warmup < 1.0:
        raise ConfigError("pct_warmup must be in (0,1)")
    if total_steps <= 1:
        return peak_lr
    step = min(max(step, 0), total_steps - 1)
    warm = min(max(int(round(pct_warmup * (total_steps - 1))), 1), total_steps - 2)
    start = peak_lr / div_factor
    end = start / final_div_factor
    if step <= warm:
        t = step / warm
        return start + (peak_lr - start) * (1 - math.cos(math.pi * t)) / 2
    t = (step - warm) / (total_steps - 1 - warm)
    return end + (peak_lr - end) * (1 + math.cos(math.pi * t)) / 2


def multistep_lr(epoch: int, base_lr: float, milestones, gamma: float = 0.1) -> float:
    """base_lr decayed by gamma at each passed milestone epoch."""
    milestones = sorted(milestones)
    if any(m2 <= m1 for m1, m2 in zip(milestones, milestones[1:])):
        raise ConfigError("milestones must be strictly increasing")
    drops = sum(1 for m in milestones if epoch >= m)
    return base_lr * gamma ** drops


def linear_warmup_lr(iteration: int, base_lr: float, warmup_iterations: int) -> float:
    """Linear ramp 0 -> base_lr over the warmup window, constant after."""
    if warmup_iterations <= 0:
        return base_lr
    return base_lr * min(1.0, iteration / warmup_iterations)
