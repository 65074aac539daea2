"""Dataset-level summaries: resolution profile, class balance flags."""

from __future__ import annotations

from ..errors import DatasetError

# A class hogging more than half the pixels/boxes marks the set imbalanced.
IMBALANCE_THRESHOLD = 0.5


def resolution_profile(min_res: float, max_res: float) -> float:
    """Mean ground resolution in meters, assuming a uniform spread.

    For a sensor mix spanning [min_res, max_res] m/pixel with uniformly
    distributed resolutions, the average is the midpoint.
    """
    if min_res <= 0 or max_res <= 0:
        raise DatasetError(f"resolutions must be positive, got ({min_res}, {max_res})")
    if min_res > max_res:
        raise DatasetError(f"min resolution {min_res} exceeds max {max_res}")
    return (min_res + max_res) / 2


def imbalance_flag(proportions) -> bool:
    """True when one class holds a majority of the mass."""
    return max(proportions) > IMBALANCE_THRESHOLD
