"""Deterministic train/eval index splits."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import DatasetError
from ..seeding import derive_rng


@dataclass(frozen=True)
class SplitSpec:
    """Fraction of items assigned to the train side, plus the shuffle seed."""

    fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise DatasetError(f"split fraction must be in (0,1), got {self.fraction}")


def deterministic_split(n_items: int, spec: SplitSpec) -> tuple[list[int], list[int]]:
    """Partition range(n_items) into (train, eval) index lists.

    The train size is fraction*n rounded half-up, so 0.8 of 803 gives 642.
    The shuffle depends only on the seed; repeated calls return identical
    lists. Each side is returned sorted.
    """
    if n_items < 2:
        raise DatasetError(f"cannot split {n_items} item(s)")
    n_train = int(math.floor(spec.fraction * n_items + 0.5))
    if n_train == 0 or n_train == n_items:
        raise DatasetError(
            f"fraction {spec.fraction} leaves an empty side for {n_items} items"
        )
    perm = derive_rng(spec.seed, "split", n_items).permutation(n_items)
    train = sorted(int(i) for i in perm[:n_train])
    evals = sorted(int(i) for i in perm[n_train:])
    return train, evals


def explicit_split(n_items: int, eval_indices) -> tuple[list[int], list[int]]:
    """Partition range(n_items) against a fixed eval index list.

    Used where a dataset ships a fixed evaluation subset instead of a
    seeded fraction.
    """
    evals = sorted(set(int(i) for i in eval_indices))
    if not evals:
        raise DatasetError("explicit eval list is empty")
    if evals[0] < 0 or evals[-1] >= n_items:
        raise DatasetError(f"eval index {evals[-1] if evals[-1] >= n_items else evals[0]} "
                           f"out of range for {n_items} items")
    if len(evals) == n_items:
        raise DatasetError("explicit eval list covers the whole dataset")
    eval_set = set(evals)
    train = [i for i in range(n_items) if i not in eval_set]
    return train, evals
