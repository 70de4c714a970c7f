"""Decaying local-epoch schedule: E_t = ceil(E0 * gamma^floor(t / freq))."""

import math
from dataclasses import dataclass

# Computed decay factors can land a hair above an exact integer (e.g. 13 as
# 13.000000000000002); values this close to an integer are treated as exact
# before the ceiling is taken.
_CEIL_GUARD = 1e-9


@dataclass(frozen=True)
class EpochSchedule:
    e0: int
    gamma: float = 1.0
    freq: int = 1

    def __post_init__(self):
        if self.e0 < 1:
            raise ValueError("e0 must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.freq < 1:
            raise ValueError("freq must be >= 1")

    @classmethod
    def fixed(cls, epochs: int) -> "EpochSchedule":
        return cls(e0=epochs, gamma=1.0, freq=1)

    @property
    def is_fixed(self) -> bool:
        return self.gamma == 1.0


def epochs_for_round(t: int, sched: EpochSchedule) -> int:
    """Local epochs for round t; never below 1, non-increasing in t."""
    if t < 0:
        raise ValueError("round index must be non-negative")
    factor = 1.0
    for _ in range(t // sched.freq):
        factor *= sched.gamma
        if sched.e0 * factor <= 1.0:
            return 1
    return max(1, math.ceil(sched.e0 * factor - _CEIL_GUARD))
