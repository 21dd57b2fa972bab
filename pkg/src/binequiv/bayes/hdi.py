from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    mass: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.lo and self.hi <= hi

    def to_list(self) -> list[float]:
        return [self.lo, self.hi]


def hdi(samples, mass: float = 0.95, min_samples: int = 100) -> Interval:
    """Highest density interval as the narrowest window of sorted samples.

    The window holds ``ceil(mass * S)`` samples; among equally narrow windows
    the one with the smallest lower end wins.
    """
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must lie in (0, 1)")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    S = x.size
    if S < min_samples:
        raise ValueError(f"need at least {min_samples} samples for an HDI, got {S}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    k = min(S, math.ceil(mass * S - 1e-9))
    widths = x[k - 1 :] - x[: S - k + 1]
    i = int(np.argmin(widths))
    return Interval(float(x[i]), float(x[i + k - 1]), mass)
