"""Scalar time profiles used for injections and actuator ratios."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TimeProfile:
    """Continuous piecewise-linear function of time, held constant outside
    its breakpoints.

    The derivative is the slope of the active segment and is
    right-continuous at breakpoints; it is zero outside the breakpoint range.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if not times:
            raise ValueError("profile needs at least one breakpoint")
        if len(times) != len(values):
            raise ValueError("profile times and values differ in length")
        if not all(np.isfinite(times)) or not all(np.isfinite(values)):
            raise ValueError("profile breakpoints must be finite")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("profile breakpoint times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_t", np.asarray(times))
        object.__setattr__(self, "_v", np.asarray(values))
        slopes = np.diff(self._v) / np.diff(self._t) if len(times) > 1 else np.empty(0)
        object.__setattr__(self, "_slopes", slopes)
        object.__setattr__(self, "_slopes_list", [float(x) for x in slopes])

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "TimeProfile":
        pairs = list(pairs)
        if not pairs:
            raise ValueError("profile needs at least one breakpoint")
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def constant(cls, value: float) -> "TimeProfile":
        return cls((0.0,), (float(value),))

    def to_pairs(self) -> list[list[float]]:
        return [[t, v] for t, v in zip(self.times, self.values)]

    def __call__(self, t):
        if isinstance(t, (int, float)) or np.ndim(t) == 0:
            times, values = self.times, self.values
            if t <= times[0]:
                return values[0]
            if t >= times[-1]:
                return values[-1]
            k = bisect.bisect_right(times, t) - 1
            return values[k] + self._slopes_list[k] * (t - times[k])
        if len(self.times) == 1:
            return np.full(np.shape(t), self.values[0])
        return np.interp(t, self._t, self._v)

    def derivative(self, t: float) -> float:
        times = self.times
        if len(times) == 1 or t < times[0] or t >= times[-1]:
            return 0.0
        return self._slopes_list[bisect.bisect_right(times, t) - 1]

    def evaluate(self, t: float) -> tuple[float, float]:
        return self(t), self.derivative(t)

    def minimum(self) -> float:
        return min(self.values)

    def maximum(self) -> float:
        return max(self.values)


def evaluate_profile(p: TimeProfile, t: float) -> tuple[float, float]:
    """Return ``(value, derivative)`` of ``p`` at time ``t``."""
    return p.evaluate(t)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function on ``n`` uniform intervals of ``[0, horizon]``.

    Beyond the horizon the last value is held. The time derivative is
    taken as zero everywhere (jumps are excluded from the dynamics).
    """

    horizon: float
    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("need at least one interval value")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "values", values)

    def _index(self, t: float) -> int:
        n = len(self.values)
        k = int(np.floor(t * n / self.horizon + 1e-12))
        return min(max(k, 0), n - 1)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.values[self._index(t)]
        return np.array([self.values[self._index(s)] for s in np.ravel(t)]).reshape(np.shape(t))

    def derivative(self, t: float) -> float:
        return 0.0

    def evaluate(self, t: float) -> tuple[float, float]:
        return self(t), 0.0

    def minimum(self) -> float:
        return min(self.values)

    def maximum(self) -> float:
        return max(self.values)


@dataclass(frozen=True)
class BlendedProfile:
    """``lower(t) + theta(t) * (upper(t) - lower(t))``; a profile lying
    inside an injection envelope when ``0 <= theta <= 1``."""

    lower: object
    upper: object
    theta: object

    def __call__(self, t):
        lo = self.lower(t)
        return lo + self.theta(t) * (self.upper(t) - lo)
