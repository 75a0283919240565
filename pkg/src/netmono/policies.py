"""Local density-feedback policies ``alpha = k(rho)`` for actuators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline


class FeedbackPolicy:
    """A ratio law ``k(v)`` of the local nodal density ``v``.

    ``evaluate`` returns ``(k(v), k'(v))``; ``gain`` returns
    ``v k'(v) + k(v)``, the quantity that must stay positive for the
    closed loop to remain monotone in the injections.
    """

    type_name = ""

    def evaluate(self, v):
        raise NotImplementedError

    def gain(self, v):
        k, dk = self.evaluate(v)
        return v * dk + k

    def to_dict(self) -> dict:
        return {"type": self.type_name, "params": self.params()}

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantPolicy(FeedbackPolicy):
    c: float

    type_name = "constant"

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        return np.full_like(v, self.c), np.zeros_like(v)

    def gain(self, v):
        return np.full_like(np.asarray(v, dtype=float), self.c)

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class PowerLawPolicy(FeedbackPolicy):
    """``k(v) = c v**a`` on ``v > 0``."""

    c: float
    a: float

    type_name = "power_law"

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        k = self.c * v**self.a
        return k, self.c * self.a * v ** (self.a - 1.0)

    def gain(self, v):
        # closed form keeps a = -1 exactly at zero
        v = np.asarray(v, dtype=float)
        return self.c * (self.a + 1.0) * v**self.a

    def params(self):
        return {"c": self.c, "a": self.a}


@dataclass(frozen=True)
class TabulatedPolicy(FeedbackPolicy):
    """Cubic Hermite interpolation through ``(density, value, slope)`` points;
    held constant (zero slope) outside the tabulated range."""

    densities: tuple[float, ...]
    values: tuple[float, ...]
    slopes: tuple[float, ...]

    type_name = "tabulated"

    def __post_init__(self):
        for name in ("densities", "values", "slopes"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if not (len(self.densities) == len(self.values) == len(self.slopes) >= 2):
            raise ValueError("tabulated policy needs >= 2 points of equal length")
        if any(b <= a for a, b in zip(self.densities, self.densities[1:])):
            raise ValueError("tabulated densities must be strictly increasing")
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.densities, self.values, self.slopes))

    def evaluate(self, v):
        v = np.asarray(v, dtype=float)
        lo, hi = self.densities[0], self.densities[-1]
        vc = np.clip(v, lo, hi)
        inside = (v >= lo) & (v <= hi)
        return self._spline(vc), np.where(inside, self._spline(vc, 1), 0.0)

    def params(self):
        return {"points": [list(p) for p in zip(self.densities, self.values, self.slopes)]}


def policy_from_dict(d: dict) -> FeedbackPolicy:
    kind = d.get("type")
    p = d.get("params", {k: v for k, v in d.items() if k != "type"})
    if kind == "constant":
        return ConstantPolicy(float(p["c"]))
    if kind == "power_law":
        return PowerLawPolicy(float(p["c"]), float(p["a"]))
    if kind == "tabulated":
        pts = p["points"]
        return TabulatedPolicy(tuple(x[0] for x in pts), tuple(x[1] for x in pts), tuple(x[2] for x in pts))
    raise ValueError(f"unknown feedback policy type {kind!r}")
