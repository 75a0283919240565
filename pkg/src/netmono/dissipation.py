"""Edge dissipation laws ``f(t, u, v)`` relating mass flux to density ``u``
and density gradient ``v`` (flux is ``-f``).

Units: density in kg/m^3, gradient in kg/m^4, flux in kg/m^2/s. Hence the
linear coefficient ``beta`` is in m^2/s and the Weymouth coefficient
``kappa`` in m^5/s^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DissipationError(ValueError):
    pass


# Sampling grid used to confirm the increasing-in-gradient condition.
_U_GRID = np.array([1e-3, 1e-1, 1.0, 10.0, 1e3])
_V_GRID = np.array([-1e3, -1.0, -1e-3, -1e-7, 0.0, 1e-7, 1e-3, 1.0, 1e3])


def _check_finite(*arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise DissipationError("non-finite dissipation input")


def _weymouth(kappa, delta, u, v):
    if (u <= 0).any():
        raise DissipationError("gas_weymouth requires positive density")
    av = np.abs(v)
    inner = av < delta
    ku = kappa * u
    safe = np.where(inner, delta, av)
    lin_slope = np.sqrt(ku / delta)
    root = np.sqrt(ku)
    f = np.where(inner, v * lin_slope, np.sign(v) * root * np.sqrt(safe))
    dfv = np.where(inner, lin_slope, root / (2.0 * np.sqrt(safe)))
    return f, f / (2.0 * u), dfv


class DissipationModel:
    """Base class. Subclasses implement :meth:`evaluate` vectorised over
    ``u`` and ``v`` and return ``(f, df_du, df_dv)``."""

    type_name = ""

    def evaluate(self, t, u, v):
        raise NotImplementedError

    def is_increasing(self) -> bool:
        """True if ``df/dv > 0`` on a fixed grid of positive densities and gradients."""
        uu, vv = np.meshgrid(_U_GRID, _V_GRID)
        _, _, dfv = self.evaluate(0.0, uu.ravel(), vv.ravel())
        return bool(np.all(dfv > 0))

    def max_slope(self, u):
        """Supremum of ``|df/dv|`` over all gradients at density ``u``."""
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"type": self.type_name, "params": self.params()}


@dataclass(frozen=True)
class LinearDissipation(DissipationModel):
    """``f = beta * v``. With ``strict=False`` a non-positive ``beta`` is
    accepted, which is only useful for planting non-monotone test cases."""

    beta: float
    strict: bool = field(default=True, compare=False, repr=False)

    type_name = "linear"

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise DissipationError("beta must be finite")
        if self.strict and not self.is_increasing():
            raise DissipationError(f"linear dissipation needs beta > 0, got {self.beta}")

    def evaluate(self, t, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        _check_finite(u, v)
        return self.beta * v, np.zeros_like(v), np.full_like(v, self.beta)

    def max_slope(self, u):
        return np.full(np.shape(u), abs(self.beta))

    def params(self) -> dict:
        return {"beta": self.beta}


@dataclass(frozen=True)
class GasWeymouth(DissipationModel):
    """``f = sign(v) sqrt(kappa u |v|)``, linearised as ``v sqrt(kappa u / delta)``
    for ``|v| < delta`` so the gradient derivative stays finite at zero flow."""

    kappa: float
    delta: float = 1e-6

    type_name = "gas_weymouth"

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise DissipationError(f"kappa must be positive, got {self.kappa}")
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise DissipationError(f"delta must be positive, got {self.delta}")
        if not self.is_increasing():
            raise DissipationError("gas_weymouth model is not increasing in the gradient")

    def evaluate(self, t, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        _check_finite(u, v)
        return _weymouth(self.kappa, self.delta, u, v)

    def max_slope(self, u):
        # attained inside the linearised band |v| < delta
        return np.sqrt(self.kappa * np.maximum(u, 0.0) / self.delta)

    def params(self) -> dict:
        return {"kappa": self.kappa, "delta": self.delta}


class DissipationBatch:
    """One model per slot, evaluated together: linear and Weymouth slots are
    vectorised over their parameters, any other model per distinct instance."""

    def __init__(self, models):
        models = list(models)
        self.n = len(models)
        self.models = tuple(models)
        lin = [i for i, m in enumerate(models) if type(m) is LinearDissipation]
        gas = [i for i, m in enumerate(models) if type(m) is GasWeymouth]
        self._lin = np.array(lin, dtype=int)
        self._beta = np.array([models[i].beta for i in lin])
        self._gas = np.array(gas, dtype=int)
        self._kappa = np.array([models[i].kappa for i in gas])
        self._delta = np.array([models[i].delta for i in gas])
        rest = {}
        for i, m in enumerate(models):
            if i not in set(lin) | set(gas):
                rest.setdefault(m, []).append(i)
        self._rest = [(m, np.array(ix, dtype=int)) for m, ix in rest.items()]
        self._all_linear = len(lin) == self.n

    def evaluate(self, t, u, v):
        _check_finite(u, v)
        if self._all_linear:
            return self._beta * v, np.zeros_like(v), self._beta.copy()
        f, fu, fv = np.empty(self.n), np.empty(self.n), np.empty(self.n)
        if len(self._lin):
            ix = self._lin
            f[ix], fu[ix], fv[ix] = self._beta * v[ix], 0.0, self._beta
        if len(self._gas):
            ix = self._gas
            f[ix], fu[ix], fv[ix] = _weymouth(self._kappa, self._delta, u[ix], v[ix])
        for m, ix in self._rest:
            f[ix], fu[ix], fv[ix] = m.evaluate(t, u[ix], v[ix])
        return f, fu, fv


def eval_dissipation(m: DissipationModel, t: float, u: float, v: float) -> tuple[float, float, float]:
    """Scalar evaluation: ``(f, df/du, df/dv)``."""
    f, fu, fv = m.evaluate(t, u, v)
    return float(f), float(fu), float(fv)


def model_from_dict(d: dict, strict: bool = True) -> DissipationModel:
    """Build a model from ``{type, params}`` (flat keys are also accepted)."""
    kind = d.get("type")
    params = d.get("params", {k: v for k, v in d.items() if k != "type"})
    if kind == "linear":
        return LinearDissipation(float(params["beta"]), strict=strict)
    if kind == "gas_weymouth":
        kwargs = {"kappa": float(params["kappa"])}
        if "delta" in params:
            kwargs["delta"] = float(params["delta"])
        return GasWeymouth(**kwargs)
    raise DissipationError(f"unknown dissipation model type {kind!r}")
