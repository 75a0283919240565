"""Nodal density dynamics on a refined network and their fixed-step integration.

For node ``j`` with incident segment ends ``e`` (length ``L_e``, end ratio
``a_e``) the lumped mass is ``M_j = sum_e (L_e / 2) a_e rho_j`` and

    dM_j/dt = sum_out f(a rho_j, grad) - sum_in f(b rho_j, grad) + q_j,

with ``grad = (b rho_k - a rho_i) / L`` on each segment (``a`` the ratio at
its source end, ``b`` at its target end). On a uniformly refined network
this is exactly ``rho_dot_j = 2/(eps alpha_j) [...] - alpha_dot_j/alpha_j rho_j``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .dissipation import DissipationBatch, DissipationError
from .network import RatioSource, RefinedNetwork
from .policies import FeedbackPolicy


class SimulationError(RuntimeError):
    """Raised when the state leaves the admissible set. ``time`` and
    ``node`` locate the failure."""

    def __init__(self, message: str, time: float = math.nan, node: Optional[str] = None):
        super().__init__(message)
        self.time = time
        self.node = node


ControlsLike = Union[None, Sequence[RatioSource], Mapping]


def resolve_controls(rnet: RefinedNetwork, controls: ControlsLike = None) -> tuple:
    """Ratio sources aligned with ``rnet.actuators``.

    ``controls`` may be ``None`` (the network's own actuators), a full
    sequence, or a mapping overriding some actuators keyed by position or by
    ``"<edge><side>"`` (e.g. ``"e1+"``).
    """
    base = [a.ratio for a in rnet.actuators]
    if controls is None:
        return tuple(base)
    if isinstance(controls, Mapping):
        keys = {f"{rnet.base.actuators[a.base_index].edge}{a.side}": i for i, a in enumerate(rnet.actuators)}
        for k, src in controls.items():
            i = keys[k] if isinstance(k, str) else int(k)
            base[i] = src
        return tuple(base)
    controls = tuple(controls)
    if len(controls) != len(base):
        raise ValueError(f"expected {len(base)} control sources, got {len(controls)}")
    return controls


class InjectionField:
    """Nodal injections ``q(t)`` on a refined network; interior nodes carry zero."""

    def __init__(self, n_nodes: int, sources: Mapping[int, Callable[[float], float]]):
        self.n_nodes = n_nodes
        self.sources = dict(sources)
        self._idx = np.array(sorted(self.sources), dtype=int)
        self._fns = [self.sources[i] for i in self._idx]

    @classmethod
    def from_network(cls, rnet: RefinedNetwork, which: str = "nominal") -> "InjectionField":
        attr = {"nominal": "nominal", "lower": "low", "upper": "high"}[which]
        return cls(rnet.n_nodes, {rnet.index[n]: getattr(s, attr) for n, s in rnet.base.injections.items()})

    @classmethod
    def from_mapping(cls, rnet: RefinedNetwork, mapping: Mapping[str, Callable]) -> "InjectionField":
        return cls(rnet.n_nodes, {rnet.index[n]: f for n, f in mapping.items()})

    @classmethod
    def zero(cls, n_nodes: int) -> "InjectionField":
        return cls(n_nodes, {})

    def at(self, t: float) -> np.ndarray:
        q = np.zeros(self.n_nodes)
        for i, f in zip(self._idx, self._fns):
            q[i] = f(t)
        return q


def _resolve_injections(rnet, injections) -> InjectionField:
    if injections is None:
        return InjectionField.from_network(rnet, "nominal")
    if isinstance(injections, InjectionField):
        return injections
    if isinstance(injections, str):
        return InjectionField.from_network(rnet, injections)
    if isinstance(injections, Mapping):
        return InjectionField.from_mapping(rnet, injections)
    q = np.asarray(injections, dtype=float)
    return InjectionField(rnet.n_nodes, {i: (lambda t, v=v: v) for i, v in enumerate(q) if v != 0.0})


@dataclass(frozen=True)
class MidpointFluxes:
    """Segment mass fluxes ``phi = -f``. ``tail`` is the flux as seen from
    the segment's source node (density argument ``a rho_i``), ``head`` as
    seen from its target node (``b rho_j``); they agree when ``f`` does not
    depend on density."""

    tail: np.ndarray
    head: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.tail


class NodalDynamics:
    """Right-hand side, Jacobians and diagnostics of the nodal ODE for one
    choice of controls and injections."""

    def __init__(self, rnet: RefinedNetwork, controls: ControlsLike = None, injections=None):
        self.rnet = rnet
        self.sources = resolve_controls(rnet, controls)
        self.injections = _resolve_injections(rnet, injections)
        self.n = rnet.n_nodes
        self._src, self._dst, self._len = rnet.source, rnet.target, rnet.length
        half = self._len / 2.0
        self._half = half
        self._w0 = np.bincount(self._src, half, self.n) + np.bincount(self._dst, half, self.n)
        self._batch = DissipationBatch(rnet.edge_models * 2)
        self._acts = [
            (a.edge_index, a.side == "+", a.node, float(half[a.edge_index]), src, isinstance(src, FeedbackPolicy))
            for a, src in zip(rnet.actuators, self.sources)
        ]
        self.has_feedback = any(a[5] for a in self._acts)

    def actuation(self, t: float, rho: np.ndarray):
        """End ratios per segment plus nodal mass weights and weight rates."""
        tail = np.ones(len(self._len))
        head = np.ones(len(self._len))
        weight = self._w0.copy()
        rate = np.zeros(self.n)
        for e, plus, node, half, src, fb in self._acts:
            if fb:
                k = float(src.evaluate(rho[node])[0])
                eff, r = float(src.gain(rho[node])), 0.0
            else:
                k, r = src.evaluate(t)
                eff = k
            if plus:
                tail[e] = k
            else:
                head[e] = k
            weight[node] += half * (eff - 1.0)
            rate[node] += half * r
        return tail, head, weight, rate

    def _dissipation(self, t, u_tail, u_head, v):
        return self._batch.evaluate(t, np.concatenate([u_tail, u_head]), np.concatenate([v, v]))

    def _evaluate(self, t, rho):
        tail, head, weight, rate = self.actuation(t, rho)
        rs, rd = rho[self._src], rho[self._dst]
        u_tail, u_head = tail * rs, head * rd
        v = (u_head - u_tail) / self._len
        try:
            f, fu, fv = self._dissipation(t, u_tail, u_head, v)
        except DissipationError as exc:
            j = int(np.argmin(rho))
            raise SimulationError(str(exc), t, self.rnet.nodes[j]) from exc
        return tail, head, weight, rate, v, f, fu, fv

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        tail, head, weight, rate, v, f, fu, fv = self._evaluate(t, rho)
        E = len(v)
        if self.has_feedback and np.any(weight <= 0):
            j = int(np.argmin(weight))
            raise SimulationError(
                f"feedback gain r_j <= 0 at node {self.rnet.nodes[j]}", t, self.rnet.nodes[j]
            )
        net = np.bincount(self._src, f[:E], self.n) - np.bincount(self._dst, f[E:], self.n)
        out = (net + self.injections.at(t) - rate * rho) / weight
        if not np.all(np.isfinite(out)):
            j = int(np.flatnonzero(~np.isfinite(out))[0])
            raise SimulationError(f"non-finite rate at node {self.rnet.nodes[j]}", t, self.rnet.nodes[j])
        return out

    def fluxes(self, t: float, rho: np.ndarray) -> MidpointFluxes:
        _, _, _, _, v, f, _, _ = self._evaluate(t, np.asarray(rho, dtype=float))
        E = len(v)
        return MidpointFluxes(-f[:E], -f[E:])

    def jacobian(self, t: float, rho: np.ndarray, frozen_feedback: bool = False):
        """Analytic ``(d rho_dot / d rho, d rho_dot / d q)``.

        Off-diagonal entries are ``h a / (L W_j)`` for the source neighbour of
        an incoming segment and ``h b / (L W_j)`` for the target neighbour of
        an outgoing one, ``h = df/dv`` and ``W_j`` the nodal mass weight.
        Feedback ratios are rejected unless ``frozen_feedback`` (then they are
        treated as fixed at their current values).
        """
        if self.has_feedback and not frozen_feedback:
            raise ValueError("analytic Jacobian is defined for open-loop controls only")
        rho = np.asarray(rho, dtype=float)
        a, b, weight, rate, v, f, fu, fv = self._evaluate(t, rho)
        E = len(v)
        fu_t, fu_h, fv_t, fv_h = fu[:E], fu[E:], fv[:E], fv[E:]
        L, s, d = self._len, self._src, self._dst
        J = np.zeros((self.n, self.n))
        np.add.at(J, (s, s), a * (fu_t - fv_t / L))
        np.add.at(J, (s, d), fv_t * b / L)
        np.add.at(J, (d, d), -b * (fu_h + fv_h / L))
        np.add.at(J, (d, s), fv_h * a / L)
        J /= weight[:, None]
        J[np.diag_indices(self.n)] -= rate / weight
        return J, np.diag(1.0 / weight)

    def slope_bound(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Per-node bound on ``|d rho_dot_j / d rho_j|`` from the largest
        possible ``df/dv`` of each segment (density-derivative terms are
        taken at the current state)."""
        a, b, weight, rate, v, f, fu, fv = self._evaluate(t, rho)
        E = len(v)
        u = np.concatenate([a * rho[self._src], b * rho[self._dst]])
        hmax = np.array([m.max_slope(x) for m, x in zip(self._batch.models, u)], dtype=float)
        L = self._len
        tail = a * (np.abs(fu[:E]) + hmax[:E] / L)
        head = b * (np.abs(fu[E:]) + hmax[E:] / L)
        bound = np.bincount(self._src, tail, self.n) + np.bincount(self._dst, head, self.n)
        return (bound + np.abs(rate)) / np.abs(weight)

    def mass(self, t: float, rho: np.ndarray) -> float:
        """Lumped commodity mass ``sum_e (L_e/2)(a_e rho_src + b_e rho_dst)``."""
        tail, head, _, _ = self.actuation(t, rho)
        return float(np.sum(self._half * (tail * rho[self._src] + head * rho[self._dst])))

    def relative_jump(self, t: float, rho: np.ndarray) -> float:
        """Largest relative end-to-end density difference over all segments."""
        tail, head, _, _ = self.actuation(t, rho)
        lo, hi = tail * rho[self._src], head * rho[self._dst]
        return float(np.max(2.0 * np.abs(hi - lo) / (hi + lo)))


def aggregate_actuation(rnet: RefinedNetwork, j, t: float, controls: ControlsLike = None) -> tuple[float, float]:
    """Sum of end ratios (and their time derivatives) over the segments at node ``j``.

    Unactuated ends count as ratio 1. Feedback actuators are not allowed here.
    """
    j = rnet.index[j] if isinstance(j, str) else int(j)
    sources = resolve_controls(rnet, controls)
    alpha = float(np.sum(rnet.source == j) + np.sum(rnet.target == j))
    rate = 0.0
    for a, src in zip(rnet.actuators, sources):
        if a.node != j:
            continue
        if isinstance(src, FeedbackPolicy):
            raise ValueError("aggregate_actuation needs open-loop ratio profiles")
        k, dk = src.evaluate(t)
        alpha += k - 1.0
        rate += dk
    return alpha, rate


def nodal_rhs(rnet: RefinedNetwork, rho, t: float, controls: ControlsLike = None, injections=None) -> np.ndarray:
    return NodalDynamics(rnet, controls, injections)(t, np.asarray(rho, dtype=float))


def nodal_rhs_feedback(rnet: RefinedNetwork, rho, t: float, policies, injections=None) -> np.ndarray:
    """Closed-loop rate with every actuator driven by a density-feedback policy."""
    sources = resolve_controls(rnet, policies)
    if not all(isinstance(s, FeedbackPolicy) for s in sources):
        raise ValueError("every actuator needs a feedback policy")
    return NodalDynamics(rnet, sources, injections)(t, np.asarray(rho, dtype=float))


def midpoint_fluxes(rnet, rho, t, controls: ControlsLike = None) -> MidpointFluxes:
    return NodalDynamics(rnet, controls, InjectionField.zero(rnet.n_nodes)).fluxes(t, rho)


@dataclass(frozen=True)
class NodalState:
    time: float
    rho: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    rho: np.ndarray
    node_ids: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def samples(self) -> list[NodalState]:
        return [NodalState(float(t), r) for t, r in zip(self.times, self.rho)]

    @property
    def final(self) -> np.ndarray:
        return self.rho[-1]

    def column(self, node: str) -> np.ndarray:
        return self.rho[:, self.node_ids.index(node)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *self.node_ids])
            for t, row in zip(self.times, self.rho):
                w.writerow([repr(float(t)), *(repr(float(x)) for x in row)])


def suggest_step(
    rnet: RefinedNetwork,
    rho,
    t_span=(0.0, 1.0),
    controls: ControlsLike = None,
    safety: float = 0.5,
    gradient_bound: bool = False,
) -> float:
    """Step keeping ``h * max_j |d rho_dot_j / d rho_j| <= safety``.

    With ``safety <= 1`` classical RK4 maps componentwise-ordered states to
    ordered states for linear Metzler dynamics, so the discrete trajectories
    inherit the order-preserving property. Evaluated at ``rho`` over a few
    times in ``t_span``. The diagonal depends on the density gradients when
    ``df/dv`` does (gas models stiffen as gradients flatten); with
    ``gradient_bound`` each segment's slope is replaced by its supremum over
    all gradients at the segment's end densities, which bounds the diagonal
    for any state with those densities.
    """
    dyn = NodalDynamics(rnet, controls, InjectionField.zero(rnet.n_nodes))
    rho = np.asarray(rho, dtype=float)
    worst = 0.0
    for t in np.linspace(t_span[0], t_span[1], 9):
        J, _ = dyn.jacobian(float(t), rho, frozen_feedback=True)
        diag = np.abs(np.diag(J))
        if gradient_bound:
            diag = np.maximum(diag, dyn.slope_bound(float(t), rho))
        worst = max(worst, float(np.max(diag)))
    return safety / worst if worst > 0 else float(t_span[1] - t_span[0])


def simulate(
    rnet: RefinedNetwork,
    rho0,
    t_span,
    controls: ControlsLike = None,
    step: Optional[float] = None,
    injections=None,
    record_jumps: bool = True,
) -> Trajectory:
    """Integrate the nodal dynamics with classical fixed-step RK4.

    Samples are returned at every step; the last step is shortened to land
    on ``t_span[1]``. Aborts with :class:`SimulationError` when a density
    becomes non-positive or the state non-finite.
    """
    rho = np.array(rho0, dtype=float)
    if rho.shape != (rnet.n_nodes,):
        raise ValueError(f"initial state must have length {rnet.n_nodes}")
    if np.any(rho <= 0):
        raise SimulationError("initial density must be positive", float(t_span[0]), rnet.nodes[int(np.argmin(rho))])
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    if step is None:
        step = suggest_step(rnet, rho, (t0, t1), controls)
    if not step > 0:
        raise ValueError("step must be positive")
    n = max(1, math.ceil((t1 - t0) / step - 1e-9))
    times = t0 + step * np.arange(n + 1)
    times[-1] = t1
    dyn = NodalDynamics(rnet, controls, injections)
    out = np.empty((n + 1, rnet.n_nodes))
    out[0] = rho
    jumps = np.zeros(n + 1)
    if record_jumps:
        jumps[0] = dyn.relative_jump(t0, rho)
    for k in range(n):
        t, h = times[k], times[k + 1] - times[k]
        k1 = dyn(t, rho)
        k2 = dyn(t + h / 2, rho + h / 2 * k1)
        k3 = dyn(t + h / 2, rho + h / 2 * k2)
        k4 = dyn(t + h, rho + h * k3)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(rho)):
            j = int(np.flatnonzero(~np.isfinite(rho))[0])
            raise SimulationError("non-finite density", float(times[k + 1]), rnet.nodes[j])
        if np.any(rho <= 0):
            j = int(np.argmin(rho))
            raise SimulationError(
                f"density became non-positive at node {rnet.nodes[j]}", float(times[k + 1]), rnet.nodes[j]
            )
        out[k + 1] = rho
        if record_jumps:
            jumps[k + 1] = dyn.relative_jump(times[k + 1], rho)
    meta = {
        "integrator": "rk4",
        "step": float(step),
        "steps": int(n),
        "epsilon": rnet.epsilon,
        "max_relative_jump": float(jumps.max()) if record_jumps else None,
    }
    return Trajectory(times, out, rnet.nodes, meta)
