"""Robust optimal compression under bounded injection uncertainty.

Because the nodal dynamics are monotone in the injections, a schedule that
keeps the trajectories driven by the lower and upper injection envelopes
inside the density box keeps every injection profile between them inside
the box too. The continuum of uncertain scenarios is replaced by two
envelope simulations (plus the nominal one for the cost).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import RefinedNetwork
from .profiles import PiecewiseConstant
from .simulator import SimulationError, Trajectory, simulate, suggest_step

log = logging.getLogger(__name__)

SCENARIOS = ("nominal", "lower", "upper")


class OcpError(ValueError):
    def __init__(self, message: str, where: str = ""):
        super().__init__(message)
        self.where = where


@dataclass(frozen=True)
class RunningCost:
    """``w_a sum (alpha - 1)^2 + w_t sum (rho - rho_ref)^2 + w_l sum rho``.

    The actuation term sums over actuators, the density terms over refined
    nodes. ``level_weight`` gives a cost monotone in density (increasing
    for a positive weight).
    """

    actuation_weight: float = 0.0
    tracking_weight: float = 0.0
    rho_ref: float = 0.0
    level_weight: float = 0.0

    def density_rate(self, rho: np.ndarray) -> np.ndarray:
        """Density part of the running cost for each row of ``rho``."""
        out = np.zeros(rho.shape[0])
        if self.tracking_weight:
            out += self.tracking_weight * np.sum((rho - self.rho_ref) ** 2, axis=1)
        if self.level_weight:
            out += self.level_weight * np.sum(rho, axis=1)
        return out


@dataclass(frozen=True)
class ObjectiveSpec:
    """Running cost plus which trajectory it is evaluated on.

    ``variant='nominal'`` uses the nominal-injection trajectory. ``'minmax'``
    uses the upper-envelope trajectory when the cost increases with density
    and the lower one when it decreases; that is the worst case only for a
    cost monotone in density, so tracking costs are rejected.
    """

    cost: RunningCost
    variant: str = "nominal"
    monotone_sign: Optional[str] = None

    def __post_init__(self):
        if self.variant not in ("nominal", "minmax"):
            raise OcpError(f"unknown objective variant {self.variant!r}", "objective.variant")
        if self.variant == "minmax":
            if self.monotone_sign not in ("increasing", "decreasing"):
                raise OcpError("minmax objective needs monotone_sign increasing|decreasing", "objective.monotone_sign")
            if self.cost.tracking_weight != 0:
                raise OcpError("density tracking cost is not monotone in density", "objective.type")
            lw = self.cost.level_weight
            if (self.monotone_sign == "increasing" and lw < 0) or (self.monotone_sign == "decreasing" and lw > 0):
                raise OcpError("level weight sign contradicts monotone_sign", "objective.monotone_sign")

    @property
    def scenario(self) -> str:
        if self.variant == "nominal":
            return "nominal"
        return "upper" if self.monotone_sign == "increasing" else "lower"


def _as_node_vector(rnet: RefinedNetwork, value, fill: float, where: str) -> np.ndarray:
    """Scalar -> all refined nodes; mapping -> named nodes (``"*"`` sets the
    default for the rest); sequence -> per refined node."""
    if value is None:
        return np.full(rnet.n_nodes, fill)
    if isinstance(value, dict):
        out = np.full(rnet.n_nodes, float(value.get("*", fill)))
        for k, v in value.items():
            if k == "*":
                continue
            if k not in rnet.index:
                raise OcpError(f"unknown node {k!r}", where)
            out[rnet.index[k]] = float(v)
        return out
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(rnet.n_nodes, float(arr))
    if arr.shape != (rnet.n_nodes,):
        raise OcpError(f"expected {rnet.n_nodes} values", where)
    return arr


@dataclass
class RobustOcp:
    """Problem data. Each actuator's ratio is piecewise constant on
    ``intervals`` uniform intervals with values in ``[alpha_lo, alpha_hi]``.

    The envelope trajectories start from ``rho0_low`` / ``rho0_high``,
    defaulting to the nominal ``rho0``.
    """

    rnet: RefinedNetwork
    horizon: float
    intervals: int
    rho_min: object
    rho_max: object
    alpha_lo: float
    alpha_hi: float
    objective: ObjectiveSpec
    rho0: object
    rho0_low: object = None
    rho0_high: object = None
    step: Optional[float] = None

    def __post_init__(self):
        r = self.rnet
        if not (self.horizon > 0):
            raise OcpError("horizon must be positive", "horizon")
        if int(self.intervals) < 1:
            raise OcpError("intervals must be >= 1", "intervals")
        self.intervals = int(self.intervals)
        if not (self.alpha_lo > 0):
            raise OcpError("alpha_lo must be positive", "bounds.alpha_lo")
        if not (self.alpha_hi >= self.alpha_lo):
            raise OcpError("alpha_hi must be >= alpha_lo", "bounds.alpha_hi")
        self.rho_min = _as_node_vector(r, self.rho_min, -np.inf, "bounds.rho_min")
        self.rho_max = _as_node_vector(r, self.rho_max, np.inf, "bounds.rho_max")
        if np.any(self.rho_min >= self.rho_max):
            raise OcpError("rho_min must be below rho_max", "bounds.rho_min")
        self.rho0 = _as_node_vector(r, self.rho0, 1.0, "initial")
        self.rho0_low = self.rho0.copy() if self.rho0_low is None else _as_node_vector(r, self.rho0_low, 1.0, "initial")
        self.rho0_high = self.rho0.copy() if self.rho0_high is None else _as_node_vector(r, self.rho0_high, 1.0, "initial")
        if np.any(self.rho0_low > self.rho0) or np.any(self.rho0 > self.rho0_high):
            raise OcpError("initial states must satisfy low <= nominal <= high", "initial")
        for node, spec in r.base.injections.items():
            if not spec.check_ordering(self.horizon):
                raise OcpError(f"injection envelope at {node!r} is not ordered", node)
        if not r.actuators:
            raise OcpError("network has no actuators to optimise", "actuators")
        if self.step is None:
            self.step = self._default_step()
        # whole number of steps per interval so control jumps land on samples
        per = max(1, math.ceil(self.horizon / self.intervals / self.step - 1e-9))
        self.step = self.horizon / (self.intervals * per)

    def _default_step(self) -> float:
        h = math.inf
        n = len(self.rnet.actuators)
        for a in (self.alpha_lo, self.alpha_hi):
            ctl = tuple(PiecewiseConstant(self.horizon, (a,)) for _ in range(n))
            for rho in (self.rho0_low, self.rho0_high):
                h = min(h, suggest_step(self.rnet, rho, (0.0, self.horizon), ctl))
        return min(h, self.horizon / 100)

    @property
    def n_actuators(self) -> int:
        return len(self.rnet.actuators)

    @property
    def actuator_keys(self) -> tuple[str, ...]:
        base = self.rnet.base.actuators
        return tuple(f"{base[a.base_index].edge}{a.side}" for a in self.rnet.actuators)

    def schedule(self, values) -> "ControlSchedule":
        vals = np.asarray(values, dtype=float).reshape(self.n_actuators, self.intervals)
        return ControlSchedule(vals, self.horizon, self.actuator_keys)

    def constant_schedule(self, value: float = 1.0) -> "ControlSchedule":
        return self.schedule(np.full(self.n_actuators * self.intervals, float(value)))


@dataclass
class ControlSchedule:
    values: np.ndarray
    horizon: float
    actuator_keys: tuple
    objective: Optional[float] = None
    margins: Optional[dict] = None
    feasible: Optional[bool] = None
    violations: list = field(default_factory=list)
    status: str = ""
    iterations: int = 0

    def controls(self) -> tuple:
        return tuple(PiecewiseConstant(self.horizon, tuple(row)) for row in self.values)

    def to_dict(self) -> dict:
        return {
            "actuators": list(self.actuator_keys),
            "horizon": self.horizon,
            "intervals": int(self.values.shape[1]),
            "values": self.values.tolist(),
            "objective": self.objective,
            "margins": self.margins,
            "feasible": self.feasible,
            "violations": self.violations,
            "status": self.status,
            "iterations": self.iterations,
        }


@dataclass
class RobustEvaluation:
    objective: float
    margins: dict
    trajectories: dict
    violation: float
    feasible: bool
    violations: list


def _objective(ocp: RobustOcp, schedule: ControlSchedule, traj: Trajectory) -> float:
    cost = ocp.objective.cost
    J = 0.0
    if cost.actuation_weight:
        J += cost.actuation_weight * float(np.sum((schedule.values - 1.0) ** 2)) * ocp.horizon / ocp.intervals
    if cost.tracking_weight or cost.level_weight:
        J += float(np.trapezoid(cost.density_rate(traj.rho), traj.times))
    return J


def _simulate_scenarios(ocp: RobustOcp, schedule: ControlSchedule, which=SCENARIOS) -> dict:
    controls = schedule.controls()
    init = {"nominal": ocp.rho0, "lower": ocp.rho0_low, "upper": ocp.rho0_high}
    out = {}
    for name in which:
        try:
            out[name] = simulate(ocp.rnet, init[name], (0.0, ocp.horizon), controls, ocp.step,
                                 injections=name, record_jumps=False)
        except SimulationError as exc:
            exc.scenario = name
            exc.args = (f"[{name}] {exc.args[0]}",)
            raise
    return out


def _constraint_excess(ocp: RobustOcp, trajs: dict, backoff: float = 0.0):
    """Positive parts of the box-constraint violations on both envelopes,
    one (time x node) array per envelope and bound."""
    parts = []
    for rho in (trajs["lower"].rho, trajs["upper"].rho):
        parts.append(np.maximum(ocp.rho_min + backoff - rho, 0.0))
        parts.append(np.maximum(rho - ocp.rho_max + backoff, 0.0))
    return parts


def _penalty(parts) -> float:
    """Sum over (envelope, bound, node) of the squared worst violation in time."""
    return float(sum(np.sum(p.max(axis=0) ** 2) for p in parts))


def evaluate_robust(ocp: RobustOcp, schedule: ControlSchedule) -> RobustEvaluation:
    """Simulate nominal, lower- and upper-envelope injections under one
    schedule; return the cost, the box margins and the trajectories."""
    vals = np.asarray(schedule.values)
    if np.any(vals < ocp.alpha_lo - 1e-12) or np.any(vals > ocp.alpha_hi + 1e-12):
        raise OcpError("schedule outside [alpha_lo, alpha_hi]", "schedule")
    trajs = _simulate_scenarios(ocp, schedule)
    J = _objective(ocp, schedule, trajs[ocp.objective.scenario])
    low, high = trajs["lower"].rho, trajs["upper"].rho
    finite_min = np.isfinite(ocp.rho_min)
    finite_max = np.isfinite(ocp.rho_max)

    def _min(a, mask):
        return float(a[:, mask].min()) if mask.any() else math.inf

    margins = {
        "lower_above_min": _min(low - ocp.rho_min, finite_min),
        "upper_below_max": _min(ocp.rho_max - high, finite_max),
        "lower_below_max": _min(ocp.rho_max - low, finite_max),
        "upper_above_min": _min(high - ocp.rho_min, finite_min),
        "nominal_above_min": _min(trajs["nominal"].rho - ocp.rho_min, finite_min),
        "nominal_below_max": _min(ocp.rho_max - trajs["nominal"].rho, finite_max),
    }
    margins["envelope_min"] = min(margins[k] for k in ("lower_above_min", "upper_below_max",
                                                       "lower_below_max", "upper_above_min"))
    excess = _constraint_excess(ocp, trajs)
    violation = _penalty(excess)
    violations = []
    labels = ("lower envelope below rho_min", "lower envelope above rho_max",
              "upper envelope below rho_min", "upper envelope above rho_max")
    for label, p in zip(labels, excess):
        if np.any(p > 0):
            k, j = np.unravel_index(int(np.argmax(p)), p.shape)
            violations.append({"constraint": label, "node": ocp.rnet.nodes[j],
                               "time": float(trajs["lower"].times[k]), "amount": float(p[k, j])})
    return RobustEvaluation(J, margins, trajs, violation, not violations, violations)


@dataclass(frozen=True)
class OptimizerSettings:
    """Projected-gradient settings. The quadratic penalty weight grows by
    ``penalty_growth`` for up to ``penalty_rounds`` rounds while the iterate
    is infeasible; ``backoff`` tightens the box slightly inside the penalty
    so the penalised optimum lands on the feasible side. A round also ends
    when a step moves no schedule value by more than ``xtol`` times the
    bound range."""

    max_iters: int = 100
    tol: float = 1e-8
    penalty: float = 1e4
    fd_step: float = 1e-6
    penalty_growth: float = 10.0
    penalty_rounds: int = 8
    backoff: float = 1e-6
    xtol: float = 1e-9


def solve_robust(ocp: RobustOcp, settings: OptimizerSettings = OptimizerSettings(),
                 initial: Optional[ControlSchedule] = None) -> ControlSchedule:
    """Projected-gradient local search over the schedule values.

    The gradient of ``J + penalty * integral(hinge^2)`` is taken by forward
    differences and steps are projected onto ``[alpha_lo, alpha_hi]``. The
    best feasible schedule seen is returned; if none was feasible the best
    penalised one is returned with its violations listed.
    """
    lo, hi = ocp.alpha_lo, ocp.alpha_hi
    x = np.clip((initial or ocp.constant_schedule(1.0)).values.ravel().astype(float), lo, hi)
    span = max(hi - lo, 1e-12)
    penalty = settings.penalty
    best_feasible: Optional[tuple[float, np.ndarray]] = None
    best_any: Optional[tuple[float, np.ndarray]] = None
    cache: dict = {}
    cost = ocp.objective.cost
    needed = {"lower", "upper"}
    if cost.tracking_weight or cost.level_weight:
        needed.add(ocp.objective.scenario)
    needed = tuple(n for n in SCENARIOS if n in needed)

    def evaluate(xv):
        key = xv.tobytes()
        if key not in cache:
            sched = ocp.schedule(xv)
            try:
                trajs = _simulate_scenarios(ocp, sched, needed)
            except SimulationError:
                cache[key] = None
            else:
                J = _objective(ocp, sched, trajs.get(ocp.objective.scenario))
                pen = _penalty(_constraint_excess(ocp, trajs, settings.backoff))
                feas = not any(np.any(p > 0) for p in _constraint_excess(ocp, trajs))
                cache[key] = (J, pen, feas)
        return cache[key]

    def merit(xv, pen_w):
        r = evaluate(xv)
        if r is None:
            return math.inf
        nonlocal best_feasible, best_any
        J, pen, feas = r
        if feas and (best_feasible is None or J < best_feasible[0]):
            best_feasible = (J, xv.copy())
        m = J + pen_w * pen
        if best_any is None or m < best_any[0]:
            best_any = (m, xv.copy())
        return m

    def gradient(xv, fx, pen_w):
        g = np.zeros_like(xv)
        for i in range(len(xv)):
            h = settings.fd_step * max(1.0, abs(xv[i]))
            sign = 1.0 if xv[i] + h <= hi else -1.0
            xp = xv.copy()
            xp[i] += sign * h
            g[i] = sign * (merit(xp, pen_w) - fx) / h
        return g

    iterations = 0
    status = "max_iters"
    for _round in range(max(1, settings.penalty_rounds)):
        fx = merit(x, penalty)
        if not math.isfinite(fx):
            status = "simulation_failed"
            break
        status = "max_iters"
        s_prev = None
        for _ in range(settings.max_iters):
            iterations += 1
            g = gradient(x, fx, penalty)
            if not np.all(np.isfinite(g)):
                status = "simulation_failed"
                break
            pg = x - np.clip(x - g, lo, hi)
            if np.linalg.norm(pg) < settings.tol:
                status = "converged"
                break
            s_max = 0.5 * span / max(np.max(np.abs(g)), 1e-300)
            s = s_max if s_prev is None else min(2.0 * s_prev, s_max)
            accepted = False
            for _ls in range(60):
                xn = np.clip(x - s * g, lo, hi)
                if np.array_equal(xn, x):
                    break
                fn = merit(xn, penalty)
                if fn <= fx - 1e-4 * float(g @ (x - xn)):
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                status = "step_collapse"
                break
            moved = float(np.max(np.abs(xn - x)))
            s_prev = s
            x, fx = xn, fn
            log.debug("iter %d penalty %.3g merit %.12g x %s", iterations, penalty, fx, x)
            if moved <= settings.xtol * span:
                status = "converged"
                break
        r = evaluate(x)
        if r is not None and r[2]:
            break
        penalty *= settings.penalty_growth

    if best_feasible is not None:
        xbest = best_feasible[1]
    else:
        xbest = best_any[1] if best_any is not None else x
    sched = ocp.schedule(xbest)
    sched.status = status
    sched.iterations = iterations
    try:
        ev = evaluate_robust(ocp, sched)
    except SimulationError as exc:
        sched.feasible = False
        sched.violations = [{"constraint": "simulation abort", "scenario": getattr(exc, "scenario", None),
                             "node": exc.node, "time": exc.time, "message": str(exc)}]
        return sched
    sched.objective = ev.objective
    sched.margins = ev.margins
    sched.feasible = ev.feasible
    sched.violations = ev.violations
    return sched
