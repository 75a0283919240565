"""Checks of the monotone-in-injections property of the nodal dynamics.

Analytic side: the state Jacobian must be Metzler and the injection
Jacobian non-negative (Kamke conditions). Empirical side: ordered
injections and initial states must yield ordered trajectories.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .network import RefinedNetwork
from .policies import ConstantPolicy, FeedbackPolicy, PowerLawPolicy, TabulatedPolicy  # noqa: F401
from .profiles import TimeProfile
from .simulator import (
    InjectionField,
    NodalDynamics,
    SimulationError,
    _resolve_injections,
    simulate,
    suggest_step,
)

DEFAULT_TOL = 1e-12


def adjacency_mask(rnet: RefinedNetwork) -> np.ndarray:
    """Boolean matrix marking node pairs joined by a refined segment."""
    m = np.zeros((rnet.n_nodes, rnet.n_nodes), dtype=bool)
    m[rnet.source, rnet.target] = True
    m[rnet.target, rnet.source] = True
    return m


@dataclass
class JacobianReport:
    time: float
    state_jacobian: np.ndarray
    injection_jacobian: np.ndarray
    metzler_ok: bool
    min_offdiagonal: float
    nonneg_ok: bool
    min_injection_entry: float
    sparsity_ok: bool
    worst_offdiagonal: tuple[int, int]


def jacobians(rnet: RefinedNetwork, rho, t: float, controls=None, tol: float = DEFAULT_TOL) -> JacobianReport:
    """Analytic Jacobians of the nodal dynamics and their sign checks.

    ``min_offdiagonal`` is taken over entries of adjacent node pairs only
    (other off-diagonal entries are structurally zero, see ``sparsity_ok``).
    """
    J, Jq = NodalDynamics(rnet, controls, InjectionField.zero(rnet.n_nodes)).jacobian(t, rho)
    adj = adjacency_mask(rnet)
    off = ~np.eye(rnet.n_nodes, dtype=bool)
    masked = np.where(adj, J, np.inf)
    r, c = np.unravel_index(int(np.argmin(masked)), J.shape)
    return JacobianReport(
        time=float(t),
        state_jacobian=J,
        injection_jacobian=Jq,
        metzler_ok=bool(np.all(J[off] >= -tol)),
        min_offdiagonal=float(masked[r, c]),
        nonneg_ok=bool(np.all(Jq >= -tol)),
        min_injection_entry=float(np.min(np.diag(Jq))),
        sparsity_ok=bool(np.all(J[off & ~adj] == 0.0)),
        worst_offdiagonal=(int(r), int(c)),
    )


@dataclass(frozen=True)
class StateSampling:
    """Box from which (time, state, control) samples are drawn.

    Actuator ratios are sampled as linear profiles through a random value
    with a random slope, so the time-derivative term is exercised as well.
    """

    n_samples: int = 50
    rho_range: tuple[float, float] = (0.5, 2.0)
    t_range: tuple[float, float] = (0.0, 1.0)
    ratio_range: tuple[float, float] = (0.8, 1.5)
    rate_range: tuple[float, float] = (-0.5, 0.5)
    seed: int = 0

    def draw(self, rnet: RefinedNetwork):
        rng = np.random.default_rng(self.seed)
        for _ in range(self.n_samples):
            t = float(rng.uniform(*self.t_range))
            rho = rng.uniform(*self.rho_range, size=rnet.n_nodes)
            controls = []
            for _a in rnet.actuators:
                val = float(rng.uniform(*self.ratio_range))
                slope = float(rng.uniform(*self.rate_range))
                controls.append(TimeProfile((t - 1.0, t + 1.0), (val - slope, val + slope)))
            yield t, rho, tuple(controls)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MonotoneCheck:
    metzler_ok: bool
    nonneg_ok: bool
    sparsity_ok: bool
    min_offdiagonal: float
    min_injection_entry: float
    worst_metzler: dict
    worst_injection: dict
    n_samples: int
    sampling: dict
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.metzler_ok and self.nonneg_ok and self.sparsity_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_monotone_conditions(rnet: RefinedNetwork, sampling, tol: float = DEFAULT_TOL) -> MonotoneCheck:
    """Evaluate the Kamke conditions at every sample; failures are reported, not raised.

    ``sampling`` is a :class:`StateSampling` or an iterable of
    ``(t, rho, controls)`` triples.
    """
    samples = sampling.draw(rnet) if isinstance(sampling, StateSampling) else sampling
    off = ~np.eye(rnet.n_nodes, dtype=bool)
    worst_m = {"value": np.inf}
    worst_q = {"value": np.inf}
    min_adj = np.inf
    metzler = nonneg = sparse = True
    n = 0
    for i, (t, rho, controls) in enumerate(samples):
        n += 1
        rep = jacobians(rnet, rho, t, controls, tol)
        J = rep.state_jacobian
        vals = np.where(off, J, np.inf)
        r, c = np.unravel_index(int(np.argmin(vals)), J.shape)
        if vals[r, c] < worst_m["value"]:
            worst_m = {"value": float(vals[r, c]), "sample": i, "time": t,
                       "row": rnet.nodes[r], "col": rnet.nodes[c]}
        d = np.diag(rep.injection_jacobian)
        j = int(np.argmin(d))
        if d[j] < worst_q["value"]:
            worst_q = {"value": float(d[j]), "sample": i, "time": t, "node": rnet.nodes[j]}
        min_adj = min(min_adj, rep.min_offdiagonal)
        metzler &= rep.metzler_ok
        nonneg &= rep.nonneg_ok
        sparse &= rep.sparsity_ok
    if n == 0:
        raise ValueError("sampling is empty")
    notes = ["conditions checked on samples only; piecewise-linear profile corners are not sampled"]
    return MonotoneCheck(
        metzler_ok=bool(metzler),
        nonneg_ok=bool(nonneg),
        sparsity_ok=bool(sparse),
        min_offdiagonal=float(min_adj),
        min_injection_entry=float(worst_q["value"]),
        worst_metzler=worst_m,
        worst_injection=worst_q,
        n_samples=n,
        sampling=sampling.to_dict() if isinstance(sampling, StateSampling) else {"explicit": n},
        notes=notes,
    )


def check_feedback_policy(p: FeedbackPolicy, density_domain: tuple[float, float], grid_points: int = 101):
    """``(ok, min_margin)`` where the margin is ``min v k'(v) + k(v)`` on a
    uniform grid over ``density_domain``; ok only if strictly positive."""
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    v = np.linspace(density_domain[0], density_domain[1], grid_points)
    margin = float(np.min(p.gain(v)))
    return margin > 0, margin


@dataclass
class OrderTestResult:
    scenario: str
    holds: bool
    margin: float
    first_violation: Optional[dict] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _order_result(name, times, low, high, nodes, tol) -> OrderTestResult:
    diff = high - low
    margin = float(diff.min())
    bad = np.argwhere(diff < -tol)
    first = None
    if len(bad):
        k, j = bad[0]
        first = {"time": float(times[k]), "node": nodes[j], "low": float(low[k, j]), "high": float(high[k, j])}
    return OrderTestResult(name, margin >= -tol, margin, first)


def _run(tag, rnet, rho0, inj, controls, step, t_end):
    try:
        return simulate(rnet, rho0, (0.0, t_end), controls, step, injections=inj, record_jumps=False)
    except SimulationError as exc:
        exc.scenario = tag
        exc.args = (f"[{tag}] {exc.args[0]}",)
        raise


def verify_order_propagation(
    rnet: RefinedNetwork,
    rho0_low,
    rho0_high,
    q_low,
    q_high,
    controls=None,
    step: Optional[float] = None,
    t_end: Optional[float] = None,
    tol: float = 1e-9,
    scenario: str = "low<=high",
) -> OrderTestResult:
    """Simulate both scenarios under identical controls and step and check
    ``rho_low(t) <= rho_high(t) + tol`` componentwise at every sample."""
    rho0_low = np.asarray(rho0_low, dtype=float)
    rho0_high = np.asarray(rho0_high, dtype=float)
    if np.any(rho0_low > rho0_high):
        raise ValueError("initial states are not ordered")
    t_end = rnet.base.horizon if t_end is None else t_end
    q_low, q_high = _resolve_injections(rnet, q_low), _resolve_injections(rnet, q_high)
    if step is None:
        step = min(suggest_step(rnet, rho0_low, (0, t_end), controls),
                   suggest_step(rnet, rho0_high, (0, t_end), controls))
    lo = _run("low", rnet, rho0_low, q_low, controls, step, t_end)
    if np.any(np.array([q_low.at(t) for t in lo.times]) > np.array([q_high.at(t) for t in lo.times]) + 1e-15):
        raise ValueError("injections are not ordered at the sample times")
    hi = _run("high", rnet, rho0_high, q_high, controls, step, t_end)
    return _order_result(scenario, lo.times, lo.rho, hi.rho, rnet.nodes, tol)


def verify_sandwich(
    rnet: RefinedNetwork,
    rho0,
    q_low,
    q_high,
    interior: Sequence,
    controls=None,
    step: Optional[float] = None,
    t_end: Optional[float] = None,
    tol: float = 1e-9,
) -> list[OrderTestResult]:
    """For each interior injection field check ``rho_low <= rho <= rho_high``."""
    rho0 = np.asarray(rho0, dtype=float)
    t_end = rnet.base.horizon if t_end is None else t_end
    if step is None:
        step = suggest_step(rnet, rho0, (0, t_end), controls)
    lo = _run("low", rnet, rho0, _resolve_injections(rnet, q_low), controls, step, t_end)
    hi = _run("high", rnet, rho0, _resolve_injections(rnet, q_high), controls, step, t_end)
    out = []
    for i, q in enumerate(interior):
        mid = _run(f"interior-{i}", rnet, rho0, _resolve_injections(rnet, q), controls, step, t_end)
        below = _order_result(f"interior-{i}", lo.times, lo.rho, mid.rho, rnet.nodes, tol)
        above = _order_result(f"interior-{i}", lo.times, mid.rho, hi.rho, rnet.nodes, tol)
        worst = below if below.margin <= above.margin else above
        out.append(OrderTestResult(f"interior-{i}", below.holds and above.holds, worst.margin,
                                   below.first_violation or above.first_violation))
    return out
