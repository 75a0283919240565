"""JSON/CSV readers and writers for networks, refined networks and OCPs."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .dissipation import model_from_dict
from .network import Actuator, Edge, InjectionSpec, Network, RefinedNetwork, refine_network
from .policies import FeedbackPolicy, policy_from_dict
from .profiles import TimeProfile
from .robust import ObjectiveSpec, OptimizerSettings, RobustOcp, RunningCost


class InputError(ValueError):
    """Malformed input file (missing field, wrong type, bad JSON)."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(message)
        self.where = where


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise InputError(f"missing field {key!r} in {where}", f"{where}.{key}")
    return d[key]


def _profile(pairs, where: str) -> TimeProfile:
    if not isinstance(pairs, list) or not all(isinstance(p, (list, tuple)) and len(p) == 2 for p in pairs):
        raise InputError(f"{where} must be a list of [t, value] pairs", where)
    try:
        return TimeProfile.from_pairs([(float(t), float(v)) for t, v in pairs])
    except TypeError as exc:
        raise InputError(f"{where}: {exc}", where) from exc


def network_from_dict(d: dict) -> Network:
    """Build a :class:`Network` from the documented JSON layout.

    Dissipation models are built without the increasing-gradient check so
    that deliberately non-monotone models can be loaded and flagged by
    ``verify``.
    """
    if not isinstance(d, dict):
        raise InputError("network file must hold a JSON object", "")
    nodes, injections, initial = [], {}, {}
    for i, n in enumerate(_req(d, "nodes", "network")):
        nid = str(_req(n, "id", f"nodes[{i}]"))
        nodes.append(nid)
        if n.get("injection") is not None:
            inj = n["injection"]
            where = f"nodes[{nid}].injection"
            nominal = _profile(_req(inj, "nominal", where), where + ".nominal")
            lower = _profile(inj["lower"], where + ".lower") if inj.get("lower") is not None else None
            upper = _profile(inj["upper"], where + ".upper") if inj.get("upper") is not None else None
            injections[nid] = InjectionSpec(nominal, lower, upper)
        if n.get("rho0") is not None:
            initial[nid] = float(n["rho0"])
    edges = []
    for i, e in enumerate(_req(d, "edges", "network")):
        eid = str(_req(e, "id", f"edges[{i}]"))
        model = _req(e, "model", f"edges[{eid}]")
        try:
            m = model_from_dict(model, strict=False)
        except KeyError as exc:
            raise InputError(f"edge {eid!r} model missing parameter {exc}", f"edges[{eid}].model") from exc
        length = _req(e, "length", f"edges[{eid}]")
        if not isinstance(length, (int, float)):
            raise InputError(f"edge {eid!r} length must be a number", f"edges[{eid}].length")
        edges.append(Edge(eid, str(_req(e, "from", f"edges[{eid}]")), str(_req(e, "to", f"edges[{eid}]")),
                          float(length), m))
    actuators = []
    for i, a in enumerate(d.get("actuators", [])):
        edge = str(_req(a, "edge", f"actuators[{i}]"))
        prof = _req(a, "profile", f"actuators[{i}]")
        if isinstance(prof, dict):
            try:
                ratio = policy_from_dict(_req(prof, "feedback", f"actuators[{i}].profile"))
            except KeyError as exc:
                raise InputError(f"feedback policy missing parameter {exc}", f"actuators[{i}].profile") from exc
        else:
            ratio = _profile(prof, f"actuators[{i}].profile")
        actuators.append(Actuator(edge, str(_req(a, "side", f"actuators[{i}]")), ratio))
    horizon = _req(d, "horizon", "network")
    if not isinstance(horizon, (int, float)):
        raise InputError("horizon must be a number", "horizon")
    return Network(tuple(nodes), tuple(edges), tuple(actuators), injections, float(horizon), initial)


def network_to_dict(net: Network) -> dict:
    nodes = []
    for n in net.nodes:
        entry: dict[str, Any] = {"id": n}
        spec = net.injections.get(n)
        if spec is not None:
            inj = {"nominal": spec.nominal.to_pairs()}
            if spec.lower is not None:
                inj["lower"] = spec.lower.to_pairs()
            if spec.upper is not None:
                inj["upper"] = spec.upper.to_pairs()
            entry["injection"] = inj
        if n in net.initial:
            entry["rho0"] = net.initial[n]
        nodes.append(entry)
    edges = [{"id": e.id, "from": e.source, "to": e.target, "length": e.length, "model": e.model.to_dict()}
             for e in net.edges]
    actuators = []
    for a in net.actuators:
        prof = {"feedback": a.ratio.to_dict()} if isinstance(a.ratio, FeedbackPolicy) else a.ratio.to_pairs()
        actuators.append({"edge": a.edge, "side": a.side, "profile": prof})
    return {"nodes": nodes, "edges": edges, "actuators": actuators, "horizon": net.horizon}


def refined_to_dict(rnet: RefinedNetwork) -> dict:
    base = rnet.base
    return {
        "epsilon": rnet.epsilon,
        "nodes": list(rnet.nodes),
        "edges": [{"id": e.id, "from": e.source, "to": e.target, "length": e.length, "parent": e.parent}
                  for e in rnet.edges],
        "parent_map": dict(rnet.parent_map),
        "node_index": {n: i for i, n in enumerate(rnet.nodes)},
        "actuators": [{"edge": rnet.edges[a.edge_index].id, "side": a.side, "node": rnet.nodes[a.node],
                       "parent_edge": base.actuators[a.base_index].edge} for a in rnet.actuators],
    }


def _read_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"file not found: {path}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}", str(path)) from exc


def load_network(path) -> Network:
    return network_from_dict(_read_json(path))


def save_network(net: Network, path) -> None:
    write_json(path, network_to_dict(net))


@dataclass
class OcpConfig:
    """Plain description of an OCP file; :func:`build_ocp` turns it into a
    :class:`RobustOcp` bound to a refined network."""

    network: str
    horizon: float
    intervals: int
    rho_min: Any
    rho_max: Any
    alpha_lo: float
    alpha_hi: float
    objective: dict
    optimizer: dict = field(default_factory=dict)
    epsilon: Optional[float] = None
    initial: Any = None
    initial_low: Any = None
    initial_high: Any = None
    step: Optional[float] = None


def ocp_config_from_dict(d: dict) -> OcpConfig:
    if not isinstance(d, dict):
        raise InputError("OCP file must hold a JSON object", "")
    bounds = _req(d, "bounds", "ocp")
    init = d.get("initial")
    low = high = None
    if isinstance(init, dict) and ("nominal" in init or "low" in init or "high" in init):
        low, high, init = init.get("low"), init.get("high"), init.get("nominal")
    return OcpConfig(
        network=str(_req(d, "network", "ocp")),
        horizon=_req(d, "horizon", "ocp"),
        intervals=_req(d, "intervals", "ocp"),
        rho_min=_req(bounds, "rho_min", "bounds"),
        rho_max=_req(bounds, "rho_max", "bounds"),
        alpha_lo=_req(bounds, "alpha_lo", "bounds"),
        alpha_hi=_req(bounds, "alpha_hi", "bounds"),
        objective=_req(d, "objective", "ocp"),
        optimizer=d.get("optimizer", {}),
        epsilon=d.get("epsilon"),
        initial=init,
        initial_low=low,
        initial_high=high,
        step=d.get("step"),
    )


def ocp_config_to_dict(c: OcpConfig) -> dict:
    d = {
        "network": c.network,
        "horizon": c.horizon,
        "intervals": c.intervals,
        "bounds": {"rho_min": c.rho_min, "rho_max": c.rho_max, "alpha_lo": c.alpha_lo, "alpha_hi": c.alpha_hi},
        "objective": c.objective,
        "optimizer": c.optimizer,
    }
    if c.epsilon is not None:
        d["epsilon"] = c.epsilon
    if c.step is not None:
        d["step"] = c.step
    if c.initial_low is not None or c.initial_high is not None:
        d["initial"] = {"nominal": c.initial, "low": c.initial_low, "high": c.initial_high}
    elif c.initial is not None:
        d["initial"] = c.initial
    return d


_OBJECTIVE_ALIASES = {
    "ActuationPower": "actuation_power",
    "DensityTracking": "density_tracking",
    "WeightedSum": "weighted_sum",
    "DensityLevel": "density_level",
}


def objective_from_dict(d: dict) -> ObjectiveSpec:
    kind = _OBJECTIVE_ALIASES.get(_req(d, "type", "objective"), d["type"])
    p = d.get("params", {})
    if kind == "actuation_power":
        cost = RunningCost(actuation_weight=float(p.get("weight", 1.0)))
    elif kind == "density_tracking":
        cost = RunningCost(tracking_weight=float(p.get("weight", 1.0)), rho_ref=float(_req(p, "rho_ref", "objective.params")))
    elif kind == "weighted_sum":
        cost = RunningCost(actuation_weight=float(p.get("actuation_weight", 1.0)),
                           tracking_weight=float(p.get("tracking_weight", 1.0)),
                           rho_ref=float(p.get("rho_ref", 0.0)))
    elif kind == "density_level":
        cost = RunningCost(level_weight=float(p.get("weight", 1.0)))
    else:
        raise InputError(f"unknown objective type {kind!r}", "objective.type")
    variant = d.get("variant", "nominal")
    variant = {"NominalCost": "nominal", "MinMax": "minmax"}.get(variant, variant)
    return ObjectiveSpec(cost, variant, d.get("monotone_sign"))


def optimizer_from_dict(d: dict) -> OptimizerSettings:
    known = OptimizerSettings.__dataclass_fields__
    unknown = set(d) - set(known)
    if unknown:
        raise InputError(f"unknown optimizer settings {sorted(unknown)}", "optimizer")
    kw = {k: (int(v) if k in ("max_iters", "penalty_rounds") else float(v)) for k, v in d.items()}
    return OptimizerSettings(**kw)


def build_ocp(c: OcpConfig, base_dir=".") -> tuple[RobustOcp, OptimizerSettings]:
    net = load_network(Path(base_dir) / c.network)
    eps = c.epsilon if c.epsilon is not None else max(e.length for e in net.edges)
    rnet = refine_network(net, float(eps))
    default = rnet.initial_state(1.0)
    init = default if c.initial is None else c.initial
    ocp = RobustOcp(rnet, float(c.horizon), int(c.intervals), c.rho_min, c.rho_max,
                    float(c.alpha_lo), float(c.alpha_hi), objective_from_dict(c.objective),
                    init, c.initial_low, c.initial_high, c.step)
    return ocp, optimizer_from_dict(c.optimizer)


def load_ocp(path) -> tuple[RobustOcp, OptimizerSettings, OcpConfig]:
    cfg = ocp_config_from_dict(_read_json(path))
    ocp, settings = build_ocp(cfg, Path(path).parent)
    return ocp, settings, cfg


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, shortest round-trip floats, non-finite as null."""
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_dict(obj) -> dict:
    return _clean(asdict(obj))
