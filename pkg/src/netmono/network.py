"""Actuated flow networks and their spatial refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Union

import networkx as nx
import numpy as np

from .dissipation import DissipationModel
from .policies import FeedbackPolicy
from .profiles import PiecewiseConstant, TimeProfile

RatioSource = Union[TimeProfile, PiecewiseConstant, FeedbackPolicy]


class NetworkError(ValueError):
    """Constraint violation in a network description; ``where`` names the
    offending field or object id."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(message)
        self.where = where


@dataclass(frozen=True)
class InjectionSpec:
    nominal: TimeProfile
    lower: Optional[TimeProfile] = None
    upper: Optional[TimeProfile] = None

    @property
    def low(self) -> TimeProfile:
        return self.lower if self.lower is not None else self.nominal

    @property
    def high(self) -> TimeProfile:
        return self.upper if self.upper is not None else self.nominal

    def check_ordering(self, horizon: float, tol: float = 1e-12) -> bool:
        """lower <= nominal <= upper at every breakpoint of any of the three
        profiles, plus the horizon endpoints (piecewise-linear, so sufficient)."""
        ts = {0.0, float(horizon)}
        for p in (self.nominal, self.lower, self.upper):
            if p is not None:
                ts.update(p.times)
        ts = np.array(sorted(ts))
        lo, nom, hi = self.low(ts), self.nominal(ts), self.high(ts)
        return bool(np.all(lo <= nom + tol) and np.all(nom <= hi + tol))


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str
    length: float
    model: DissipationModel


@dataclass(frozen=True)
class Actuator:
    """Compression ratio at one end of an edge. ``side='+'`` acts at the
    edge's source node, ``'-'`` at its target node."""

    edge: str
    side: str
    ratio: RatioSource

    @property
    def is_feedback(self) -> bool:
        return isinstance(self.ratio, FeedbackPolicy)


@dataclass(frozen=True, eq=False)
class Network:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    actuators: tuple[Actuator, ...] = ()
    injections: Mapping[str, InjectionSpec] = field(default_factory=dict)
    horizon: float = 1.0
    initial: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "actuators", tuple(self.actuators))
        object.__setattr__(self, "injections", MappingProxyType(dict(self.injections)))
        object.__setattr__(self, "initial", MappingProxyType(dict(self.initial)))
        self._validate()

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.actuators == other.actuators
            and dict(self.injections) == dict(other.injections)
            and self.horizon == other.horizon
            and dict(self.initial) == dict(other.initial)
        )

    def _validate(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise NetworkError("duplicate node id", "nodes")
        if not self.edges:
            raise NetworkError("network needs at least one edge", "edges")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise NetworkError("horizon must be positive", "horizon")
        known = set(self.nodes)
        seen = set()
        for e in self.edges:
            if e.id in seen:
                raise NetworkError(f"duplicate edge id {e.id!r}", e.id)
            seen.add(e.id)
            if e.source not in known or e.target not in known:
                raise NetworkError(f"edge {e.id!r} references an unknown node", e.id)
            if e.source == e.target:
                raise NetworkError(f"edge {e.id!r} is a self-loop", e.id)
            if not (math.isfinite(e.length) and e.length > 0):
                raise NetworkError(f"edge {e.id!r} length must be positive, got {e.length}", e.id)
        g = nx.MultiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((e.source, e.target) for e in self.edges)
        if not nx.is_connected(g):
            raise NetworkError("network graph is not connected", "edges")
        placed = set()
        for a in self.actuators:
            if a.edge not in seen:
                raise NetworkError(f"actuator references unknown edge {a.edge!r}", a.edge)
            if a.side not in ("+", "-"):
                raise NetworkError(f"actuator side must be '+' or '-', got {a.side!r}", a.edge)
            if (a.edge, a.side) in placed:
                raise NetworkError(f"two actuators on edge {a.edge!r} side {a.side}", a.edge)
            placed.add((a.edge, a.side))
            if not a.is_feedback and not a.ratio.minimum() > 0:
                raise NetworkError(f"actuator ratio on edge {a.edge!r} must be positive", a.edge)
        for node, spec in self.injections.items():
            if node not in known:
                raise NetworkError(f"injection for unknown node {node!r}", node)
            if not spec.check_ordering(self.horizon):
                raise NetworkError(f"injection bounds at node {node!r} violate lower <= nominal <= upper", node)
        for node, value in self.initial.items():
            if node not in known:
                raise NetworkError(f"initial density for unknown node {node!r}", node)
            if not value > 0:
                raise NetworkError(f"initial density at node {node!r} must be positive", node)

    def edge(self, edge_id: str) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    @property
    def total_length(self) -> float:
        return math.fsum(e.length for e in self.edges)


@dataclass(frozen=True)
class RefinedEdge:
    id: str
    source: str
    target: str
    length: float
    parent: str


@dataclass(frozen=True)
class RefinedActuator:
    """An actuator re-attached to the end segment of its parent edge.
    ``node`` is the refined-node index where it acts."""

    edge_index: int
    side: str
    node: int
    ratio: RatioSource
    base_index: int

    @property
    def is_feedback(self) -> bool:
        return isinstance(self.ratio, FeedbackPolicy)


class RefinedNetwork:
    """Subdivision of a :class:`Network` so every segment is shorter than
    ``epsilon``. Immutable after construction.

    Node numbering: base nodes first in base order, then interior nodes
    ``"<edge>#<k>"`` per parent edge in edge order. Segments are
    ``"<edge>/<k>"`` for ``k = 0..n-1`` oriented like the parent.
    """

    def __init__(self, base: Network, epsilon: float, nodes, edges, actuators):
        self.base = base
        self.epsilon = float(epsilon)
        self.nodes: tuple[str, ...] = tuple(nodes)
        self.edges: tuple[RefinedEdge, ...] = tuple(edges)
        self.actuators: tuple[RefinedActuator, ...] = tuple(actuators)
        self.index = MappingProxyType({n: i for i, n in enumerate(self.nodes)})
        self.parent_map = MappingProxyType({e.id: e.parent for e in self.edges})
        self.source = np.array([self.index[e.source] for e in self.edges], dtype=int)
        self.target = np.array([self.index[e.target] for e in self.edges], dtype=int)
        self.length = np.array([e.length for e in self.edges])
        self.is_base_node = np.array([i < len(base.nodes) for i in range(len(self.nodes))])
        for arr in (self.source, self.target, self.length, self.is_base_node):
            arr.flags.writeable = False
        models = {e.id: e.model for e in base.edges}
        self.edge_models = tuple(models[e.parent] for e in self.edges)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def base_node_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_base_node)

    def check_bounds(self) -> list[str]:
        """Refined edges whose length violates the subdivision bound
        ``eps L / (eps + L) <= L_hat < eps`` (lower bound non-strict)."""
        eps = self.epsilon
        bad = []
        parent_len = {e.id: e.length for e in self.base.edges}
        for e in self.edges:
            lp = parent_len[e.parent]
            lower = eps * lp / (eps + lp)
            if not (lower * (1 - 1e-9) <= e.length < eps):
                bad.append(e.id)
        return bad

    def initial_state(self, default: float = 1.0) -> np.ndarray:
        """Nodal densities from the base network's ``initial`` map (missing
        nodes get ``default``), linearly interpolated along each parent edge."""
        base_vals = {n: self.base.initial.get(n, default) for n in self.base.nodes}
        rho = np.empty(self.n_nodes)
        for n, v in base_vals.items():
            rho[self.index[n]] = v
        for e in self.base.edges:
            n = self.segment_count(e.id)
            a, b = base_vals[e.source], base_vals[e.target]
            for k in range(1, n):
                rho[self.index[f"{e.id}#{k}"]] = a + (b - a) * k / n
        return rho

    def segment_count(self, edge_id: str) -> int:
        return self._segments[edge_id]


def segment_count(length: float, epsilon: float) -> int:
    """Equal-segment count ``floor(L/eps) + 1``.

    Then ``L/n < eps`` and ``L/n >= eps L / (eps + L)``, with equality only
    when ``L/eps`` is an integer; in that case no subdivision can satisfy the
    strict lower bound, so the lower bound is treated as non-strict.
    """
    n = math.floor(length / epsilon) + 1
    while length / n >= epsilon:  # guards round-off in the floor
        n += 1
    return n


def refine_network(net: Network, epsilon: float) -> RefinedNetwork:
    """Split each edge of ``net`` into equal segments shorter than ``epsilon``."""
    if not (isinstance(epsilon, (int, float)) and math.isfinite(epsilon) and epsilon > 0):
        raise NetworkError("epsilon must be positive", "epsilon")
    nodes = list(net.nodes)
    edges = []
    segments = {}
    first_last = {}
    for e in net.edges:
        n = segment_count(e.length, epsilon)
        segments[e.id] = n
        seg_len = e.length / n
        chain = [e.source] + [f"{e.id}#{k}" for k in range(1, n)] + [e.target]
        nodes.extend(chain[1:-1])
        start = len(edges)
        for k in range(n):
            # last segment absorbs round-off so lengths sum to the parent length
            length = seg_len if k < n - 1 else e.length - seg_len * (n - 1)
            edges.append(RefinedEdge(f"{e.id}/{k}", chain[k], chain[k + 1], length, e.id))
        first_last[e.id] = (start, len(edges) - 1)
    index = {n: i for i, n in enumerate(nodes)}
    actuators = []
    for bi, a in enumerate(net.actuators):
        first, last = first_last[a.edge]
        if a.side == "+":
            ei, node = first, index[edges[first].source]
        else:
            ei, node = last, index[edges[last].target]
        actuators.append(RefinedActuator(ei, a.side, node, a.ratio, bi))
    rnet = RefinedNetwork(net, epsilon, nodes, edges, actuators)
    rnet._segments = MappingProxyType(segments)
    return rnet
