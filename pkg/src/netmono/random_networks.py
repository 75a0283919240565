"""Random networks, profiles and envelopes for Monte-Carlo checks."""

from __future__ import annotations

import numpy as np

from .dissipation import GasWeymouth, LinearDissipation
from .network import Actuator, Edge, InjectionSpec, Network
from .profiles import BlendedProfile, TimeProfile


def random_profile(rng: np.random.Generator, horizon: float, lo: float, hi: float, n_breaks: int = 4) -> TimeProfile:
    times = np.sort(rng.uniform(0.0, horizon, n_breaks))
    times[0] = 0.0
    times = np.unique(times)
    return TimeProfile(tuple(times), tuple(rng.uniform(lo, hi, len(times))))


def random_model(rng: np.random.Generator, kind: str):
    if kind == "mixed":
        kind = "linear" if rng.random() < 0.5 else "gas"
    if kind == "linear":
        return LinearDissipation(float(rng.uniform(0.2, 2.0)))
    return GasWeymouth(float(rng.uniform(0.2, 2.0)), delta=float(rng.uniform(1e-3, 1e-1)))


def random_network(
    rng: np.random.Generator,
    n_nodes: int,
    model: str = "linear",
    horizon: float = 1.0,
    extra_edges: int = 2,
    actuator_prob: float = 0.3,
    injection_prob: float = 0.5,
    ratio_range=(0.8, 1.5),
    injection_scale: float = 0.2,
) -> Network:
    """Random connected network: a random tree plus a few chords, with
    random actuator ramps and injection envelopes ``lower <= nominal <= upper``."""
    nodes = tuple(f"n{i}" for i in range(n_nodes))
    pairs = [(int(rng.integers(0, i)), i) for i in range(1, n_nodes)]
    for _ in range(extra_edges if n_nodes > 2 else 0):
        i, j = rng.choice(n_nodes, size=2, replace=False)
        pairs.append((int(i), int(j)))
    edges = []
    for k, (i, j) in enumerate(pairs):
        if rng.random() < 0.5:
            i, j = j, i
        edges.append(Edge(f"e{k}", nodes[i], nodes[j], float(rng.uniform(0.5, 2.0)), random_model(rng, model)))
    actuators = []
    for e in edges:
        for side in "+-":
            if rng.random() < actuator_prob:
                actuators.append(Actuator(e.id, side, random_profile(rng, horizon, *ratio_range)))
    injections = {}
    for n in nodes:
        if rng.random() < injection_prob:
            nominal = random_profile(rng, horizon, -injection_scale, injection_scale)
            lower = TimeProfile(nominal.times, tuple(v - rng.uniform(0, injection_scale) for v in nominal.values))
            upper = TimeProfile(nominal.times, tuple(v + rng.uniform(0, injection_scale) for v in nominal.values))
            injections[n] = InjectionSpec(nominal, lower, upper)
    return Network(nodes, tuple(edges), tuple(actuators), injections, horizon)


def interior_profiles(rng: np.random.Generator, net: Network, n_breaks: int = 5) -> dict:
    """One random injection profile inside every node's envelope."""
    out = {}
    for node, spec in net.injections.items():
        theta = random_profile(rng, net.horizon, 0.0, 1.0, n_breaks)
        out[node] = BlendedProfile(spec.low, spec.high, theta)
    return out
