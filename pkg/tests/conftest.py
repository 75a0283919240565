import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from netmono.dissipation import GasWeymouth, LinearDissipation
from netmono.network import Actuator, Edge, InjectionSpec, Network
from netmono.profiles import TimeProfile

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_node(beta=1.0, length=1.0, q1=0.0, q2=0.0, model=None, actuators=(), horizon=1.0):
    """Nodes a -> b joined by one edge of the given length."""
    model = model or LinearDissipation(beta)
    inj = {}
    if q1:
        inj["a"] = InjectionSpec(TimeProfile.constant(q1))
    if q2:
        inj["b"] = InjectionSpec(TimeProfile.constant(q2))
    return Network(("a", "b"), (Edge("e", "a", "b", length, model),), tuple(actuators), inj, horizon)


def three_node(model=None, horizon=2.0):
    """Path a -> b -> c with a compressor at the head of the first edge."""
    model = model or LinearDissipation(1.0)
    edges = (Edge("e1", "a", "b", 1.0, model), Edge("e2", "b", "c", 1.5, model))
    inj = {
        "a": InjectionSpec(TimeProfile((0.0, 1.0), (0.3, 0.5))),
        "c": InjectionSpec(TimeProfile.constant(-0.2)),
    }
    acts = (Actuator("e1", "-", TimeProfile.constant(1.2)),)
    return Network(("a", "b", "c"), edges, acts, inj, horizon)


def single_pipe():
    """Compression scenario: supply s, uncertain demand d, compressor at s."""
    inj = {
        "s": InjectionSpec(TimeProfile.constant(0.2)),
        "d": InjectionSpec(TimeProfile.constant(-0.2), TimeProfile.constant(-0.3), TimeProfile.constant(-0.1)),
    }
    return Network(("s", "d"), (Edge("p", "s", "d", 1.0, LinearDissipation(1.0)),),
                   (Actuator("p", "+", TimeProfile.constant(1.0)),), inj, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["linear", "gas"])
def model(request):
    return LinearDissipation(0.8) if request.param == "linear" else GasWeymouth(1.3, delta=1e-3)


def fd_jacobian(rhs, rho, rel=1e-6):
    """Central differences of ``rhs`` with steps scaled to each component."""
    rho = np.asarray(rho, dtype=float)
    J = np.empty((len(rho), len(rho)))
    for i in range(len(rho)):
        h = rel * max(abs(rho[i]), 1.0)
        up, dn = rho.copy(), rho.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (rhs(up) - rhs(dn)) / (2 * h)
    return J


def rel_error(A, B):
    return float(np.max(np.abs(A - B)) / max(np.max(np.abs(B)), 1e-300))
