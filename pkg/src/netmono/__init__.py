"""Monotone flow networks: refinement, nodal simulation, monotonicity
checks and robust actuator scheduling."""

__version__ = "0.1.0"

from .dissipation import DissipationError, GasWeymouth, LinearDissipation, eval_dissipation
from .monotonicity import (
    StateSampling,
    check_feedback_policy,
    check_monotone_conditions,
    jacobians,
    verify_order_propagation,
    verify_sandwich,
)
from .network import Actuator, Edge, InjectionSpec, Network, NetworkError, RefinedNetwork, refine_network
from .policies import ConstantPolicy, PowerLawPolicy, TabulatedPolicy
from .profiles import PiecewiseConstant, TimeProfile
from .robust import (
    ObjectiveSpec,
    OcpError,
    OptimizerSettings,
    RobustOcp,
    RunningCost,
    evaluate_robust,
    solve_robust,
)
from .simulator import SimulationError, Trajectory, nodal_rhs, simulate, suggest_step

__all__ = [
    "Actuator", "ConstantPolicy", "DissipationError", "Edge", "GasWeymouth", "InjectionSpec",
    "LinearDissipation", "Network", "NetworkError", "ObjectiveSpec", "OcpError", "OptimizerSettings",
    "PiecewiseConstant", "PowerLawPolicy", "RefinedNetwork", "RobustOcp", "RunningCost",
    "SimulationError", "StateSampling", "TabulatedPolicy", "TimeProfile", "Trajectory",
    "check_feedback_policy", "check_monotone_conditions", "eval_dissipation", "evaluate_robust",
    "jacobians", "nodal_rhs", "refine_network", "simulate", "solve_robust", "suggest_step",
    "verify_order_propagation", "verify_sandwich",
]
