"""``netmono`` command line: refine, simulate, verify, optimize.

Exit codes: 0 ok, 2 invalid input file, 3 constraint violation,
4 simulation abort, 5 verification failure, 6 no feasible schedule.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dissipation import DissipationError
from .io import (
    InputError,
    config_dict,
    file_digest,
    load_network,
    load_ocp,
    ocp_config_to_dict,
    refined_to_dict,
    write_json,
)
from .monotonicity import StateSampling, check_feedback_policy, check_monotone_conditions, verify_order_propagation
from .network import NetworkError, refine_network
from .policies import FeedbackPolicy
from .profiles import TimeProfile
from .robust import OcpError, evaluate_robust, solve_robust
from .simulator import InjectionField, SimulationError, simulate, suggest_step

EXIT_OK, EXIT_INPUT, EXIT_CONSTRAINT, EXIT_ABORT, EXIT_VERIFY, EXIT_INFEASIBLE = 0, 2, 3, 4, 5, 6
DEFAULT_SEED = 20240601

log = logging.getLogger("netmono")


def _write_manifest(out: Path, command: str, inputs: list, settings: dict, seed, outputs: list) -> None:
    write_json(out / "manifest.json", {
        "command": command,
        "inputs": [{"path": str(p), "sha256": file_digest(p)} for p in inputs],
        "settings": settings,
        "seed": seed,
        "tool": "netmono",
        "version": __version__,
        "outputs": sorted(outputs),
    })


def _refine(args):
    net = load_network(args.network)
    rnet = refine_network(net, args.epsilon)
    write_json(args.out / "refined.json", refined_to_dict(rnet))
    _write_manifest(args.out, "refine", [args.network], {"epsilon": args.epsilon}, args.seed, ["refined.json"])
    log.info("refined %d base nodes into %d nodes", len(net.nodes), rnet.n_nodes)
    return EXIT_OK


def _simulate(args):
    net = load_network(args.network)
    rnet = refine_network(net, args.epsilon)
    t_end = net.horizon if args.t_end is None else args.t_end
    rho0 = rnet.initial_state(args.rho0)
    missing = [n for n in net.nodes if n not in net.injections]
    report = {
        "epsilon": args.epsilon,
        "t_end": t_end,
        "notes": [f"no injection profile for node {n!r}; treated as zero" for n in missing],
    }
    settings = {"epsilon": args.epsilon, "t_end": t_end, "step": args.step, "rho0": args.rho0}
    outputs = ["report.json"]
    code = EXIT_OK
    try:
        traj = simulate(rnet, rho0, (0.0, t_end), step=args.step, injections="nominal")
    except SimulationError as exc:
        report.update(status="aborted", message=str(exc), time=exc.time, node=exc.node)
        code = EXIT_ABORT
        log.error("simulation aborted: %s", exc)
    else:
        traj.write_csv(args.out / "trajectory.csv")
        outputs.append("trajectory.csv")
        report.update(status="ok", **traj.metadata)
        settings["step"] = traj.metadata["step"]
    write_json(args.out / "report.json", report)
    _write_manifest(args.out, "simulate", [args.network], settings, args.seed, outputs)
    return code


def _span(values):
    return float(min(values)), float(max(values))


def _verify(args):
    net = load_network(args.network)
    rnet = refine_network(net, args.epsilon)
    rng = np.random.default_rng(args.seed)
    rho0 = rnet.initial_state(args.rho0)
    open_loop = [a.ratio for a in net.actuators if not isinstance(a.ratio, FeedbackPolicy)]
    ratio_range = _span([v for p in open_loop for v in p.values]) if open_loop else (1.0, 1.0)
    slopes = [abs(s) for p in open_loop for s in p._slopes_list]
    rate = max(slopes, default=0.0)
    rho_range = (0.5 * float(rho0.min()), 1.5 * float(rho0.max()))
    sampling = StateSampling(args.samples, rho_range, (0.0, net.horizon), ratio_range, (-rate, rate),
                             int(rng.integers(2**31)))
    kamke = check_monotone_conditions(rnet, sampling)
    if any(a.is_feedback for a in rnet.actuators):
        kamke.notes.append("feedback actuators sampled as open-loop ratios; policies checked separately")

    feedback = []
    for a in net.actuators:
        if isinstance(a.ratio, FeedbackPolicy):
            ok, margin = check_feedback_policy(a.ratio, rho_range, 201)
            feedback.append({"actuator": f"{a.edge}{a.side}", "passed": ok, "margin": margin,
                             "density_domain": list(rho_range)})

    trials, failures = [], 0
    for i in range(args.trials):
        q_lo = {}
        q_hi = {}
        for n in net.nodes:
            spec = net.injections.get(n)
            base = spec.low if spec is not None else TimeProfile.constant(0.0)
            times = np.unique(np.concatenate([[0.0], np.sort(rng.uniform(0, net.horizon, 3))]))
            bump = rng.uniform(0.0, args.bump, len(times))
            q_lo[n] = base
            q_hi[n] = _Sum(base, TimeProfile(tuple(times), tuple(bump)))
        shift = rng.uniform(0.0, 0.1, rnet.n_nodes) * rho0
        try:
            step = min(suggest_step(rnet, x, (0, net.horizon), gradient_bound=True) for x in (rho0, rho0 + shift))
            res = verify_order_propagation(rnet, rho0, rho0 + shift, InjectionField.from_mapping(rnet, q_lo),
                                           InjectionField.from_mapping(rnet, q_hi), step=step,
                                           t_end=min(net.horizon, 100 * step), scenario=f"trial-{i}")
            entry = res.to_dict()
        except SimulationError as exc:
            entry = {"scenario": f"trial-{i}", "holds": False, "margin": None,
                     "first_violation": {"abort": str(exc), "time": exc.time, "node": exc.node}}
        failures += not entry["holds"]
        trials.append(entry)
    order = {
        "passed": failures == 0,
        "trials": len(trials),
        "failures": failures,
        "worst_margin": min((t["margin"] for t in trials if t["margin"] is not None), default=None),
        "results": [t for t in trials if not t["holds"]],
    }
    passed = kamke.passed and all(f["passed"] for f in feedback) and order["passed"]
    report = {
        "passed": passed,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "kamke": kamke.to_dict(),
        "feedback_policies": feedback,
        "order_propagation": order,
    }
    write_json(args.out / "report.json", report)
    settings = {"epsilon": args.epsilon, "samples": args.samples, "trials": args.trials, "bump": args.bump,
                "rho0": args.rho0}
    _write_manifest(args.out, "verify", [args.network], settings, args.seed, ["report.json"])
    if not passed:
        w = kamke.worst_metzler
        log.error("verification failed (worst off-diagonal %.3g at %s,%s)", w.get("value"), w.get("row"), w.get("col"))
    return EXIT_OK if passed else EXIT_VERIFY


class _Sum:
    def __init__(self, a, b):
        self.a, self.b = a, b

    def __call__(self, t):
        return self.a(t) + self.b(t)


def _optimize(args):
    ocp, settings, cfg = load_ocp(args.ocp)
    sched = solve_robust(ocp, settings)
    outputs = ["schedule.json", "report.json"]
    write_json(args.out / "schedule.json", sched.to_dict())
    try:
        ev = evaluate_robust(ocp, sched)
    except SimulationError:
        ev = None
    else:
        for name, traj in ev.trajectories.items():
            traj.write_csv(args.out / f"{name}.csv")
            outputs.append(f"{name}.csv")
    notes = ["single-interval injection envelopes only"]
    if cfg.initial_low is None and cfg.initial_high is None:
        notes.append("envelope trajectories start from the nominal initial state")
    report = {
        "status": sched.status,
        "feasible": bool(sched.feasible),
        "objective": sched.objective,
        "margins": sched.margins,
        "violations": sched.violations,
        "iterations": sched.iterations,
        "step": ocp.step,
        "epsilon": ocp.rnet.epsilon,
        "notes": notes,
    }
    write_json(args.out / "report.json", report)
    net_path = Path(args.ocp).parent / cfg.network
    resolved = ocp_config_to_dict(cfg)
    resolved["optimizer"] = config_dict(settings)
    resolved["step"] = ocp.step
    _write_manifest(args.out, "optimize", [args.ocp, net_path], resolved, args.seed, outputs)
    if ev is None:
        log.error("simulation aborted for every schedule tried: %s", sched.violations[0]["message"])
        return EXIT_ABORT
    if not sched.feasible:
        log.error("no feasible schedule found; best attempt written")
        return EXIT_INFEASIBLE
    log.info("objective %.6g, envelope margin %.3g", sched.objective, sched.margins["envelope_min"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for all randomness")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = argparse.ArgumentParser(prog="netmono", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"netmono {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("refine", parents=[common], help="subdivide edges into short segments")
    r.add_argument("network", type=Path)
    r.add_argument("--epsilon", type=float, required=True)
    r.set_defaults(func=_refine)

    s = sub.add_parser("simulate", parents=[common], help="integrate the nodal dynamics")
    s.add_argument("network", type=Path)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--t-end", type=float, default=None, help="defaults to the network horizon")
    s.add_argument("--step", type=float, default=None, help="defaults to an order-preserving step")
    s.add_argument("--rho0", type=float, default=1.0, help="density for nodes without rho0")
    s.set_defaults(func=_simulate)

    v = sub.add_parser("verify", parents=[common], help="check monotonicity conditions")
    v.add_argument("network", type=Path)
    v.add_argument("--epsilon", type=float, required=True)
    v.add_argument("--samples", type=int, default=50, help="Jacobian samples")
    v.add_argument("--trials", type=int, default=20, help="order-propagation trials")
    v.add_argument("--bump", type=float, default=0.2, help="largest extra injection in a trial")
    v.add_argument("--rho0", type=float, default=1.0)
    v.set_defaults(func=_verify)

    o = sub.add_parser("optimize", parents=[common], help="solve a robust control problem")
    o.add_argument("ocp", type=Path)
    o.set_defaults(func=_optimize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s: %(message)s",
                        force=True)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except InputError as exc:
        log.error("invalid input (%s): %s", exc.where, exc)
        return EXIT_INPUT
    except (NetworkError, OcpError) as exc:
        log.error("constraint violation (%s): %s", exc.where, exc)
        return EXIT_CONSTRAINT
    except (DissipationError, ValueError) as exc:
        log.error("constraint violation: %s", exc)
        return EXIT_CONSTRAINT
    except SimulationError as exc:
        log.error("simulation aborted: %s", exc)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
