"""Acceptance criteria 1-8, each checked at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line. Run standalone with
``python tests/test_acceptance.py`` or through pytest.
"""

import shutil
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from netmono.cli import main as cli_main
from netmono.dissipation import LinearDissipation
from netmono.monotonicity import (
    StateSampling,
    check_feedback_policy,
    check_monotone_conditions,
    jacobians,
    verify_order_propagation,
    verify_sandwich,
)
from netmono.network import Actuator, Network, refine_network
from netmono.policies import PowerLawPolicy
from netmono.profiles import TimeProfile
from netmono.random_networks import interior_profiles, random_network, random_profile
from netmono.robust import ObjectiveSpec, RobustOcp, RunningCost, evaluate_robust, solve_robust
from netmono.simulator import NodalDynamics, nodal_rhs, simulate, suggest_step

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import fd_jacobian, rel_error, single_pipe, three_node, two_node  # noqa: E402

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def verdict(request):
    """Print one PASS/FAIL line for the criterion, then enforce it."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)
        assert ok, line

    return emit


def _sampled_networks(kind, n, seed):
    rng = np.random.default_rng(seed)
    for i in range(n):
        net = random_network(rng, int(rng.integers(2, 11)), kind)
        rnet = refine_network(net, float(rng.uniform(0.3, 1.0)))
        yield rnet, StateSampling(1, seed=seed * 1000 + i)


def test_criterion_1_jacobian_oracle(verdict):
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for kind in ("linear", "gas"):
        for rnet, sampling in _sampled_networks(kind, 50, 1 if kind == "linear" else 2):
            (t, rho, ctl), = sampling.draw(rnet)
            J = jacobians(rnet, rho, t, ctl).state_jacobian
            Jfd = fd_jacobian(lambda x: nodal_rhs(rnet, x, t, ctl), rho)
            worst = max(worst, rel_error(J, Jfd))
            count += 1
    elapsed = time.perf_counter() - t0
    verdict(1, worst < 1e-5 and elapsed < 10,
            f"{count} samples, worst relative error {worst:.2e} (< 1e-5), {elapsed:.1f} s (< 10 s)")


def test_criterion_2_kamke_conditions(verdict):
    tol = 1e-12
    min_off, min_q, sparse = np.inf, np.inf, True
    count = 0
    for kind in ("linear", "gas"):
        for rnet, sampling in _sampled_networks(kind, 50, 1 if kind == "linear" else 2):
            res = check_monotone_conditions(rnet, sampling, tol)
            min_off = min(min_off, res.min_offdiagonal)
            min_q = min(min_q, res.min_injection_entry)
            sparse &= res.sparsity_ok
            count += 1
    planted = refine_network(three_node(model=LinearDissipation(-1.0, strict=False)), 0.5)
    bad = check_monotone_conditions(planted, StateSampling(10, seed=0), tol)
    ok = min_off >= -tol and min_q >= -tol and sparse and not bad.metzler_ok
    verdict(2, ok, f"{count} samples, min adjacent off-diagonal {min_off:.3g}, min injection entry {min_q:.3g}, "
                   f"non-adjacent zeros {sparse}, negative-beta flagged {not bad.metzler_ok} "
                   f"at ({bad.worst_metzler['row']}, {bad.worst_metzler['col']})")


class _Shifted:
    def __init__(self, base, bump):
        self.base, self.bump = base, bump

    def __call__(self, t):
        return self.base(t) + self.bump(t)


def _order_trial(rng):
    net = random_network(rng, int(rng.integers(2, 21)), "mixed", injection_prob=0.6)
    rnet = refine_network(net, float(rng.uniform(0.4, 1.0)))
    rho_lo = rng.uniform(0.8, 1.5, rnet.n_nodes)
    rho_hi = rho_lo + rng.uniform(0.0, 0.05, rnet.n_nodes) * (rng.random(rnet.n_nodes) < 0.5)
    q_lo, q_hi = {}, {}
    for n in net.nodes:
        spec = net.injections.get(n)
        base = spec.low if spec is not None else TimeProfile.constant(0.0)
        q_lo[n] = base
        q_hi[n] = _Shifted(base, random_profile(rng, net.horizon, 0.0, 0.3)) if rng.random() < 0.5 else base
    step = min(suggest_step(rnet, x, (0, net.horizon), gradient_bound=True) for x in (rho_lo, rho_hi))
    return net, rnet, rho_lo, rho_hi, q_lo, q_hi, step


def test_criterion_3_order_propagation(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    violations, worst = 0, np.inf
    for _ in range(100):
        net, rnet, rho_lo, rho_hi, q_lo, q_hi, step = _order_trial(rng)
        res = verify_order_propagation(rnet, rho_lo, rho_hi, q_lo, q_hi, step=step,
                                       t_end=min(net.horizon, 100 * step), tol=1e-9)
        violations += not res.holds
        worst = min(worst, res.margin)
    sandwich_bad = sandwich_count = 0
    for _ in range(10):
        net = random_network(rng, int(rng.integers(2, 21)), "mixed", injection_prob=1.0)
        rnet = refine_network(net, float(rng.uniform(0.4, 1.0)))
        rho0 = rng.uniform(0.8, 1.5, rnet.n_nodes)
        step = suggest_step(rnet, rho0, (0, net.horizon), gradient_bound=True)
        interior = [interior_profiles(rng, net) for _ in range(20)]
        results = verify_sandwich(rnet, rho0, "lower", "upper", interior, step=step,
                                  t_end=min(net.horizon, 100 * step), tol=1e-9)
        sandwich_bad += sum(not r.holds for r in results)
        sandwich_count += len(results)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and sandwich_bad == 0 and elapsed < 60
    verdict(3, ok, f"100 trials, {violations} violations (worst margin {worst:.3g}); "
                   f"{sandwich_count} sandwich checks, {sandwich_bad} violations; {elapsed:.1f} s (< 60 s)")


def test_criterion_4_feedback_policies(verdict):
    rng = np.random.default_rng(44)
    domain = (0.05, 50.0)
    aborts = check_failures = 0
    for _ in range(20):
        base = random_network(rng, int(rng.integers(2, 8)), "mixed", actuator_prob=0.0)
        acts = []
        for e in base.edges:
            for side in "+-":
                if rng.random() < 0.4:
                    acts.append(Actuator(e.id, side, PowerLawPolicy(float(rng.uniform(0.5, 2.0)),
                                                                    float(rng.uniform(-0.95, 1.5)))))
        net = Network(base.nodes, base.edges, tuple(acts), base.injections, base.horizon)
        check_failures += sum(not check_feedback_policy(a.ratio, domain, 201)[0] for a in acts)
        rnet = refine_network(net, 0.5)
        rho0 = rng.uniform(0.8, 1.5, rnet.n_nodes)
        step = suggest_step(rnet, rho0, (0, net.horizon), gradient_bound=True)
        try:
            simulate(rnet, rho0, (0.0, min(net.horizon, 200 * step)), step=step)
        except Exception:
            aborts += 1
    ok_inv, margin_inv = check_feedback_policy(PowerLawPolicy(1.0, -1.0), domain, 201)
    ok = aborts == 0 and check_failures == 0 and not ok_inv and margin_inv <= 0
    verdict(4, ok, f"20 closed-loop runs, {aborts} aborts, {check_failures} policy-check failures; "
                   f"a=-1 margin {margin_inv:.3g} rejected={not ok_inv}")


def test_criterion_5_discretisation_fidelity(verdict):
    beta, L, Q = 1.0, 1.0, 0.3
    rnet = refine_network(two_node(beta=beta, length=L, q1=Q, q2=-Q), 2.0)
    final = simulate(rnet, [1.0, 1.0], (0.0, 20.0), step=0.02).final
    residual = abs(beta * (final[0] - final[1]) / L - Q)

    r3 = refine_network(three_node(), 0.25)
    rho0 = np.linspace(1.0, 2.0, r3.n_nodes)
    h = suggest_step(r3, rho0, (0, 1), gradient_bound=True)
    finals = [simulate(r3, rho0, (0.0, 0.5), step=h / k).final for k in (1, 2, 4)]
    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])

    base = three_node()
    net = Network(base.nodes, base.edges, base.actuators, base.injections, base.horizon,
                  {"a": 1.5, "b": 1.2, "c": 1.0})
    eps0, T = 0.4, 0.5
    ref = refine_network(net, eps0 / 8)
    step = suggest_step(ref, ref.initial_state(), (0, T), gradient_bound=True)
    sol = {}
    for eps in (eps0, eps0 / 2, eps0 / 4, eps0 / 8):
        r = refine_network(net, eps)
        sol[eps] = simulate(r, r.initial_state(), (0.0, T), step=step).final[[r.index[n] for n in net.nodes]]
    diffs = [float(np.max(np.abs(sol[e] - sol[eps0 / 8]))) for e in (eps0, eps0 / 2, eps0 / 4)]
    decreasing = all(b < a for a, b in zip(diffs, diffs[1:]))
    ok = residual < 1e-8 and 8 <= ratio <= 32 and decreasing
    verdict(5, ok, f"steady residual {residual:.2e} (< 1e-8), step-halving ratio {ratio:.2f} (in [8, 32]), "
                   f"eps-halving errors {', '.join(f'{d:.2e}' for d in diffs)} (strictly decreasing)")


def test_criterion_6_mass_accounting(verdict):
    # injection breakpoints sit on the step grid: RK4 integrates q with
    # Simpson's rule on each step, which is exact for linear pieces only
    rng = np.random.default_rng(6)
    worst = 0.0
    for trial in range(10):
        net = three_node() if trial == 0 else random_network(rng, int(rng.integers(2, 8)), "linear")
        rnet = refine_network(net, 0.4)
        ctl = [TimeProfile.constant(float(rng.uniform(0.7, 1.5))) for _ in rnet.actuators]
        rho0 = rng.uniform(0.8, 1.5, rnet.n_nodes)
        h = suggest_step(rnet, rho0, (0, 1), ctl)
        T = 100 * h
        grid = h * np.sort(rng.choice(np.arange(1, 100), 4, replace=False))
        q = {n: TimeProfile((0.0, *grid), tuple(rng.uniform(-0.3, 0.3, 5))) for n in net.nodes if rng.random() < 0.6}
        traj = simulate(rnet, rho0, (0.0, T), ctl, step=h, injections=q)
        dyn = NodalDynamics(rnet, ctl)
        supplied = sum(quad(f, 0.0, T, points=grid, limit=200)[0] for f in q.values())
        m0, m1 = dyn.mass(0.0, rho0), dyn.mass(T, traj.final)
        worst = max(worst, abs(m1 - m0 - supplied) / (abs(m0) * T))
    verdict(6, worst < 1e-6, f"worst relative mass drift per unit time {worst:.2e} (< 1e-6) over 10 networks")


def _pipe_ocp(rho_min, step=0.01):
    rnet = refine_network(single_pipe(), 0.3)
    return RobustOcp(rnet, 2.0, 1, rho_min, 10.0, 0.5, 3.0, ObjectiveSpec(RunningCost(actuation_weight=1.0)),
                     1.0, step=step)


def test_criterion_7_robust_ocp(verdict):
    t0 = time.perf_counter()
    easy = _pipe_ocp(0.1)
    a = solve_robust(easy, initial=easy.constant_schedule(1.3))
    ok_a = abs(a.values[0, 0] - 1.0) <= 1e-3 and a.objective < 1e-6

    ocp = _pipe_ocp({"d": 0.73})
    root = brentq(lambda x: evaluate_robust(ocp, ocp.constant_schedule(x)).margins["lower_above_min"],
                  1.0, 3.0, xtol=1e-12)
    b = solve_robust(ocp)
    alpha = float(b.values[0, 0])
    ok_b = abs(alpha - root) <= 0.02 * root and b.feasible and b.margins["envelope_min"] >= 0

    rng = np.random.default_rng(77)
    controls = b.controls()
    bad = 0
    for _ in range(50):
        q = interior_profiles(rng, ocp.rnet.base)
        rho = simulate(ocp.rnet, ocp.rho0, (0.0, ocp.horizon), controls, ocp.step, injections=q).rho
        bad += bool(np.any(rho < ocp.rho_min) or np.any(rho > ocp.rho_max))
    elapsed = time.perf_counter() - t0
    ok = ok_a and ok_b and bad == 0 and elapsed < 120
    verdict(7, ok, f"(a) alpha {a.values[0, 0]:.6f}, J {a.objective:.2e}; "
                   f"(b) alpha {alpha:.6f} vs bisection {root:.6f} ({abs(alpha - root) / root:.1e} rel), "
                   f"margin {b.margins['envelope_min']:.2e}; (c) {bad}/50 violations; {elapsed:.1f} s (< 120 s)")


def test_criterion_8_determinism(verdict, tmp_path):
    for name in ("single_pipe.json", "single_pipe_ocp.json", "gas_triangle.json"):
        shutil.copy(DATA / name, tmp_path / name)
    same = {}
    for cmd, args in (("verify", [str(tmp_path / "gas_triangle.json"), "--epsilon", "0.5", "--seed", "11"]),
                      ("optimize", [str(tmp_path / "single_pipe_ocp.json"), "--seed", "11"])):
        outs = []
        for run in (1, 2):
            out = tmp_path / f"{cmd}{run}"
            code = cli_main([cmd, *args, "--out", str(out), "--quiet"])
            assert code == 0
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir())
        same[cmd] = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    verdict(8, all(same.values()), f"byte-identical outputs: verify {same['verify']}, optimize {same['optimize']}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
