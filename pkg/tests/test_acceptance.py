"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import random
from fractions import Fraction

import numpy as np

from golden_utils import GOLDEN, GOLDEN_CONFIGS, SCENARIOS, matches_golden
from twistmech.algebra import (
    InverseMass,
    ParticleSystem,
    PerParticle,
    PhaseState,
    ThetaMatrix,
    TwistFunction,
)
from twistmech.checks import identity_checks, random_suite, rational_system
from twistmech.cli import main
from twistmech.composite import (
    com_bracket,
    com_bracket_closed_form,
    com_representation,
    cross_bracket,
    cross_bracket_closed_form,
    effective_theta,
)
from twistmech.dynamics import (
    Hamiltonian,
    Harmonic,
    InverseDistance,
    PairwisePotential,
    UniformField,
    build_hamiltonian,
    integrate,
    integrate_com,
    momentum_conservation_residual,
    wep_compare,
    wep_deviation,
)

SEED = 20240601
SUITE = random_suite(SEED, 100)


def _rel_err(got, expected, scale):
    return float(np.max(np.abs(np.asarray(got, float) - np.asarray(expected, float)))) / max(scale, 1e-300)


def test_criterion_1_algebra_exactness(criterion):
    worst_float, exact_ok = 0.0, True
    for system, t in SUITE:
        for c in identity_checks(system, t, exact=False, tol=1e-14)[:3]:
            worst_float = max(worst_float, c.max_error / max(c.scale, 1e-300) if c.scale else c.max_error)
            assert c.passed, c.name
        exact_ok &= all(c.passed for c in identity_checks(rational_system(system), t, exact=True)[:3])
    ok = worst_float <= 1e-14 and exact_ok
    criterion(1, "particle (X,P) bracket blocks on 100 random systems", ok,
              f"float worst rel {worst_float:.2e}, exact all equal: {exact_ok}")
    assert ok


def test_criterion_2_com_bracket_and_effective_theta(criterion):
    worst = 0.0
    for system, t in SUITE:
        closed = com_bracket_closed_form(system, t)
        scale = max(float(np.max(np.abs(closed))), 1.0)
        worst = max(worst, _rel_err(com_bracket(system, t), closed, scale))
        ex = rational_system(system)
        assert np.all(com_bracket(ex, t, exact=True) == com_bracket_closed_form(ex, t, exact=True))
    theta = ThetaMatrix(Fraction(7, 10), Fraction(-1, 3), Fraction(2, 9))
    reduced = all(
        effective_theta(ParticleSystem((Fraction(3, 2),) * n, PerParticle([theta] * n)), exact=True) == theta / n
        for n in range(2, 11))
    ok = worst <= 1e-14 and reduced
    criterion(2, "COM bracket closed form, theta/N for N=2..10", ok,
              f"float worst rel {worst:.2e}, identical-particle reduction exact: {reduced}")
    assert ok


def test_criterion_3_cross_bracket(criterion):
    worst, zero_ok, n_inverse = 0.0, True, 0
    for system, t in SUITE:
        for a in range(system.n):
            closed = cross_bracket_closed_form(system, a, t)
            worst = max(worst, _rel_err(cross_bracket(system, a, t), closed, max(float(np.max(np.abs(closed))), 1.0)))
        ex = rational_system(system)
        for a in range(ex.n):
            assert np.all(cross_bracket(ex, a, t, exact=True) == cross_bracket_closed_form(ex, a, t, exact=True))
        if isinstance(system.theta_policy, InverseMass):
            n_inverse += 1
            zero_ok &= all(np.all(cross_bracket(ex, a, t, exact=True) == 0) for a in range(ex.n))
            zero_ok &= bool(np.all(com_representation(ex, t, exact=True).rel_momentum_coeffs == 0))
    ok = worst <= 1e-14 and zero_ok and n_inverse > 0
    criterion(3, "cross bracket closed form, exact zero under inverse-mass policy", ok,
              f"float worst rel {worst:.2e}, {n_inverse} inverse-mass systems exactly zero: {zero_ok}")
    assert ok


def test_criterion_4_wep_violation(criterion):
    res = wep_deviation(UniformField(1.0, 0), (1.0, 2.0), ThetaMatrix(0.1), TwistFunction(), 2.0,
                        np.zeros(3), np.zeros(3), dt=1e-3)
    at_end = res.deviations[-1]
    ok = abs(at_end - 0.2) <= 1e-6 and res.times[-1] == 2.0
    criterion(4, "WEP violation |m1-m2| theta g t = 0.2 at t=2", ok, f"measured {at_end:.12f}")
    assert ok


def test_criterion_5_wep_recovery(criterion):
    worst = {}
    for twist in (TwistFunction(), TwistFunction("cosh", 5.0), TwistFunction("cos", 5.0)):
        res = wep_compare(UniformField(1.0, 0), (1.0, 2.0, 5.0, 10.0), InverseMass(ThetaMatrix(0.1)), twist,
                          10.0, np.zeros(3), np.zeros(3), dt=1e-3)
        worst[twist.kind] = res.max_deviation
    ok = max(worst.values()) <= 1e-8
    criterion(5, "WEP recovered under inverse-mass policy, masses 1,2,5,10, t in [0,10]", ok,
              ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))
    assert ok


def test_criterion_6_momentum_conservation(criterion):
    s = ParticleSystem((1.0, 2.5), PerParticle([ThetaMatrix(0.2, 0.1, -0.1), ThetaMatrix(-0.3, 0.05, 0.2)]))
    H = Hamiltonian(s, pairwise=PairwisePotential(InverseDistance(-1.0)))
    state0 = PhaseState(0.0, [[0, 0, 0], [1, 0, 0]], [[0, 0.6, 0.1], [0.0, -0.3, 0.0]])
    traj = integrate(H, state0, 10.0, dt=1e-3)
    residual = momentum_conservation_residual(H, traj)
    ok = residual <= 1e-9
    criterion(6, "total momentum conserved for a pairwise two-body system", ok, f"residual {residual:.2e}")
    assert ok


def test_criterion_7_com_consistency(criterion):
    s = ParticleSystem((1.0, 2.0, 4.0), InverseMass(ThetaMatrix(0.3, 0.1, -0.2)), TwistFunction("cos", 5.0))
    pot = UniformField(1.0, 0)
    H = Hamiltonian(s, pot, PairwisePotential(Harmonic(3.0, 0.5)))
    state0 = PhaseState(0.0, [[0, 0, 0], [1, 0, 0], [0, 1, 0.5]], [[0.1, 0.2, 0], [0, -0.4, 0.2], [0.3, 0, 0]])
    traj = integrate(H, state0, 5.0, dt=1e-3)
    Xc = traj.com_coordinates(s.masses)
    _, Xc_com, _ = integrate_com(s, pot, Xc[0], state0.p.sum(axis=0) / 7.0, 0.0, 5.0, 1e-3)
    dev = float(np.max(np.abs(Xc - Xc_com)))
    ok = dev <= 1e-8
    criterion(7, "COM of full N=3 run matches COM equations over [0,5]", ok, f"max deviation {dev:.2e}")
    assert ok


def test_criterion_8_integrator_order(criterion):
    H = build_hamiltonian(ParticleSystem((1.0,), PerParticle([ThetaMatrix(0.5)]), TwistFunction("cos", 1.0)),
                          UniformField(1.0, 0))
    state0 = PhaseState(0.0, np.zeros((1, 3)), [[0.2, 0.3, 0.0]])
    ends = [integrate(H, state0, 10.0, dt=dt).X[-1, 0] for dt in (0.2, 0.1, 0.05)]
    order = float(np.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])))
    ok = order >= 3.8
    criterion(8, "rk4 convergence order by step halving", ok, f"order {order:.3f}")
    assert ok


def test_criterion_9_cli_contract(criterion, tmp_path):
    failures = []
    for name in GOLDEN_CONFIGS:
        cfg = str(SCENARIOS / f"{name}.yaml")
        out = tmp_path / name
        if main(["algebra-check", "--config", cfg, "--out", str(out)]) != 0:
            failures.append(f"{name} algebra-check exit")
        if main(["simulate", "--config", cfg, "--out", str(out)]) != 0:
            failures.append(f"{name} simulate exit")
        for file in ("report.json", "trajectory.csv", "manifest.json"):
            if not matches_golden(out / file, GOLDEN / name / file):
                failures.append(f"{name}/{file} differs from golden")

    bad = tmp_path / "bad.yaml"
    bad.write_text('gamma: {"12": 0.1}\nparticles:\n  - {mass: 1, theta: {"12": 0.1}}\n')
    crash = tmp_path / "crash.yaml"
    crash.write_text("particles: [{mass: 1, theta: {}}, {mass: 1, theta: {}}]\n"
                     "potential: {pairwise: {profile: inverse, strength: -1}, r_floor: 0.05}\n"
                     "initial: {x: [[-0.5, 0, 0], [0.5, 0, 0]]}\nrun: {t1: 5, dt: 0.001}\n")
    codes = {
        "violation -> 1": (main(["wep", "--config", str(SCENARIOS / "wep_fixed_theta.yaml"),
                                 "--out", str(tmp_path / "w")]), 1),
        "config error -> 2": (main(["algebra-check", "--config", str(bad), "--out", str(tmp_path)]), 2),
        "integration error -> 3": (main(["simulate", "--config", str(crash), "--out", str(tmp_path)]), 3),
    }
    failures += [f"exit code {k}: got {got}" for k, (got, want) in codes.items() if got != want]
    ok = not failures
    criterion(9, "CLI golden files for three shipped configs and exit codes 0/1/2/3", ok,
              "; ".join(failures) or "all outputs match")
    assert ok
