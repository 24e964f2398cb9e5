"""Bracket identities evaluated two ways: generic engine vs closed forms."""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import (
    TWIST_KINDS,
    InverseMass,
    ParticleSystem,
    PerParticle,
    ThetaMatrix,
    TwistFunction,
    affine_bracket,
    bracket_matrix,
    particle_algebra_blocks,
    particle_observables,
    theta_of,
    twist_value,
)
from .composite import (
    check_inverse_mass_condition,
    com_representation,
    com_split,
    cross_bracket_closed_form,
    effective_theta,
    relative_brackets_closed_form,
    sector_brackets,
)


@dataclass
class Check:
    name: str
    max_error: float
    scale: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "max_error": self.max_error, "scale": self.scale,
                "passed": self.passed}


def _max_abs(arr) -> float:
    arr = np.asarray(arr, dtype=object)
    return float(max((abs(v) for v in arr.ravel()), default=0))


def _compare(name, got, expected, scale, exact, tol) -> Check:
    diff = np.asarray(got, dtype=object) - np.asarray(expected, dtype=object)
    err = _max_abs(diff)
    if exact:
        passed = all(v == 0 for v in diff.ravel())
    else:
        passed = err <= tol * (scale if scale > 0 else 1.0)
    return Check(name, err, scale, passed)


def labelled_observables(system: ParticleSystem, t: float, exact: bool = False):
    """(labels, observables) for X, P, X~, P~, dX, dP in that order."""
    n = system.n
    xs, ps = particle_observables(system, t, exact)
    split = com_split(system, t, exact)
    labels, obs = [], []
    for prefix, group in (("X", xs), ("P", ps)):
        for a in range(n):
            for i in range(3):
                labels.append(f"{prefix}{i + 1}_{a + 1}")
                obs.append(group[3 * a + i])
    for prefix, group in (("Xc", split.com_coordinates), ("Pc", split.com_momenta)):
        for i in range(3):
            labels.append(f"{prefix}{i + 1}")
            obs.append(group[i])
    for prefix, group in (("dX", split.rel_coordinates), ("dP", split.rel_momenta)):
        for a in range(n):
            for i in range(3):
                labels.append(f"{prefix}{i + 1}_{a + 1}")
                obs.append(group[a][i])
    return labels, obs


def identity_checks(system: ParticleSystem, t: float, exact: bool = False,
                    tol: float = 1e-14) -> list[Check]:
    """Closed-form bracket identities of the deformed N-particle algebra.

    In exact mode every check demands exact equality. In float mode an error
    passes when it is at most ``tol`` times the natural scale of the block:
    ``|f| max_a |theta_a|`` for coordinate blocks and 1 for canonical ones.
    """
    if exact:
        system = system.exact()
    n = system.n
    f = twist_value(system.twist, t, exact)
    theta_scale = float(abs(f)) * max(float(theta_of(system, a, exact).max_abs()) for a in range(n))
    checks = []

    xs, ps = particle_observables(system, t, exact)
    exp_xx, exp_xp, exp_pp = particle_algebra_blocks(system, t, exact)
    checks.append(_compare("particle {X,X} = delta_ab f theta_a", bracket_matrix(xs), exp_xx,
                           theta_scale, exact, tol))
    xp = np.array([[affine_bracket(a, b) for b in ps] for a in xs], dtype=object)
    checks.append(_compare("particle {X,P} = delta_ab delta_ij", xp, exp_xp, 1.0, exact, tol))
    checks.append(_compare("particle {P,P} = 0", bracket_matrix(ps), exp_pp, 1.0, exact, tol))

    split = com_split(system, t, exact)
    sec = sector_brackets(system, t, exact, split)
    eff = effective_theta(system, exact)
    zero3 = np.zeros((3, 3), dtype=object if exact else float)
    eye3 = np.eye(3, dtype=int).astype(object if exact else float)
    checks.append(_compare("com {X~,X~} = f theta_eff", sec.xt_xt, eff.as_array(exact) * f,
                           theta_scale, exact, tol))
    checks.append(_compare("com {P~,P~} = 0", sec.pt_pt, zero3, 1.0, exact, tol))
    checks.append(_compare("com {X~,P~} = delta_ij", sec.xt_pt, eye3, 1.0, exact, tol))

    dxdx, dxdp = relative_brackets_closed_form(system, t, exact)
    checks.append(_compare("relative {dX,dX} closed form", sec.dx_dx, dxdx, theta_scale, exact, tol))
    checks.append(_compare("relative {dX,dP} = delta_ij (delta_ab - mu_b)", sec.dx_dp, dxdp, 1.0, exact, tol))
    checks.append(_compare("relative {dP,dP} = 0", sec.dp_dp, np.zeros_like(sec.dp_dp), 1.0, exact, tol))
    checks.append(_compare("mixed {P~,dP} = 0", sec.pt_dp, np.zeros_like(sec.pt_dp), 1.0, exact, tol))
    cross_expected = np.array([cross_bracket_closed_form(system, a, t, exact) for a in range(n)],
                              dtype=object if exact else float)
    checks.append(_compare("cross {dX_a,X~} = f (mu_a theta_a - theta_eff)", sec.dx_xt, cross_expected,
                           theta_scale, exact, tol))

    verdict = check_inverse_mass_condition(system, 0 if exact else 1e-12, exact)
    if verdict.holds:
        total = system.total_mass(exact)
        checks.append(_compare("inverse-mass: cross brackets vanish", sec.dx_xt,
                               np.zeros_like(sec.dx_xt), theta_scale, exact, tol))
        checks.append(_compare("inverse-mass: theta_eff = gamma / M", eff.as_array(exact),
                               (verdict.gamma / total).as_array(exact),
                               theta_scale / float(abs(f)) if f else theta_scale, exact, tol))
        rep = com_representation(system, t, exact)
        checks.append(_compare("inverse-mass: COM coordinates free of relative momenta",
                               rep.rel_momentum_coeffs, np.zeros_like(rep.rel_momentum_coeffs),
                               theta_scale, exact, tol))
    return checks


# -- randomized systems --------------------------------------------------------

def random_twist(rng: random.Random, kind: str) -> TwistFunction:
    tau = rng.uniform(0.5, 5.0)
    if kind.startswith("poly"):
        coeffs = [[round(rng.uniform(-1, 1), 3) for _ in range(3)] for _ in range(3)]
        coeffs[0][0] = coeffs[0][0] or 0.5
        return TwistFunction(kind, tau, coeffs)
    return TwistFunction(kind, tau)


def random_system(rng: random.Random, kind: str = None, inverse_mass: bool = False,
                  max_n: int = 6) -> ParticleSystem:
    """Masses in [0.1, 10], theta entries in [-1, 1]."""
    n = rng.randint(1, max_n)
    masses = tuple(rng.uniform(0.1, 10.0) for _ in range(n))
    if inverse_mass:
        policy = InverseMass(ThetaMatrix(*(rng.uniform(-1, 1) for _ in range(3))))
    else:
        policy = PerParticle([ThetaMatrix(*(rng.uniform(-1, 1) for _ in range(3))) for _ in range(n)])
    return ParticleSystem(masses, policy, random_twist(rng, kind or rng.choice(TWIST_KINDS)))


def random_suite(seed: int, count: int = 100):
    """``count`` (system, t) pairs cycling through every twist kind."""
    rng = random.Random(seed)
    out = []
    for k in range(count):
        kind = TWIST_KINDS[k % len(TWIST_KINDS)]
        system = random_system(rng, kind, inverse_mass=(k % 5 == 4))
        out.append((system, rng.uniform(-3.0, 3.0)))
    return out


def rational_system(system: ParticleSystem, denominator: int = 1000) -> ParticleSystem:
    """Round parameters to nearby small-denominator rationals (exact-mode inputs)."""
    lim = lambda v: Fraction(v).limit_denominator(denominator)
    if isinstance(system.theta_policy, InverseMass):
        policy = InverseMass(system.theta_policy.gamma._map(lim))
    else:
        policy = PerParticle([th._map(lim) for th in system.theta_policy.thetas])
    return ParticleSystem(tuple(lim(m) for m in system.masses), policy, system.twist)
