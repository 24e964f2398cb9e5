"""Center-of-mass / relative decomposition of a deformed N-particle system."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .algebra import (
    AffineObservable,
    InverseMass,
    ParticleSystem,
    ThetaMatrix,
    affine_bracket,
    deformed_coordinate_observable,
    deformed_momentum_observable,
    theta_of,
    to_exact,
    twist_value,
)


def _require_particles(system: ParticleSystem) -> None:
    if system.n < 1:
        raise ValueError("empty particle system")


@dataclass
class ComSplit:
    com_coordinates: list          # X~_i, 3 observables
    com_momenta: list              # P~_i
    rel_coordinates: list          # dX[a][i]
    rel_momenta: list              # dP[a][i]
    mass_fractions: list
    total_mass: object
    exact: bool = False

    @property
    def n(self) -> int:
        return len(self.mass_fractions)


def com_split(system: ParticleSystem, t: float, exact: bool = False) -> ComSplit:
    """Build COM and relative observables from the deformed coordinates at ``t``."""
    _require_particles(system)
    n = system.n
    mu = system.mass_fractions(exact)
    X = [[deformed_coordinate_observable(system, a, i, t, exact) for i in range(3)]
         for a in range(n)]
    P = [[deformed_momentum_observable(system, a, i, exact) for i in range(3)]
         for a in range(n)]
    com_x = []
    com_p = []
    for i in range(3):
        cx = AffineObservable.zero(n, exact)
        cp = AffineObservable.zero(n, exact)
        for a in range(n):
            cx = cx + X[a][i] * mu[a]
            cp = cp + P[a][i]
        com_x.append(cx)
        com_p.append(cp)
    rel_x = [[X[a][i] - com_x[i] for i in range(3)] for a in range(n)]
    rel_p = [[P[a][i] - com_p[i] * mu[a] for i in range(3)] for a in range(n)]
    return ComSplit(com_x, com_p, rel_x, rel_p, mu, system.total_mass(exact), exact)


def effective_theta(system: ParticleSystem, exact: bool = False) -> ThetaMatrix:
    """``sum_a mu_a**2 theta_a``, the parameter governing COM coordinate brackets."""
    _require_particles(system)
    mu = system.mass_fractions(exact)
    total = ThetaMatrix(*(to_exact(0) if exact else 0.0,) * 3)
    for a in range(system.n):
        total = total + theta_of(system, a, exact) * (mu[a] * mu[a])
    return total


def _matrix(values, exact):
    return np.array(values, dtype=object if exact else float)


def _block(rows, cols, exact):
    return _matrix([[affine_bracket(r, c) for c in cols] for r in rows], exact)


def com_bracket(system: ParticleSystem, t: float, exact: bool = False,
                split: Optional[ComSplit] = None) -> np.ndarray:
    """3x3 matrix of ``{X~_i, X~_j}`` evaluated by the bracket engine."""
    split = split or com_split(system, t, exact)
    return _block(split.com_coordinates, split.com_coordinates, exact)


def com_bracket_closed_form(system: ParticleSystem, t: float, exact: bool = False) -> np.ndarray:
    return effective_theta(system, exact).as_array(exact) * twist_value(system.twist, t, exact)


@dataclass
class SectorBrackets:
    """Every bracket between COM and relative observables.

    Relative blocks are indexed ``[a, b, i, j]``; mixed COM/relative blocks
    ``[a, i, j]`` with the relative particle first.
    """

    xt_xt: np.ndarray   # {X~_i, X~_j}
    pt_pt: np.ndarray   # {P~_i, P~_j}
    xt_pt: np.ndarray   # {X~_i, P~_j}
    dx_xt: np.ndarray   # {dX[a]_i, X~_j}
    dx_dx: np.ndarray   # {dX[a]_i, dX[b]_j}
    dx_dp: np.ndarray   # {dX[a]_i, dP[b]_j}
    dp_dp: np.ndarray   # {dP[a]_i, dP[b]_j}
    pt_dp: np.ndarray   # {P~_i, dP[b]_j}, indexed [b, i, j]


def sector_brackets(system: ParticleSystem, t: float, exact: bool = False,
                    split: Optional[ComSplit] = None) -> SectorBrackets:
    split = split or com_split(system, t, exact)
    n = system.n
    cx, cp = split.com_coordinates, split.com_momenta
    rx, rp = split.rel_coordinates, split.rel_momenta

    def pairs(left, right):
        return _matrix([[_block(left[a], right[b], exact) for b in range(n)]
                        for a in range(n)], exact)

    return SectorBrackets(
        xt_xt=_block(cx, cx, exact),
        pt_pt=_block(cp, cp, exact),
        xt_pt=_block(cx, cp, exact),
        dx_xt=_matrix([_block(rx[a], cx, exact) for a in range(n)], exact),
        dx_dx=pairs(rx, rx),
        dx_dp=pairs(rx, rp),
        dp_dp=pairs(rp, rp),
        pt_dp=_matrix([_block(cp, rp[b], exact) for b in range(n)], exact),
    )


def cross_bracket(system: ParticleSystem, a: int, t: float, exact: bool = False,
                  split: Optional[ComSplit] = None) -> np.ndarray:
    """3x3 matrix of ``{dX[a]_i, X~_j}`` evaluated by the bracket engine."""
    if not 0 <= a < system.n:
        raise IndexError(f"particle index {a} out of range for {system.n} particles")
    split = split or com_split(system, t, exact)
    return _block(split.rel_coordinates[a], split.com_coordinates, exact)


def cross_bracket_closed_form(system: ParticleSystem, a: int, t: float,
                              exact: bool = False) -> np.ndarray:
    """``f (mu_a theta_a - sum_d mu_d**2 theta_d)``."""
    if not 0 <= a < system.n:
        raise IndexError(f"particle index {a} out of range for {system.n} particles")
    mu = system.mass_fractions(exact)
    f = twist_value(system.twist, t, exact)
    th = theta_of(system, a, exact) * mu[a] - effective_theta(system, exact)
    return th.as_array(exact) * f


def relative_brackets_closed_form(system: ParticleSystem, t: float, exact: bool = False):
    """Closed forms of ``{dX, dX}`` and ``{dX, dP}``, indexed ``[a, b, i, j]``."""
    n = system.n
    mu = system.mass_fractions(exact)
    f = twist_value(system.twist, t, exact)
    eff = effective_theta(system, exact)
    one = Fraction(1) if exact else 1.0
    zero = one * 0
    eye = _matrix([[one if i == j else zero for j in range(3)] for i in range(3)], exact)
    dxdx = np.empty((n, n, 3, 3), dtype=object if exact else float)
    dxdp = np.empty_like(dxdx)
    for a in range(n):
        for b in range(n):
            th = eff - theta_of(system, a, exact) * mu[a] - theta_of(system, b, exact) * mu[b]
            if a == b:
                th = th + theta_of(system, a, exact)
            dxdx[a, b] = th.as_array(exact) * f
            dxdp[a, b] = eye * ((one if a == b else zero) - mu[b])
    return dxdx, dxdp


@dataclass
class InverseMassVerdict:
    holds: bool
    gamma: Optional[ThetaMatrix]
    max_residual: float


def check_inverse_mass_condition(system: ParticleSystem, tol: float = 1e-12,
                                 exact: bool = False) -> InverseMassVerdict:
    """Test whether ``m_a theta_a`` is the same matrix for every particle."""
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    if isinstance(system.theta_policy, InverseMass) and not exact:
        gamma = system.theta_policy.gamma._map(float)
        return InverseMassVerdict(True, gamma, 0.0)
    products = [theta_of(system, a, exact) * (to_exact(m) if exact else float(m))
                for a, m in enumerate(system.masses)]
    residual = max(((pa - pb).max_abs() for pa in products for pb in products),
                   default=0)
    holds = residual <= tol
    gamma = None
    if holds:
        total = products[0]
        for pr in products[1:]:
            total = total + pr
        gamma = total / len(products)
    return InverseMassVerdict(holds, gamma, residual if exact else float(residual))


@dataclass
class ComRepresentation:
    """COM coordinates in canonical and in ``(x~, dP, P~)`` form.

    ``X~_i = x~_i + sum_{a,j} rel_momentum_coeffs[i, a, j] dP[a]_j
    + sum_j com_momentum_coeffs[i, j] P~_j``.

    ``raw_rel_momentum_coeffs`` are those produced by substituting
    ``p_a = dP_a + mu_a P~`` directly. Because ``sum_a dP_a = 0`` they are
    defined only up to a per-``(i, j)`` shift common to all particles;
    ``rel_momentum_coeffs`` fixes that freedom by removing the mean over
    particles, so relative-momentum dependence is absent iff it is all zero.
    """

    observables: list
    com_momentum_coeffs: np.ndarray     # (3, 3)
    raw_rel_momentum_coeffs: np.ndarray  # (3, N, 3)
    rel_momentum_coeffs: np.ndarray      # (3, N, 3)
    exact: bool = False

    @property
    def relative_dependence_vanishes(self) -> bool:
        return not np.any(self.rel_momentum_coeffs != 0)

    def max_relative_coefficient(self) -> float:
        return float(np.max(np.abs(self.rel_momentum_coeffs.astype(float))))

    def reconstruct(self, system: ParticleSystem, t: float) -> list:
        """Rebuild canonical-basis observables from the ``(x~, dP, P~)`` form."""
        split = com_split(system, t, self.exact)
        mu = split.mass_fractions
        n = system.n
        out = []
        for i in range(3):
            obs = AffineObservable.zero(n, self.exact)
            for a in range(n):
                obs = obs + AffineObservable.position(n, a, i, self.exact) * mu[a]
            for j in range(3):
                obs = obs + split.com_momenta[j] * self.com_momentum_coeffs[i, j]
                for a in range(n):
                    obs = obs + split.rel_momenta[a][j] * self.rel_momentum_coeffs[i, a, j]
            out.append(obs)
        return out


def com_representation(system: ParticleSystem, t: float, exact: bool = False) -> ComRepresentation:
    _require_particles(system)
    n = system.n
    mu = system.mass_fractions(exact)
    f = twist_value(system.twist, t, exact)
    half = Fraction(1, 2) if exact else 0.5
    dtype = object if exact else float
    split = com_split(system, t, exact)
    com_p = -half * f * effective_theta(system, exact).as_array(exact)
    raw = np.empty((3, n, 3), dtype=dtype)
    for a in range(n):
        raw[:, a, :] = -half * f * (theta_of(system, a, exact) * mu[a]).as_array(exact)
    if exact:
        mean = np.array([[sum(raw[i, :, j]) / n for j in range(3)] for i in range(3)], dtype=object)
        centred = raw - mean[:, None, :]
    else:
        centred = raw - raw.mean(axis=1, keepdims=True)
    return ComRepresentation(split.com_coordinates, com_p, raw, centred, exact)
