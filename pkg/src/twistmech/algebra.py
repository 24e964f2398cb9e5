"""Twist functions, noncommutativity parameters and the affine bracket engine.

Units are hbar = 1. A commutator ``[A, B]`` of the deformed algebra is
represented by the classical Poisson bracket ``{A, B} = [A, B] / (i hbar)``,
which is exact for observables that are affine in the canonical variables.

Indices are zero-based: particles ``a = 0..N-1`` and axes ``i = 0, 1, 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Sequence, Union

import numpy as np

Scalar = Union[float, Fraction]

TWIST_KINDS = (
    "constant-one",
    "cosh",
    "sinh",
    "cos",
    "sin",
    "poly-hyperbolic",
    "poly-trig",
)


def to_exact(value) -> Fraction:
    """Convert a number (or a ``"p/q"`` string) to an exact Fraction.

    Floats convert to the exact binary value they hold, so no rounding is
    introduced beyond what the float already carries.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


def _coerce(value, exact: bool) -> Scalar:
    return to_exact(value) if exact else float(value)


@dataclass(frozen=True)
class TwistFunction:
    """The time factor ``f(t / tau)`` multiplying every coordinate bracket.

    Polynomial kinds take ``coefficients[j][k]`` as the weight of
    ``s**j * c**k`` where ``(s, c)`` is ``(sinh, cosh)`` for
    ``poly-hyperbolic`` and ``(sin, cos)`` for ``poly-trig``.
    """

    kind: str = "constant-one"
    tau: float = 1.0
    coefficients: tuple = ()

    def __post_init__(self):
        if self.kind not in TWIST_KINDS:
            raise ValueError(f"unknown twist kind {self.kind!r}; expected one of {TWIST_KINDS}")
        if not (math.isfinite(float(self.tau)) and float(self.tau) > 0):
            raise ValueError(f"tau must be a positive finite number, got {self.tau!r}")
        coeffs = tuple(tuple(float(c) for c in row) for row in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if self.kind.startswith("poly") and not any(any(row) for row in coeffs):
            raise ValueError(f"twist kind {self.kind!r} needs a nonzero coefficient table")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant-one"

    def _pair(self, u: float) -> tuple[float, float]:
        if self.kind == "poly-hyperbolic":
            return math.sinh(u), math.cosh(u)
        return math.sin(u), math.cos(u)

    def __call__(self, t: float) -> float:
        return twist_eval(self, t)

    def rate(self, t: float) -> float:
        """Time derivative ``d f(t / tau) / dt``."""
        t = _finite_time(t)
        u = t / self.tau
        k = self.kind
        if k == "constant-one":
            return 0.0
        if k == "cosh":
            return math.sinh(u) / self.tau
        if k == "sinh":
            return math.cosh(u) / self.tau
        if k == "cos":
            return -math.sin(u) / self.tau
        if k == "sin":
            return math.cos(u) / self.tau
        s, c = self._pair(u)
        # hyperbolic: s' = c, c' = s; trigonometric: s' = c, c' = -s
        sign = 1.0 if k == "poly-hyperbolic" else -1.0
        total = 0.0
        for j, row in enumerate(self.coefficients):
            for n, w in enumerate(row):
                if not w:
                    continue
                if j:
                    total += w * j * s ** (j - 1) * c ** (n + 1)
                if n:
                    total += sign * w * n * s ** (j + 1) * c ** (n - 1)
        return total / self.tau

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "tau": self.tau}
        if self.coefficients:
            out["coefficients"] = [list(row) for row in self.coefficients]
        return out


def _finite_time(t) -> float:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"time must be finite, got {t!r}")
    return t


def twist_eval(f: TwistFunction, t: float) -> float:
    """Evaluate ``f(t / tau)``; the constant-one twist is identically 1."""
    t = _finite_time(t)
    if f.kind == "constant-one":
        return 1.0
    u = t / f.tau
    if f.kind == "cosh":
        return math.cosh(u)
    if f.kind == "sinh":
        return math.sinh(u)
    if f.kind == "cos":
        return math.cos(u)
    if f.kind == "sin":
        return math.sin(u)
    s, c = f._pair(u)
    return sum(w * s**j * c**n
               for j, row in enumerate(f.coefficients)
               for n, w in enumerate(row) if w)


def twist_value(f: TwistFunction, t: float, exact: bool = False) -> Scalar:
    """``twist_eval`` converted to the arithmetic of the requested mode."""
    if exact and f.is_constant:
        return Fraction(1)
    return _coerce(twist_eval(f, t), exact)


_PAIRS = {(0, 1): "t12", (0, 2): "t13", (1, 2): "t23"}


@dataclass(frozen=True)
class ThetaMatrix:
    """Antisymmetric 3x3 noncommutativity parameters, stored as three entries."""

    t12: Scalar = 0.0
    t13: Scalar = 0.0
    t23: Scalar = 0.0

    @classmethod
    def from_array(cls, m) -> "ThetaMatrix":
        m = np.asarray(m, dtype=object)
        if m.shape != (3, 3):
            raise ValueError(f"theta matrix must be 3x3, got shape {m.shape}")
        for i in range(3):
            if m[i, i] != 0:
                raise ValueError("theta matrix must have a zero diagonal")
            for j in range(i + 1, 3):
                if m[i, j] != -m[j, i]:
                    raise ValueError("theta matrix must be antisymmetric")
        return cls(m[0, 1], m[0, 2], m[1, 2])

    def entries(self) -> tuple:
        return (self.t12, self.t13, self.t23)

    def __getitem__(self, ij) -> Scalar:
        i, j = ij
        if i == j:
            return self.t12 * 0
        if i < j:
            return getattr(self, _PAIRS[(i, j)])
        return -getattr(self, _PAIRS[(j, i)])

    def as_array(self, exact: bool = False) -> np.ndarray:
        if exact:
            out = np.full((3, 3), Fraction(0), dtype=object)
        else:
            out = np.zeros((3, 3))
        for (i, j), name in _PAIRS.items():
            v = _coerce(getattr(self, name), exact)
            out[i, j] = v
            out[j, i] = -v
        return out

    def exact(self) -> "ThetaMatrix":
        return ThetaMatrix(*(to_exact(v) for v in self.entries()))

    def _map(self, fn) -> "ThetaMatrix":
        return ThetaMatrix(*(fn(v) for v in self.entries()))

    def __add__(self, other: "ThetaMatrix") -> "ThetaMatrix":
        return ThetaMatrix(*(x + y for x, y in zip(self.entries(), other.entries())))

    def __sub__(self, other: "ThetaMatrix") -> "ThetaMatrix":
        return ThetaMatrix(*(x - y for x, y in zip(self.entries(), other.entries())))

    def __mul__(self, s) -> "ThetaMatrix":
        return self._map(lambda v: v * s)

    __rmul__ = __mul__

    def __truediv__(self, s) -> "ThetaMatrix":
        return self._map(lambda v: v / s)

    def max_abs(self) -> Scalar:
        return max(abs(v) for v in self.entries())


@dataclass(frozen=True)
class PerParticle:
    thetas: tuple

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(self.thetas))


@dataclass(frozen=True)
class InverseMass:
    """Parameters inversely proportional to mass: ``theta_a = gamma / m_a``."""

    gamma: ThetaMatrix


ThetaPolicy = Union[PerParticle, InverseMass]


@dataclass(frozen=True)
class ParticleSystem:
    masses: tuple
    theta_policy: ThetaPolicy
    twist: TwistFunction = field(default_factory=TwistFunction)

    def __post_init__(self):
        masses = tuple(self.masses)
        if not masses:
            raise ValueError("a particle system needs at least one particle")
        for m in masses:
            if not (isinstance(m, (Real, Fraction)) and m > 0 and math.isfinite(float(m))):
                raise ValueError(f"masses must be positive and finite, got {m!r}")
        object.__setattr__(self, "masses", masses)
        policy = self.theta_policy
        if isinstance(policy, PerParticle):
            if len(policy.thetas) != len(masses):
                raise ValueError(
                    f"PerParticle holds {len(policy.thetas)} theta matrices for {len(masses)} particles")
        elif not isinstance(policy, InverseMass):
            raise TypeError(f"unsupported theta policy {policy!r}")

    @property
    def n(self) -> int:
        return len(self.masses)

    def total_mass(self, exact: bool = False) -> Scalar:
        return sum((_coerce(m, exact) for m in self.masses), _coerce(0, exact))

    def mass_fractions(self, exact: bool = False) -> list:
        total = self.total_mass(exact)
        return [_coerce(m, exact) / total for m in self.masses]

    def exact(self) -> "ParticleSystem":
        """Same system with every parameter converted to Fractions."""
        if isinstance(self.theta_policy, InverseMass):
            policy = InverseMass(self.theta_policy.gamma.exact())
        else:
            policy = PerParticle([th.exact() for th in self.theta_policy.thetas])
        return ParticleSystem(tuple(to_exact(m) for m in self.masses), policy, self.twist)


def _is_exact_system(system: ParticleSystem) -> bool:
    return all(isinstance(m, Fraction) for m in system.masses)


def theta_of(system: ParticleSystem, a: int, exact: bool = False) -> ThetaMatrix:
    """Noncommutativity parameters of particle ``a``."""
    if not 0 <= a < system.n:
        raise IndexError(f"particle index {a} out of range for {system.n} particles")
    policy = system.theta_policy
    if isinstance(policy, PerParticle):
        th = policy.thetas[a]
        return th.exact() if exact else th._map(float)
    gamma = policy.gamma.exact() if exact else policy.gamma._map(float)
    return gamma / _coerce(system.masses[a], exact)


@dataclass(frozen=True)
class PhaseState:
    """Canonical variables ``x``, ``p`` of shape ``(N, 3)`` at time ``t``."""

    t: float
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1, 3)
        p = np.array(self.p, dtype=float).reshape(-1, 3)
        if x.shape != p.shape:
            raise ValueError(f"x has shape {x.shape} but p has shape {p.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.x.shape[0]


def bopp_shift(system: ParticleSystem, state: PhaseState, a: int) -> np.ndarray:
    """Deformed coordinates ``X = x - f(t/tau) theta p / 2`` of particle ``a``."""
    if state.n != system.n:
        raise ValueError(f"state has {state.n} particles, system has {system.n}")
    th = theta_of(system, a).as_array()
    f = twist_eval(system.twist, state.t)
    return state.x[a] - 0.5 * f * th @ state.p[a]


def bopp_shift_all(system: ParticleSystem, t: float, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vectorised ``bopp_shift`` over every particle."""
    f = twist_eval(system.twist, t)
    thetas = np.stack([theta_of(system, a).as_array() for a in range(system.n)])
    return x - 0.5 * f * np.einsum("aij,aj->ai", thetas, p)


class AffineObservable:
    """``constant + sum x_coeffs * x + sum p_coeffs * p`` over ``(N, 3)`` variables.

    Float mode stores float arrays; exact mode stores object arrays of
    Fractions. Brackets of two affine observables are phase-space constants.
    """

    __slots__ = ("constant", "x_coeffs", "p_coeffs")

    def __init__(self, constant, x_coeffs, p_coeffs):
        x_coeffs = np.asarray(x_coeffs)
        p_coeffs = np.asarray(p_coeffs)
        if x_coeffs.shape != p_coeffs.shape or x_coeffs.ndim != 2 or x_coeffs.shape[1] != 3:
            raise ValueError("coefficient arrays must share shape (N, 3)")
        self.constant = constant
        self.x_coeffs = x_coeffs
        self.p_coeffs = p_coeffs

    @classmethod
    def zero(cls, n: int, exact: bool = False) -> "AffineObservable":
        if exact:
            z = np.full((n, 3), Fraction(0), dtype=object)
            return cls(Fraction(0), z, z.copy())
        return cls(0.0, np.zeros((n, 3)), np.zeros((n, 3)))

    @classmethod
    def const(cls, value, n: int, exact: bool = False) -> "AffineObservable":
        obs = cls.zero(n, exact)
        obs.constant = _coerce(value, exact)
        return obs

    @classmethod
    def position(cls, n: int, a: int, i: int, exact: bool = False) -> "AffineObservable":
        """Canonical coordinate ``x[a, i]``."""
        obs = cls.zero(n, exact)
        obs.x_coeffs[a, i] = _coerce(1, exact)
        return obs

    @classmethod
    def momentum(cls, n: int, a: int, i: int, exact: bool = False) -> "AffineObservable":
        """Canonical momentum ``p[a, i]`` (equal to the deformed ``P[a, i]``)."""
        obs = cls.zero(n, exact)
        obs.p_coeffs[a, i] = _coerce(1, exact)
        return obs

    @property
    def n(self) -> int:
        return self.x_coeffs.shape[0]

    @property
    def exact(self) -> bool:
        return self.x_coeffs.dtype == object

    def evaluate(self, x, p) -> float:
        return float(self.constant) + float(np.sum(self.x_coeffs.astype(float) * np.asarray(x))
                                            + np.sum(self.p_coeffs.astype(float) * np.asarray(p)))

    def __add__(self, other: "AffineObservable") -> "AffineObservable":
        return AffineObservable(self.constant + other.constant,
                                self.x_coeffs + other.x_coeffs,
                                self.p_coeffs + other.p_coeffs)

    def __sub__(self, other: "AffineObservable") -> "AffineObservable":
        return self + (-other)

    def __neg__(self) -> "AffineObservable":
        return AffineObservable(-self.constant, -self.x_coeffs, -self.p_coeffs)

    def __mul__(self, s) -> "AffineObservable":
        return AffineObservable(self.constant * s, self.x_coeffs * s, self.p_coeffs * s)

    __rmul__ = __mul__

    def __truediv__(self, s) -> "AffineObservable":
        return AffineObservable(self.constant / s, self.x_coeffs / s, self.p_coeffs / s)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AffineObservable) or other.n != self.n:
            return NotImplemented
        return (self.constant == other.constant
                and bool(np.all(self.x_coeffs == other.x_coeffs))
                and bool(np.all(self.p_coeffs == other.p_coeffs)))

    __hash__ = None

    def is_zero(self) -> bool:
        return (self.constant == 0 and not np.any(self.x_coeffs != 0)
                and not np.any(self.p_coeffs != 0))

    def in_velocity_basis(self, masses: Sequence) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients with respect to ``x`` and ``v = p / m``."""
        m = np.array(list(masses), dtype=object if self.exact else float).reshape(-1, 1)
        return self.x_coeffs, self.p_coeffs * m

    def __repr__(self) -> str:
        return (f"AffineObservable(constant={self.constant!r}, "
                f"x_coeffs={self.x_coeffs.tolist()!r}, p_coeffs={self.p_coeffs.tolist()!r})")


def deformed_coordinate_observable(system: ParticleSystem, a: int, i: int, t: float,
                                   exact: bool = False) -> AffineObservable:
    """``X[a, i] = x[a, i] - f(t/tau)/2 * sum_j theta_a[i, j] p[a, j]`` frozen at ``t``."""
    if not 0 <= i < 3:
        raise IndexError(f"axis {i} out of range")
    f = twist_value(system.twist, t, exact)
    th = theta_of(system, a, exact)
    obs = AffineObservable.position(system.n, a, i, exact)
    half = Fraction(1, 2) if exact else 0.5
    for j in range(3):
        obs.p_coeffs[a, j] = -half * f * th[i, j]
    return obs


def deformed_momentum_observable(system: ParticleSystem, a: int, i: int,
                                 exact: bool = False) -> AffineObservable:
    return AffineObservable.momentum(system.n, a, i, exact)


def affine_bracket(A: AffineObservable, B: AffineObservable) -> Scalar:
    """Poisson bracket ``{A, B} = sum dA/dx dB/dp - dA/dp dB/dx``."""
    if A.n != B.n:
        raise ValueError(f"observables live on different particle sets ({A.n} vs {B.n})")
    if A.exact or B.exact:
        total = np.sum(A.x_coeffs * B.p_coeffs) - np.sum(A.p_coeffs * B.x_coeffs)
        return to_exact(total)
    return float(np.sum(A.x_coeffs * B.p_coeffs - A.p_coeffs * B.x_coeffs))


def bracket_matrix(observables: Sequence[AffineObservable]) -> np.ndarray:
    """Pairwise brackets; antisymmetric by construction."""
    obs = list(observables)
    if not obs:
        raise ValueError("bracket_matrix needs at least one observable")
    n = obs[0].n
    if any(o.n != n for o in obs):
        raise ValueError("observables live on different particle sets")
    exact = any(o.exact for o in obs)
    k = len(obs)
    if exact:
        out = np.full((k, k), Fraction(0), dtype=object)
    else:
        out = np.zeros((k, k))
    for r in range(k):
        for c in range(r + 1, k):
            v = affine_bracket(obs[r], obs[c])
            out[r, c] = v
            out[c, r] = -v
    return out


def particle_observables(system: ParticleSystem, t: float, exact: bool = False):
    """Deformed ``X`` then ``P`` observables, ordered particle-major then by axis."""
    xs = [deformed_coordinate_observable(system, a, i, t, exact)
          for a in range(system.n) for i in range(3)]
    ps = [deformed_momentum_observable(system, a, i, exact)
          for a in range(system.n) for i in range(3)]
    return xs, ps


def particle_algebra_blocks(system: ParticleSystem, t: float, exact: bool = False):
    """Expected bracket blocks of the deformed particle algebra.

    Returns ``(XX, XP, PP)`` of shape ``(3N, 3N)`` holding
    ``delta_ab f theta_a[i, j]``, ``delta_ab delta_ij`` and zeros.
    """
    n = system.n
    f = twist_value(system.twist, t, exact)
    dtype = object if exact else float
    zero = Fraction(0) if exact else 0.0
    xx = np.full((3 * n, 3 * n), zero, dtype=dtype)
    for a in range(n):
        xx[3 * a:3 * a + 3, 3 * a:3 * a + 3] = theta_of(system, a, exact).as_array(exact) * f
    one = Fraction(1) if exact else 1.0
    xp = np.full((3 * n, 3 * n), zero, dtype=dtype)
    for k in range(3 * n):
        xp[k, k] = one
    pp = np.full((3 * n, 3 * n), zero, dtype=dtype)
    return xx, xp, pp
