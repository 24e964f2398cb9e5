"""Hamiltonians, deformed equations of motion and trajectory integration.

The integrated state is always the canonical pair ``(x, p)``; the deformed
coordinates ``X = x - f theta p / 2`` are derived from it at each sample.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .algebra import (
    AffineObservable,
    InverseMass,
    ParticleSystem,
    PerParticle,
    PhaseState,
    ThetaMatrix,
    TwistFunction,
    affine_bracket,
    bopp_shift_all,
    deformed_coordinate_observable,
    theta_of,
    twist_eval,
)
from .composite import check_inverse_mass_condition

PAPER = "paper-bracket"
REPRESENTATION = "representation-consistent"
_MODE_ALIASES = {
    "paper": PAPER, PAPER: PAPER,
    "representation": REPRESENTATION, REPRESENTATION: REPRESENTATION,
}
METHODS = ("rk4", "rk45")


def normalize_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise ValueError(f"unknown dynamics mode {mode!r}; use 'paper' or 'representation'") from None


class IntegrationError(RuntimeError):
    """Integration aborted; ``last_time`` is the last time with a valid state."""

    def __init__(self, message: str, last_time: Optional[float] = None):
        super().__init__(message)
        self.last_time = last_time


class SingularityError(IntegrationError):
    pass


# -- radial profiles ---------------------------------------------------------

class RadialProfile:
    singular = False

    def value(self, r: float) -> float:
        raise NotImplementedError

    def derivative(self, r: float) -> float:
        raise NotImplementedError

    def dvdr_over_r(self, r: float) -> float:
        return self.derivative(r) / r

    def to_dict(self) -> dict:
        raise NotImplementedError


def _finite(name, value) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class InverseDistance(RadialProfile):
    """``V(r) = strength / r`` (Coulomb-like; negative strength is attractive)."""

    strength: float
    singular = True

    def __post_init__(self):
        _finite("strength", self.strength)

    def value(self, r):
        return self.strength / r

    def derivative(self, r):
        return -self.strength / r**2

    def dvdr_over_r(self, r):
        return -self.strength / r**3

    def to_dict(self):
        return {"profile": "inverse", "strength": self.strength}


@dataclass(frozen=True)
class Harmonic(RadialProfile):
    """``V(r) = k (r - rest)**2 / 2``."""

    k: float
    rest: float = 0.0

    def __post_init__(self):
        _finite("k", self.k)
        if _finite("rest", self.rest) < 0:
            raise ValueError("rest length must be non-negative")

    @property
    def singular(self):
        return self.rest > 0

    def value(self, r):
        return 0.5 * self.k * (r - self.rest) ** 2

    def derivative(self, r):
        return self.k * (r - self.rest)

    def dvdr_over_r(self, r):
        if self.rest == 0:
            return self.k
        return self.k * (1.0 - self.rest / r)

    def to_dict(self):
        return {"profile": "harmonic", "k": self.k, "rest": self.rest}


class Tabulated(RadialProfile):
    """Cubic-spline profile through ``(r, V)`` samples."""

    singular = True

    def __init__(self, r: Sequence[float], v: Sequence[float]):
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 4:
            raise ValueError("tabulated profile needs matching r and V arrays with at least 4 points")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ValueError("tabulated radii must be non-negative and strictly increasing")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ValueError("tabulated profile must be finite")
        self.r = r
        self.v = v
        self._spline = CubicSpline(r, v)
        self._dspline = self._spline.derivative()

    def value(self, r):
        return float(self._spline(r))

    def derivative(self, r):
        return float(self._dspline(r))

    def to_dict(self):
        return {"profile": "tabulated", "r": self.r.tolist(), "v": self.v.tolist()}


class CallableProfile(RadialProfile):
    def __init__(self, value: Callable[[float], float], derivative: Callable[[float], float],
                 singular: bool = True):
        self._value = value
        self._derivative = derivative
        self.singular = singular

    def value(self, r):
        return float(self._value(r))

    def derivative(self, r):
        return float(self._derivative(r))

    def to_dict(self):
        return {"profile": "callable"}


# -- potentials ---------------------------------------------------------------

@dataclass(frozen=True)
class UniformField:
    """``V(X) = g * X[axis]``; the body feels acceleration ``-g`` along ``axis``."""

    g: float
    axis: int = 0

    def __post_init__(self):
        _finite("g", self.g)
        if self.axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0, 1 or 2, got {self.axis!r}")

    def value(self, X: np.ndarray, r_floor: float = 0.0) -> float:
        return self.g * X[self.axis]

    def gradient(self, X: np.ndarray, r_floor: float = 0.0) -> np.ndarray:
        out = np.zeros(3)
        out[self.axis] = self.g
        return out

    def to_dict(self):
        return {"kind": "uniform", "g": self.g, "axis": self.axis}


@dataclass(frozen=True)
class CentralPotential:
    """``V(|X - center|)`` per unit mass."""

    profile: RadialProfile
    center: tuple = (0.0, 0.0, 0.0)

    def _offset(self, X, r_floor):
        d = np.asarray(X, dtype=float) - np.asarray(self.center, dtype=float)
        r = float(np.sqrt(d @ d))
        if r < r_floor and self.profile.singular:
            raise SingularityError(f"central potential evaluated at r={r:.3e} below floor {r_floor:.1e}")
        return d, r

    def value(self, X, r_floor: float = 0.0) -> float:
        _, r = self._offset(X, r_floor)
        return self.profile.value(r)

    def gradient(self, X, r_floor: float = 0.0) -> np.ndarray:
        d, r = self._offset(X, r_floor)
        if r == 0.0:
            return np.zeros(3)
        return self.profile.dvdr_over_r(r) * d

    def to_dict(self):
        return {"kind": "central", "center": list(self.center), **self.profile.to_dict()}


@dataclass(frozen=True)
class PairwisePotential:
    """Interaction ``V_int(|X_a - X_b|)`` for each unordered pair."""

    profile: RadialProfile

    def to_dict(self):
        return {"kind": "pairwise", **self.profile.to_dict()}


# -- hamiltonian --------------------------------------------------------------

class Hamiltonian:
    """``sum P**2 / 2m + sum_{a<b} V_int + sum m_a V(X_a)`` on deformed coordinates."""

    def __init__(self, system: ParticleSystem, external=None, pairwise: Optional[PairwisePotential] = None,
                 r_floor: float = 1e-9, free: bool = False):
        if external is None and pairwise is None and not free:
            raise ValueError("Hamiltonian needs an external or pairwise potential (pass free=True for a free system)")
        if pairwise is not None and not isinstance(pairwise, PairwisePotential):
            raise TypeError("pairwise term must be a PairwisePotential")
        if r_floor < 0:
            raise ValueError("r_floor must be non-negative")
        self.system = system
        self.external = external
        self.pairwise = pairwise
        self.r_floor = float(r_floor)
        self.masses = np.array([float(m) for m in system.masses])
        self.thetas = np.stack([theta_of(system, a).as_array() for a in range(system.n)])

    @property
    def twist(self) -> TwistFunction:
        return self.system.twist

    def kinetic(self, p: np.ndarray) -> float:
        return float(np.sum(p * p / (2.0 * self.masses[:, None])))

    def potential(self, X: np.ndarray) -> float:
        total = 0.0
        if self.external is not None:
            total += sum(self.masses[a] * self.external.value(X[a], self.r_floor)
                         for a in range(len(X)))
        if self.pairwise is not None:
            prof = self.pairwise.profile
            for a in range(len(X)):
                for b in range(a + 1, len(X)):
                    total += prof.value(self._separation(X, a, b)[1])
        return total

    def _separation(self, X, a, b):
        d = X[a] - X[b]
        r = float(np.sqrt(d @ d))
        if r < self.r_floor and self.pairwise.profile.singular:
            raise SingularityError(
                f"particles {a} and {b} at separation {r:.3e} below floor {self.r_floor:.1e}")
        return d, r

    def gradient(self, X: np.ndarray) -> np.ndarray:
        """``dH/dX``, shape ``(N, 3)``."""
        G = np.zeros_like(X)
        if isinstance(self.external, UniformField):
            G[:, self.external.axis] += self.masses * self.external.g
        elif self.external is not None:
            for a in range(len(X)):
                G[a] += self.masses[a] * self.external.gradient(X[a], self.r_floor)
        if self.pairwise is not None:
            prof = self.pairwise.profile
            for a in range(len(X)):
                for b in range(a + 1, len(X)):
                    d, r = self._separation(X, a, b)
                    force = np.zeros(3) if r == 0.0 else prof.dvdr_over_r(r) * d
                    G[a] += force
                    G[b] -= force
        return G

    def deformed(self, t: float, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        return bopp_shift_all(self.system, t, x, p)

    def value(self, state: PhaseState) -> float:
        X = self.deformed(state.t, state.x, state.p)
        return self.kinetic(state.p) + self.potential(X)

    def relative_part(self, state: PhaseState) -> float:
        """``H - P~**2 / 2M - M V(X~)``; the external term is dropped when absent."""
        X = self.deformed(state.t, state.x, state.p)
        M = float(np.sum(self.masses))
        Xc = (self.masses[:, None] * X).sum(axis=0) / M
        Pc = state.p.sum(axis=0)
        com = float(Pc @ Pc) / (2.0 * M)
        if self.external is not None:
            com += M * self.external.value(Xc, self.r_floor)
        return self.value(state) - com

    def describe(self) -> dict:
        return {
            "external": None if self.external is None else self.external.to_dict(),
            "pairwise": None if self.pairwise is None else self.pairwise.to_dict(),
            "r_floor": self.r_floor,
        }


def build_hamiltonian(system: ParticleSystem, external=None, pairwise=None,
                      r_floor: float = 1e-9) -> Hamiltonian:
    return Hamiltonian(system, external, pairwise, r_floor)


@dataclass
class Derivatives:
    dX: np.ndarray
    dP: np.ndarray
    dx: np.ndarray
    dp: np.ndarray


def _apply(th: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-particle ``theta_a @ v_a``."""
    return np.matmul(th, v[..., None])[..., 0]


def _derivatives(H: Hamiltonian, t: float, x: np.ndarray, p: np.ndarray, mode: str) -> Derivatives:
    f = twist_eval(H.twist, t)
    fdot = H.twist.rate(t)
    thp = _apply(H.thetas, p)
    X = x - 0.5 * f * thp
    G = H.gradient(X)
    thG = _apply(H.thetas, G)
    dP = -G
    dX = p / H.masses[:, None] + f * thG
    if mode == REPRESENTATION:
        dX = dX - 0.5 * fdot * thp
    # x = X + f theta p / 2
    dx = dX + 0.5 * fdot * thp - 0.5 * f * thG
    return Derivatives(dX, dP, dx, dP)


def equations_of_motion(H: Hamiltonian, state: PhaseState, mode: str = PAPER) -> Derivatives:
    """Time derivatives of ``(X, P)`` and of the canonical ``(x, p)``.

    ``paper-bracket``: ``dX/dt = {X, H}`` with the deformed brackets only.
    ``representation-consistent``: also includes ``-f'(t) theta p / 2`` coming
    from the explicit time dependence of the representation; this is exactly
    canonical Hamiltonian flow in ``(x, p)``.
    """
    mode = normalize_mode(mode)
    d = _derivatives(H, state.t, state.x, state.p, mode)
    for arr in (d.dX, d.dP):
        if not np.all(np.isfinite(arr)):
            raise SingularityError("non-finite potential gradient", state.t)
    return d


# -- integration --------------------------------------------------------------

def rk4_solve(rhs, t0: float, y0: np.ndarray, t1: float, dt: float, sample_every: int = 1):
    """Fixed-step classical Runge-Kutta; the last step is shortened to hit ``t1``.

    Returns ``(times, ys, n_steps)``. Times are ``t0 + k dt`` (not accumulated).
    """
    if not t1 > t0:
        raise ValueError("t1 must be greater than t0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    y = np.array(y0, dtype=float)
    times = [t0]
    ys = [y.copy()]
    t = t0
    for k in range(1, n_steps + 1):
        t_next = t1 if k == n_steps else t0 + k * dt
        h = t_next - t
        try:
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t_next, y + h * k3)
        except SingularityError as exc:
            raise SingularityError(f"{exc} (step to t={t_next:g})", t) from exc
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"non-finite state produced stepping to t={t_next:g}", t)
        y, t = y_new, t_next
        if k % sample_every == 0 or k == n_steps:
            times.append(t)
            ys.append(y.copy())
    return np.array(times), np.array(ys), n_steps


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray           # (K, N, 3) canonical coordinates
    p: np.ndarray           # (K, N, 3) canonical momenta = deformed momenta
    X: np.ndarray           # (K, N, 3) deformed coordinates
    metadata: dict = field(default_factory=dict)

    @property
    def P(self) -> np.ndarray:
        return self.p

    @property
    def states(self) -> list:
        return [PhaseState(t, x, p) for t, x, p in zip(self.times, self.x, self.p)]

    def total_momentum(self) -> np.ndarray:
        return self.p.sum(axis=1)

    def com_coordinates(self, masses) -> np.ndarray:
        m = np.asarray([float(v) for v in masses])
        return np.einsum("a,kai->ki", m, self.X) / m.sum()


def system_fingerprint(system: ParticleSystem) -> str:
    policy = system.theta_policy
    if isinstance(policy, InverseMass):
        pol = {"gamma": [str(v) for v in policy.gamma.entries()]}
    else:
        pol = {"thetas": [[str(v) for v in th.entries()] for th in policy.thetas]}
    payload = {"masses": [str(m) for m in system.masses], "policy": pol,
               "twist": system.twist.to_dict()}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def integrate(H: Hamiltonian, state0: PhaseState, t1: float, dt: Optional[float] = None,
              method: str = "rk4", mode: str = PAPER, tolerance: Optional[float] = None,
              sample_every: int = 1) -> Trajectory:
    """Integrate from ``state0.t`` to ``t1``.

    ``rk4`` needs ``dt``. ``rk45`` (adaptive Dormand-Prince) needs ``tolerance``
    and samples the accepted steps, or a regular grid of spacing ``dt`` if given.
    """
    mode = normalize_mode(mode)
    system = H.system
    n = system.n
    if state0.n != n:
        raise ValueError(f"state has {state0.n} particles, system has {n}")
    t0 = float(state0.t)
    t1 = float(t1)
    if not t1 > t0:
        raise ValueError("t1 must be greater than the initial time")
    rhs_calls = 0

    def rhs(t, y):
        nonlocal rhs_calls
        rhs_calls += 1
        x = y[:3 * n].reshape(n, 3)
        p = y[3 * n:].reshape(n, 3)
        d = _derivatives(H, t, x, p, mode)
        return np.concatenate([d.dx.ravel(), d.dp.ravel()])

    y0 = np.concatenate([state0.x.ravel(), state0.p.ravel()])
    meta = {"integrator": method, "mode": mode, "system_hash": system_fingerprint(system)}
    if method == "rk4":
        if dt is None:
            raise ValueError("rk4 needs a step size dt")
        times, ys, n_steps = rk4_solve(rhs, t0, y0, t1, dt, sample_every)
        meta.update(dt=dt, steps=n_steps)
    elif method == "rk45":
        if tolerance is None or not tolerance > 0:
            raise ValueError("rk45 needs a positive tolerance")
        t_eval = None
        if dt is not None:
            k = max(1, math.ceil((t1 - t0) / dt - 1e-9))
            t_eval = np.append(t0 + dt * np.arange(k), t1)
        try:
            sol = solve_ivp(rhs, (t0, t1), y0, method="RK45", rtol=tolerance,
                            atol=tolerance, t_eval=t_eval)
        except SingularityError as exc:
            raise SingularityError(str(exc), None) from exc
        if sol.status != 0:
            last = float(sol.t[-1]) if sol.t.size else t0
            raise IntegrationError(f"adaptive integration failed: {sol.message}", last)
        times, ys = sol.t, sol.y.T
        if not np.all(np.isfinite(ys)):
            bad = int(np.argmax(~np.all(np.isfinite(ys), axis=1)))
            raise IntegrationError("non-finite state", float(times[max(bad - 1, 0)]))
        meta.update(tolerance=tolerance, steps=int(sol.t.size - 1) if t_eval is None else None,
                    dt=dt)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    meta["rhs_evaluations"] = rhs_calls
    x = ys[:, :3 * n].reshape(-1, n, 3)
    p = ys[:, 3 * n:].reshape(-1, n, 3)
    f = np.array([twist_eval(system.twist, t) for t in times])
    X = x - 0.5 * f[:, None, None] * np.einsum("aij,kaj->kai", H.thetas, p)
    return Trajectory(np.asarray(times, dtype=float), x, p, X, meta)


# -- conservation and COM -----------------------------------------------------

def momentum_conservation_residual(H: Hamiltonian, trajectory: Trajectory) -> float:
    """``max_t |P~(t) - P~(0)|`` over components, for translation-invariant systems."""
    if H.external is not None:
        raise ValueError("total momentum is conserved only without an external potential")
    P = trajectory.total_momentum()
    return float(np.max(np.abs(P - P[0])))


def total_momentum_bracket(H: Hamiltonian, state: PhaseState) -> np.ndarray:
    """``{P~_i, H}`` by the chain rule through the deformed coordinates.

    ``{P~_i, X_aj}`` comes from the bracket engine; ``{P~, P} = 0`` removes the
    kinetic part, leaving ``sum_a {P~_i, X_aj} dH/dX_aj``.
    """
    system = H.system
    n = system.n
    X = H.deformed(state.t, state.x, state.p)
    G = H.gradient(X)
    out = np.zeros(3)
    for i in range(3):
        Pt = sum((AffineObservable.momentum(n, a, i) for a in range(n)), AffineObservable.zero(n))
        for a in range(n):
            for j in range(3):
                out[i] += affine_bracket(Pt, deformed_coordinate_observable(system, a, j, state.t)) * G[a, j]
    return out


class ConditionViolated(ValueError):
    pass


def _gamma_for(system: ParticleSystem, tol: float) -> np.ndarray:
    verdict = check_inverse_mass_condition(system, tol)
    if not verdict.holds:
        raise ConditionViolated(
            f"inverse-mass condition m_a theta_a = gamma violated: residual {verdict.max_residual:.3e} > tol {tol:.1e}")
    return verdict.gamma.as_array()


def com_equations_of_motion(system: ParticleSystem, potential, Xc: np.ndarray, Pc_prime: np.ndarray,
                            t: float, mode: str = PAPER, tol: float = 1e-12):
    """Derivatives of ``(X~, P~' = P~/M)`` for a body obeying ``m_a theta_a = gamma``.

    Neither the total mass nor the composition enters.
    """
    mode = normalize_mode(mode)
    gamma = _gamma_for(system, tol)
    return _com_rhs(gamma, system.twist, potential, np.asarray(Xc, float), np.asarray(Pc_prime, float),
                    t, mode)


def _com_rhs(gamma, twist, potential, Xc, Pp, t, mode, r_floor=0.0):
    f = twist_eval(twist, t)
    grad = potential.gradient(Xc, r_floor) if potential is not None else np.zeros(3)
    dX = Pp + f * gamma @ grad
    if mode == REPRESENTATION:
        dX = dX - 0.5 * twist.rate(t) * gamma @ Pp
    return dX, -grad


def integrate_com(system: ParticleSystem, potential, Xc0, Pc_prime0, t0: float, t1: float,
                  dt: float, mode: str = PAPER, tol: float = 1e-12, sample_every: int = 1):
    """RK4 solution of the COM equations; returns ``(times, X~, P~')``."""
    mode = normalize_mode(mode)
    gamma = _gamma_for(system, tol)

    def rhs(t, y):
        dX, dP = _com_rhs(gamma, system.twist, potential, y[:3], y[3:], t, mode)
        return np.concatenate([dX, dP])

    y0 = np.concatenate([np.asarray(Xc0, float), np.asarray(Pc_prime0, float)])
    times, ys, _ = rk4_solve(rhs, t0, y0, t1, dt, sample_every)
    return times, ys[:, :3], ys[:, 3:]


# -- weak equivalence principle -----------------------------------------------

@dataclass
class WepResult:
    max_deviation: float
    times: np.ndarray
    deviations: np.ndarray                    # per time, max over pairs
    masses: tuple = ()
    pairwise: Optional[np.ndarray] = None     # (M, M) max deviation per mass pair
    trajectories: list = field(default_factory=list)


def _single_particle_policy(theta_policy, m):
    if isinstance(theta_policy, InverseMass):
        return theta_policy
    if isinstance(theta_policy, ThetaMatrix):
        return PerParticle([theta_policy])
    raise TypeError("theta policy for a WEP comparison must be InverseMass or a shared ThetaMatrix")


def wep_compare(potential, masses: Sequence[float], theta_policy, twist: TwistFunction, t1: float,
                x0, v0, t0: float = 0.0, dt: float = 1e-3, method: str = "rk4",
                mode: str = PAPER, tolerance: Optional[float] = None) -> WepResult:
    """Integrate one particle per mass from identical ``(x0, P'0 = P0/m)``."""
    masses = tuple(masses)
    if len(masses) < 2:
        raise ValueError("a WEP comparison needs at least two masses")
    x0 = np.asarray(x0, dtype=float).reshape(1, 3)
    v0 = np.asarray(v0, dtype=float).reshape(1, 3)
    trajs = []
    for m in masses:
        system = ParticleSystem((m,), _single_particle_policy(theta_policy, m), twist)
        H = Hamiltonian(system, external=potential)
        state = PhaseState(t0, x0, float(m) * v0)
        trajs.append(integrate(H, state, t1, dt=dt, method=method, mode=mode, tolerance=tolerance))
    times = trajs[0].times
    for tr in trajs[1:]:
        if tr.times.shape != times.shape or np.any(tr.times != times):
            raise IntegrationError("WEP runs produced different sample times; pass a sampling dt")
    k = len(masses)
    pairwise = np.zeros((k, k))
    per_time = np.zeros(times.shape)
    for i in range(k):
        for j in range(i + 1, k):
            dev = np.linalg.norm(trajs[i].X[:, 0] - trajs[j].X[:, 0], axis=1)
            pairwise[i, j] = pairwise[j, i] = dev.max()
            per_time = np.maximum(per_time, dev)
    return WepResult(float(per_time.max()), times, per_time, masses, pairwise, trajs)


def wep_deviation(potential, masses: Sequence[float], theta_policy, twist: TwistFunction, t1: float,
                  x0, v0, **kwargs) -> WepResult:
    """Max over time of ``|X_m1(t) - X_m2(t)|`` for two masses."""
    if len(masses) != 2:
        raise ValueError("wep_deviation compares exactly two masses; use wep_compare for more")
    return wep_compare(potential, masses, theta_policy, twist, t1, x0, v0, **kwargs)
