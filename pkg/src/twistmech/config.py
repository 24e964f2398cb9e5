"""YAML scenario files: parsing with line diagnostics, validation, rendering.

Numbers may be written as integers, decimals or ``"p/q"`` rationals. Axes
and theta keys are 1-based in files (``axis: 1``, ``theta: {"12": 0.1}``)
and converted to the library's 0-based indices when objects are built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

import yaml

from .algebra import (
    TWIST_KINDS,
    InverseMass,
    ParticleSystem,
    PerParticle,
    PhaseState,
    ThetaMatrix,
    TwistFunction,
)
from .dynamics import (
    METHODS,
    CentralPotential,
    Hamiltonian,
    Harmonic,
    InverseDistance,
    PairwisePotential,
    Tabulated,
    UniformField,
    normalize_mode,
)

THETA_KEYS = ("12", "13", "23")
SECTIONS = ("particles", "gamma", "twist", "potential", "initial", "run", "wep", "algebra", "outputs")
DEFAULT_OUTPUTS = {
    "timeseries": "trajectory.csv",
    "manifest": "manifest.json",
    "report": "report.json",
    "wep_table": "wep_table.csv",
    "wep_series": "wep_deviations.csv",
    "plot_script": False,
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class ParticleSpec:
    mass: Any
    theta: Optional[tuple] = None   # (t12, t13, t23)


@dataclass
class ScenarioConfig:
    particles: list = field(default_factory=list)
    gamma: Optional[tuple] = None
    twist: dict = field(default_factory=lambda: {"kind": "constant-one", "tau": 1.0})
    potential: dict = field(default_factory=dict)
    initial: Optional[dict] = None
    run: Optional[dict] = None
    wep: Optional[dict] = None
    algebra: dict = field(default_factory=lambda: {"t": 0.0})
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))

    # -- object construction -------------------------------------------------

    def twist_function(self) -> TwistFunction:
        tw = self.twist
        return TwistFunction(tw["kind"], float(tw.get("tau", 1.0)),
                             tuple(tuple(float(c) for c in row) for row in tw.get("coefficients", ())))

    def gamma_matrix(self) -> Optional[ThetaMatrix]:
        return None if self.gamma is None else ThetaMatrix(*self.gamma)

    def system(self) -> ParticleSystem:
        if not self.particles:
            raise ConfigError("this command needs a non-empty 'particles' section")
        masses = tuple(p.mass for p in self.particles)
        if self.gamma is not None:
            policy = InverseMass(self.gamma_matrix())
        else:
            policy = PerParticle([ThetaMatrix(*p.theta) for p in self.particles])
        return ParticleSystem(masses, policy, self.twist_function())

    def external_potential(self):
        return _build_external(self.potential.get("external"))

    def pairwise_potential(self):
        spec = self.potential.get("pairwise")
        return None if spec is None else PairwisePotential(_build_profile(spec))

    def hamiltonian(self) -> Hamiltonian:
        return Hamiltonian(self.system(), self.external_potential(), self.pairwise_potential(),
                           r_floor=float(self.potential.get("r_floor", 1e-9)),
                           free=self.potential.get("external") is None and self.potential.get("pairwise") is None)

    def initial_state(self) -> PhaseState:
        n = len(self.particles)
        init = self.initial or {}
        t0 = float((self.run or {}).get("t0", 0.0))
        x = init.get("x") or [[0.0] * 3] * n
        if "p" in init:
            p = init["p"]
        else:
            v = init.get("v") or [[0.0] * 3] * n
            p = [[float(part.mass) * float(c) for c in row] for part, row in zip(self.particles, v)]
        x = [[float(c) for c in row] for row in x]
        p = [[float(c) for c in row] for row in p]
        if len(x) != n or len(p) != n:
            raise ConfigError(f"initial state must list {n} rows for x and p")
        return PhaseState(t0, x, p)

    def to_dict(self) -> dict:
        out = {"particles": []}
        for p in self.particles:
            entry = {"mass": _render_number(p.mass)}
            if p.theta is not None:
                entry["theta"] = {k: _render_number(v) for k, v in zip(THETA_KEYS, p.theta)}
            out["particles"].append(entry)
        if self.gamma is not None:
            out["gamma"] = {k: _render_number(v) for k, v in zip(THETA_KEYS, self.gamma)}
        out["twist"] = _render_tree(self.twist)
        out["potential"] = _render_tree(self.potential)
        for name in ("initial", "run", "wep"):
            value = getattr(self, name)
            if value is not None:
                out[name] = _render_tree(value)
        if self.wep is not None and "theta" in self.wep:
            out["wep"]["theta"] = {k: _render_number(v) for k, v in zip(THETA_KEYS, self.wep["theta"])}
        out["algebra"] = _render_tree(self.algebra)
        out["outputs"] = _render_tree(self.outputs)
        return out


def _render_number(v):
    if isinstance(v, Fraction):
        return str(v)
    return v


def _render_tree(obj):
    if isinstance(obj, dict):
        return {k: _render_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_render_tree(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def render(config: ScenarioConfig) -> str:
    axis_fixed = _axes_to_file(config.to_dict())
    return yaml.safe_dump(axis_fixed, sort_keys=False, default_flow_style=None)


def _axes_to_file(d: dict) -> dict:
    pot = d.get("potential", {})
    ext = pot.get("external")
    if ext and "axis" in ext:
        ext["axis"] = int(ext["axis"]) + 1
    return d


# -- parsing -----------------------------------------------------------------

def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _line_map(v, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


class _Validator:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path, message):
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        raise ConfigError(f"{_fmt_path(path)}: {message}", self.lines.get(p))

    def number(self, value, path, positive=False, allow_none=False):
        if value is None and allow_none:
            return None
        if isinstance(value, bool):
            self.fail(path, f"expected a number, got {value!r}")
        if isinstance(value, str):
            try:
                value = Fraction(value.strip())
            except (ValueError, ZeroDivisionError):
                self.fail(path, f"expected a number or 'p/q' rational, got {value!r}")
        elif isinstance(value, int):
            pass
        elif isinstance(value, float):
            if not math.isfinite(value):
                self.fail(path, "number must be finite")
        else:
            self.fail(path, f"expected a number, got {type(value).__name__}")
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value}")
        return value

    def mapping(self, value, path, allowed):
        if not isinstance(value, dict):
            self.fail(path, f"expected a mapping, got {type(value).__name__}")
        for k in value:
            if str(k) not in allowed:
                self.fail(tuple(path) + (k,), f"unknown key {k!r}; allowed: {', '.join(allowed)}")
        return value

    def vector(self, value, path, length=3):
        if not isinstance(value, list) or len(value) != length:
            self.fail(path, f"expected a list of {length} numbers")
        return [self.number(v, tuple(path) + (i,)) for i, v in enumerate(value)]

    def theta(self, value, path):
        self.mapping(value, path, THETA_KEYS)
        norm = {str(k): v for k, v in value.items()}
        return tuple(self.number(norm.get(k, 0), tuple(path) + (k,)) for k in THETA_KEYS)


def _fmt_path(path) -> str:
    parts = []
    for p in path:
        parts.append(f"[{p}]" if isinstance(p, int) else (("." if parts else "") + str(p)))
    return "".join(parts) or "<root>"


def parse(text: str) -> ScenarioConfig:
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            data = loader.construct_document(node) if node is not None else None
        finally:
            loader.dispose()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", mark.line + 1 if mark else None) from exc
    if node is None:
        raise ConfigError("empty configuration")
    v = _Validator(_line_map(node))
    v.mapping(data, (), SECTIONS)
    data = {str(k): val for k, val in data.items()}
    cfg = ScenarioConfig()

    gamma = data.get("gamma")
    if gamma is not None:
        cfg.gamma = v.theta(gamma, ("gamma",))

    particles = data.get("particles", [])
    if not isinstance(particles, list):
        v.fail(("particles",), "expected a list of particles")
    for idx, entry in enumerate(particles):
        path = ("particles", idx)
        v.mapping(entry, path, ("mass", "theta"))
        mass = v.number(entry.get("mass"), path + ("mass",), positive=True)
        theta = entry.get("theta")
        if theta == "gamma":
            if cfg.gamma is None:
                v.fail(path + ("theta",), "theta: gamma needs a top-level 'gamma' section")
            theta = None
        elif theta is not None:
            if cfg.gamma is not None:
                v.fail(path + ("theta",), "give either per-particle theta or a global gamma, not both")
            theta = v.theta(theta, path + ("theta",))
        elif cfg.gamma is None:
            v.fail(path, "particle needs 'theta' entries (or declare a global 'gamma')")
        cfg.particles.append(ParticleSpec(mass, theta))

    if "twist" in data:
        tw = v.mapping(data["twist"], ("twist",), ("kind", "tau", "coefficients"))
        kind = tw.get("kind", "constant-one")
        if kind not in TWIST_KINDS:
            v.fail(("twist", "kind"), f"unknown twist kind {kind!r}; expected one of {', '.join(TWIST_KINDS)}")
        out = {"kind": kind, "tau": v.number(tw.get("tau", 1.0), ("twist", "tau"), positive=True)}
        if "coefficients" in tw:
            rows = tw["coefficients"]
            if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
                v.fail(("twist", "coefficients"), "coefficients must be a list of lists")
            out["coefficients"] = [[v.number(c, ("twist", "coefficients", i, j)) for j, c in enumerate(r)]
                                   for i, r in enumerate(rows)]
        if kind.startswith("poly") and not any(any(float(c) for c in r) for r in out.get("coefficients", [])):
            v.fail(("twist",), f"twist kind {kind!r} needs a nonzero coefficient table")
        cfg.twist = out

    if "potential" in data:
        pot = v.mapping(data["potential"], ("potential",), ("external", "pairwise", "r_floor"))
        out = {}
        if pot.get("external") is not None:
            out["external"] = _parse_external(v, pot["external"], ("potential", "external"))
        if pot.get("pairwise") is not None:
            out["pairwise"] = _parse_profile(v, pot["pairwise"], ("potential", "pairwise"), ("profile",))
        if "r_floor" in pot:
            out["r_floor"] = v.number(pot["r_floor"], ("potential", "r_floor"))
        cfg.potential = out

    if "initial" in data:
        init = v.mapping(data["initial"], ("initial",), ("x", "p", "v"))
        if "p" in init and "v" in init:
            v.fail(("initial",), "give initial momenta as either 'p' or 'v' (= p/m), not both")
        out = {}
        for key in ("x", "p", "v"):
            if key in init:
                rows = init[key]
                if not isinstance(rows, list) or len(rows) != len(cfg.particles):
                    v.fail(("initial", key), f"expected one 3-vector per particle ({len(cfg.particles)})")
                out[key] = [v.vector(r, ("initial", key, i)) for i, r in enumerate(rows)]
        cfg.initial = out

    if "run" in data:
        cfg.run = _parse_run(v, data["run"])

    if "wep" in data:
        w = v.mapping(data["wep"], ("wep",), ("masses", "x0", "v0", "theta"))
        masses = w.get("masses")
        if not isinstance(masses, list):
            v.fail(("wep", "masses"), "expected a list of masses")
        out = {"masses": [v.number(m, ("wep", "masses", i), positive=True) for i, m in enumerate(masses)],
               "x0": v.vector(w.get("x0", [0, 0, 0]), ("wep", "x0")),
               "v0": v.vector(w.get("v0", [0, 0, 0]), ("wep", "v0"))}
        if "theta" in w:
            if cfg.gamma is not None:
                v.fail(("wep", "theta"), "give either wep.theta or a global gamma, not both")
            out["theta"] = list(v.theta(w["theta"], ("wep", "theta")))
        elif cfg.gamma is None:
            v.fail(("wep",), "wep needs a shared 'theta' or a global 'gamma'")
        cfg.wep = out

    if "algebra" in data:
        al = v.mapping(data["algebra"], ("algebra",), ("t",))
        cfg.algebra = {"t": v.number(al.get("t", 0.0), ("algebra", "t"))}

    if "outputs" in data:
        o = v.mapping(data["outputs"], ("outputs",), tuple(DEFAULT_OUTPUTS))
        out = dict(DEFAULT_OUTPUTS)
        for k, val in o.items():
            if k == "plot_script":
                if not isinstance(val, bool):
                    v.fail(("outputs", k), "plot_script must be true or false")
            elif not isinstance(val, str) or not val or "/" in val:
                v.fail(("outputs", k), "output entries must be plain file names")
            out[k] = val
        cfg.outputs = out
    return cfg


def _parse_external(v: _Validator, spec, path):
    kind = spec.get("kind") if isinstance(spec, dict) else None
    if kind == "uniform":
        v.mapping(spec, path, ("kind", "g", "axis"))
        axis = spec.get("axis", 1)
        if axis not in (1, 2, 3) or isinstance(axis, bool):
            v.fail(path + ("axis",), f"axis must be 1, 2 or 3, got {axis!r}")
        return {"kind": "uniform", "g": v.number(spec.get("g"), path + ("g",)), "axis": axis - 1}
    if kind == "central":
        out = _parse_profile(v, spec, path, ("kind", "profile", "center"))
        out["kind"] = "central"
        out["center"] = v.vector(spec.get("center", [0, 0, 0]), path + ("center",))
        return out
    v.fail(path, f"external potential kind must be 'uniform' or 'central', got {kind!r}")


_PROFILE_KEYS = {"inverse": ("strength",), "harmonic": ("k", "rest"), "tabulated": ("r", "v")}


def _parse_profile(v: _Validator, spec, path, extra):
    if not isinstance(spec, dict):
        v.fail(path, "expected a mapping")
    prof = spec.get("profile")
    if prof not in _PROFILE_KEYS:
        v.fail(path + ("profile",), f"profile must be one of {', '.join(_PROFILE_KEYS)}, got {prof!r}")
    v.mapping(spec, path, tuple(extra) + _PROFILE_KEYS[prof])
    out = {"profile": prof}
    if prof == "inverse":
        out["strength"] = v.number(spec.get("strength"), path + ("strength",))
    elif prof == "harmonic":
        out["k"] = v.number(spec.get("k"), path + ("k",))
        out["rest"] = v.number(spec.get("rest", 0.0), path + ("rest",))
    else:
        for key in ("r", "v"):
            vals = spec.get(key)
            if not isinstance(vals, list) or len(vals) < 4:
                v.fail(path + (key,), "tabulated profile needs at least 4 samples")
            out[key] = [v.number(x, path + (key, i)) for i, x in enumerate(vals)]
        if len(out["r"]) != len(out["v"]):
            v.fail(path, "tabulated r and v must have the same length")
    return out


def _parse_run(v: _Validator, spec):
    path = ("run",)
    v.mapping(spec, path, ("t0", "t1", "dt", "tolerance", "method", "mode", "sample_every"))
    out = {"t0": v.number(spec.get("t0", 0.0), path + ("t0",)),
           "t1": v.number(spec.get("t1"), path + ("t1",)),
           "method": spec.get("method", "rk4"),
           "mode": spec.get("mode", "paper")}
    if out["t1"] <= out["t0"]:
        v.fail(path + ("t1",), "t1 must be greater than t0")
    if out["method"] not in METHODS:
        v.fail(path + ("method",), f"method must be one of {', '.join(METHODS)}")
    try:
        normalize_mode(out["mode"])
    except ValueError as exc:
        v.fail(path + ("mode",), str(exc))
    if "dt" in spec:
        out["dt"] = v.number(spec["dt"], path + ("dt",), positive=True)
    if "tolerance" in spec:
        out["tolerance"] = v.number(spec["tolerance"], path + ("tolerance",), positive=True)
    if out["method"] == "rk4" and "dt" not in out:
        v.fail(path, "rk4 needs 'dt'")
    if out["method"] == "rk45" and "tolerance" not in out:
        v.fail(path, "rk45 needs 'tolerance'")
    if "sample_every" in spec:
        se = spec["sample_every"]
        if not isinstance(se, int) or isinstance(se, bool) or se < 1:
            v.fail(path + ("sample_every",), "sample_every must be a positive integer")
        out["sample_every"] = se
    return out


def _build_profile(spec: dict):
    prof = spec["profile"]
    if prof == "inverse":
        return InverseDistance(float(spec["strength"]))
    if prof == "harmonic":
        return Harmonic(float(spec["k"]), float(spec.get("rest", 0.0)))
    return Tabulated([float(x) for x in spec["r"]], [float(x) for x in spec["v"]])


def _build_external(spec: Optional[dict]):
    if spec is None:
        return None
    if spec["kind"] == "uniform":
        return UniformField(float(spec["g"]), int(spec["axis"]))
    return CentralPotential(_build_profile(spec), tuple(float(c) for c in spec["center"]))


def load(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def config_echo(config: ScenarioConfig) -> dict:
    """Plain-data form used in manifests (file conventions, 1-based axes)."""
    return _axes_to_file(config.to_dict())
