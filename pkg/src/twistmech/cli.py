"""Command-line front end.

Exit codes: 0 success / all checks pass, 1 check failure, 2 config or usage
error, 3 integration error. Data files go to ``--out``; short summaries to
stdout; diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import InverseMass, ThetaMatrix, bracket_matrix, twist_value
from .checks import identity_checks, labelled_observables, random_system, rational_system
from .composite import (
    check_inverse_mass_condition,
    com_representation,
    cross_bracket,
    effective_theta,
)
from .config import ConfigError, config_echo, load
from .dynamics import IntegrationError, integrate, normalize_mode, wep_compare

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _num(v):
    """JSON form of a scalar: exact values as 'p/q' strings."""
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else str(v.numerator)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _nested(arr):
    arr = np.asarray(arr, dtype=object)
    if arr.ndim == 0:
        return _num(arr.item())
    return [_nested(a) for a in arr]


def _theta_dict(th: ThetaMatrix) -> dict:
    return {"12": _num(th.t12), "13": _num(th.t13), "23": _num(th.t23)}


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _fmt(v: float) -> str:
    return repr(float(v))


# -- algebra-check ---------------------------------------------------------------

def cmd_algebra_check(cfg, args) -> int:
    system = cfg.system()
    exact = args.exact
    if exact:
        system = system.exact()
    tol = args.tol if args.tol is not None else 1e-12
    t = float(cfg.algebra.get("t", 0.0))
    labels, obs = labelled_observables(system, t, exact)
    matrix = bracket_matrix(obs)
    checks = identity_checks(system, t, exact, tol)
    verdict = check_inverse_mass_condition(system, 0 if exact else 1e-12, exact)
    eff = effective_theta(system, exact)
    report = {
        "command": "algebra-check",
        "version": __version__,
        "exact": exact,
        "tolerance": 0 if exact else tol,
        "t": t,
        "twist_value": _num(twist_value(system.twist, t, exact)),
        "masses": [_num(m) for m in system.masses],
        "mass_fractions": [_num(mu) for mu in system.mass_fractions(exact)],
        "effective_theta": _theta_dict(eff),
        "cross_brackets": [_nested(cross_bracket(system, a, t, exact)) for a in range(system.n)],
        "inverse_mass_condition": {
            "verdict": "condition holds" if verdict.holds else "condition does not hold",
            "holds": verdict.holds,
            "gamma": None if verdict.gamma is None else _theta_dict(verdict.gamma),
            "max_residual": _num(verdict.max_residual),
        },
        "checks": [c.to_dict() for c in checks],
        "labels": labels,
        "bracket_matrix": _nested(matrix),
    }
    if args.seed is not None:
        report["sweep"] = _sweep(args.seed, exact, tol)
    all_pass = all(c.passed for c in checks) and all(s["passed"] for s in report.get("sweep", []))
    report["all_passed"] = all_pass
    out = _outdir(args)
    _write_json(out / cfg.outputs["report"], report)
    e = report["effective_theta"]
    print(f"effective theta: 12={e['12']} 13={e['13']} 23={e['23']}")
    print(f"inverse-mass condition: {report['inverse_mass_condition']['verdict']}")
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  (max error {c.max_error:.3e})")
    if "sweep" in report:
        n_ok = sum(s["passed"] for s in report["sweep"])
        print(f"randomized sweep (seed {args.seed}): {n_ok}/{len(report['sweep'])} systems pass")
    return EXIT_OK if all_pass else EXIT_CHECK


def _sweep(seed: int, exact: bool, tol: float, count: int = 20) -> list:
    rng = random.Random(seed)
    rows = []
    for k in range(count):
        system = random_system(rng, inverse_mass=(k % 4 == 3))
        t = rng.uniform(-3.0, 3.0)
        if exact:
            system = rational_system(system)
        checks = identity_checks(system, t, exact, tol)
        rows.append({"n": system.n, "twist": system.twist.kind, "t": t,
                     "passed": all(c.passed for c in checks),
                     "failed": [c.name for c in checks if not c.passed]})
    return rows


# -- simulate ----------------------------------------------------------------------

def trajectory_header(n: int) -> list[str]:
    cols = ["t"]
    for a in range(1, n + 1):
        cols += [f"X{i}_{a}" for i in (1, 2, 3)] + [f"P{i}_{a}" for i in (1, 2, 3)]
    for a in range(1, n + 1):
        cols += [f"x{i}_{a}" for i in (1, 2, 3)]
    for a in range(1, n + 1):
        cols += [f"p{i}_{a}" for i in (1, 2, 3)]
    return cols


def write_trajectory_csv(path: Path, traj) -> None:
    n = traj.x.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(n))
        for k, t in enumerate(traj.times):
            row = [_fmt(t)]
            for a in range(n):
                row += [_fmt(v) for v in traj.X[k, a]] + [_fmt(v) for v in traj.p[k, a]]
            for a in range(n):
                row += [_fmt(v) for v in traj.x[k, a]]
            for a in range(n):
                row += [_fmt(v) for v in traj.p[k, a]]
            w.writerow(row)


PLOT_SCRIPT = '''"""Plot deformed coordinates from {csv}. Requires pandas and matplotlib."""
import matplotlib.pyplot as plt
import pandas as pd

df = pd.read_csv("{csv}")
cols = [c for c in df.columns if c.startswith("X")]
ax = df.plot(x="t", y=cols)
ax.set_xlabel("t")
ax.set_ylabel("deformed coordinate")
plt.savefig("{csv}.png", dpi=150)
'''


def _run_settings(cfg, args):
    if cfg.run is None:
        raise ConfigError("this command needs a 'run' section")
    run = dict(cfg.run)
    mode = normalize_mode(args.mode or run.get("mode", "paper"))
    return run, mode


def cmd_simulate(cfg, args) -> int:
    run, mode = _run_settings(cfg, args)
    H = cfg.hamiltonian()
    state0 = cfg.initial_state()
    try:
        traj = integrate(H, state0, float(run["t1"]),
                         dt=None if "dt" not in run else float(run["dt"]),
                         method=run["method"], mode=mode,
                         tolerance=None if "tolerance" not in run else float(run["tolerance"]),
                         sample_every=run.get("sample_every", 1))
    except IntegrationError as exc:
        print(f"integration aborted: {exc}; last valid time {exc.last_time}", file=sys.stderr)
        return EXIT_RUNTIME
    out = _outdir(args)
    csv_name = cfg.outputs["timeseries"]
    write_trajectory_csv(out / csv_name, traj)
    manifest = {
        "command": "simulate",
        "version": __version__,
        "config": config_echo(cfg),
        "mode": mode,
        "integrator": traj.metadata,
        "samples": int(traj.times.size),
        "columns": trajectory_header(H.system.n),
        "hamiltonian": H.describe(),
    }
    _write_json(out / cfg.outputs["manifest"], manifest)
    if cfg.outputs.get("plot_script"):
        (out / "plot_trajectory.py").write_text(PLOT_SCRIPT.format(csv=csv_name), encoding="utf-8")
    t_end = traj.times[-1]
    print(f"simulated {H.system.n} particle(s) to t={t_end:g} in {traj.metadata['integrator']} "
          f"({mode}); {traj.times.size} samples -> {out / csv_name}")
    print("final X: " + " | ".join(" ".join(f"{v:.12g}" for v in row) for row in traj.X[-1]))
    return EXIT_OK


# -- wep -----------------------------------------------------------------------------

def cmd_wep(cfg, args) -> int:
    if cfg.wep is None:
        raise ConfigError("the wep command needs a 'wep' section")
    masses = [m for m in cfg.wep["masses"]]
    if len(masses) < 2:
        raise UsageError("wep needs at least two masses")
    run, mode = _run_settings(cfg, args)
    potential = cfg.external_potential()
    if potential is None:
        raise ConfigError("the wep command needs potential.external")
    if cfg.gamma is not None:
        policy = InverseMass(cfg.gamma_matrix())
    else:
        policy = ThetaMatrix(*cfg.wep["theta"])
    tol = args.tol if args.tol is not None else 1e-8
    dt = float(run["dt"]) if "dt" in run else None
    try:
        res = wep_compare(potential, [float(m) for m in masses], policy, cfg.twist_function(),
                          float(run["t1"]), cfg.wep["x0"], cfg.wep["v0"], t0=float(run["t0"]),
                          dt=dt, method=run["method"], mode=mode,
                          tolerance=float(run["tolerance"]) if "tolerance" in run else None)
    except IntegrationError as exc:
        print(f"integration aborted: {exc}; last valid time {exc.last_time}", file=sys.stderr)
        return EXIT_RUNTIME
    out = _outdir(args)
    with open(out / cfg.outputs["wep_table"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mass_a", "mass_b", "max_deviation"])
        for i in range(len(masses)):
            for j in range(i + 1, len(masses)):
                w.writerow([_fmt(masses[i]), _fmt(masses[j]), _fmt(res.pairwise[i, j])])
    with open(out / cfg.outputs["wep_series"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "max_deviation"])
        for t, d in zip(res.times, res.deviations):
            w.writerow([_fmt(t), _fmt(d)])
    holds = res.max_deviation <= tol
    for i in range(len(masses)):
        for j in range(i + 1, len(masses)):
            print(f"m={_fmt(masses[i])} vs m={_fmt(masses[j])}: max deviation {res.pairwise[i, j]:.6e}")
    if holds:
        print(f"WEP holds within tol {tol:g} (max dev = {res.max_deviation:.3e})")
    else:
        print(f"WEP violated, max dev = {res.max_deviation:.6e} (tol {tol:g})")
    return EXIT_OK if holds else EXIT_CHECK


# -- com-split -----------------------------------------------------------------------

def cmd_com_split(cfg, args) -> int:
    system = cfg.system()
    if system.n < 2:
        raise UsageError("com-split needs at least two particles")
    exact = args.exact
    if exact:
        system = system.exact()
    t = float(cfg.algebra.get("t", 0.0))
    rep = com_representation(system, t, exact)
    n = system.n
    doc = {
        "command": "com-split",
        "version": __version__,
        "exact": exact,
        "t": t,
        "basis": "X~_i = x~_i + sum_(a,j) c[i][a][j] dP_j^(a) + sum_j d[i][j] P~_j",
        "com_momentum_coeffs": _nested(rep.com_momentum_coeffs),
        "relative_momentum_coeffs": _nested(rep.rel_momentum_coeffs),
        "raw_relative_momentum_coeffs": _nested(rep.raw_rel_momentum_coeffs),
        "relative_dependence_vanishes": rep.relative_dependence_vanishes,
    }
    out = _outdir(args)
    _write_json(out / cfg.outputs["report"], doc)
    if not np.any(rep.com_momentum_coeffs != 0) and not np.any(rep.raw_rel_momentum_coeffs != 0):
        print("X~ = x~ (no momentum dependence)")
    for i in range(3):
        terms = [f"({float(rep.com_momentum_coeffs[i, j]):.12g})*P~{j + 1}" for j in range(3)]
        print(f"X~{i + 1} = x~{i + 1} + " + " + ".join(terms) + " + (relative terms)")
    if rep.relative_dependence_vanishes:
        print("relative-momentum coefficients: all zero")
    else:
        print("relative-momentum coefficients (nonzero):")
        for i in range(3):
            for a in range(n):
                for j in range(3):
                    c = rep.rel_momentum_coeffs[i, a, j]
                    if c != 0:
                        print(f"  X~{i + 1} <- dP{j + 1}_{a + 1}: {float(c):.12g}")
    return EXIT_OK


# -- entry point --------------------------------------------------------------------

def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


COMMANDS = {
    "algebra-check": cmd_algebra_check,
    "simulate": cmd_simulate,
    "wep": cmd_wep,
    "com-split": cmd_com_split,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistmech", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--exact", action="store_true", help="exact rational arithmetic for algebra")
        p.add_argument("--mode", choices=("paper", "representation"), default=None)
        p.add_argument("--seed", type=int, default=None, help="seed for a randomized identity sweep")
        p.add_argument("--tol", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error in {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read or write files: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
