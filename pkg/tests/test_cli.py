import json
import math

import pytest

from golden_utils import GOLDEN, GOLDEN_CONFIGS, SCENARIOS, matches_golden, read_csv
from twistmech.cli import main, trajectory_header


def run(tmp_path, *argv):
    return main([argv[0], "--out", str(tmp_path), *argv[1:]])


def write(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("name", GOLDEN_CONFIGS)
def test_algebra_check_golden(tmp_path, name):
    code = run(tmp_path, "algebra-check", "--config", str(SCENARIOS / f"{name}.yaml"))
    assert code == 0
    assert matches_golden(tmp_path / "report.json", GOLDEN / name / "report.json")


@pytest.mark.parametrize("name", GOLDEN_CONFIGS)
def test_simulate_golden(tmp_path, name):
    code = run(tmp_path, "simulate", "--config", str(SCENARIOS / f"{name}.yaml"))
    assert code == 0
    assert matches_golden(tmp_path / "trajectory.csv", GOLDEN / name / "trajectory.csv")
    assert matches_golden(tmp_path / "manifest.json", GOLDEN / name / "manifest.json")


# golden contents checked against hand values, independent of the freeze

def test_golden_identical_four_effective_theta():
    report = json.loads((GOLDEN / "identical_four" / "report.json").read_text())
    assert report["effective_theta"]["12"] == pytest.approx(0.05, rel=1e-15)
    labels = report["labels"]
    m = report["bracket_matrix"]
    assert m[labels.index("X1_1")][labels.index("X2_1")] == pytest.approx(0.2)
    assert m[labels.index("X1_1")][labels.index("X2_2")] == 0
    assert m[labels.index("Xc1")][labels.index("Pc1")] == pytest.approx(1.0)
    assert report["inverse_mass_condition"]["verdict"] == "condition holds"


def test_golden_inverse_mass_body_cross_zero():
    report = json.loads((GOLDEN / "inverse_mass_body" / "report.json").read_text())
    assert report["inverse_mass_condition"]["verdict"] == "condition holds"
    for block in report["cross_brackets"]:
        assert all(abs(v) <= 1e-16 for row in block for v in row)
    f = math.cos(1.5 / 5)
    assert report["effective_theta"]["12"] == pytest.approx(0.4 / 7, rel=1e-15)
    assert report["twist_value"] == pytest.approx(f, rel=1e-15)


def test_golden_fixed_theta_drift():
    rows = read_csv(GOLDEN / "wep_fixed_theta" / "trajectory.csv")
    header, last = rows[0], dict(zip(rows[0], map(float, rows[-1])))
    assert header == trajectory_header(2)
    assert last["t"] == 2.0
    assert last["X1_1"] == pytest.approx(-2.0, abs=1e-10)
    assert last["X2_1"] == pytest.approx(-0.2, abs=1e-9)
    assert last["X2_2"] == pytest.approx(-0.4, abs=1e-9)
    assert last["P1_2"] == pytest.approx(-4.0, abs=1e-12)
    for row in rows[1:]:
        r = dict(zip(header, map(float, row)))
        assert r["X1_1"] == pytest.approx(-0.5 * r["t"] ** 2, abs=1e-10)


def test_golden_manifest_records_mode():
    man = json.loads((GOLDEN / "inverse_mass_body" / "manifest.json").read_text())
    assert man["mode"] == "paper-bracket"
    assert man["integrator"]["integrator"] == "rk4"
    assert man["columns"] == trajectory_header(3)


# -- behaviour ---------------------------------------------------------------------

def test_simulate_rerun_byte_identical(tmp_path):
    cfg = str(SCENARIOS / "inverse_mass_body.yaml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "simulate", "--config", cfg) == 0
    assert run(b, "simulate", "--config", cfg) == 0
    for name in ("trajectory.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_newtonian_parabola(tmp_path):
    cfg = write(tmp_path, "particles: [{mass: 1, theta: {}}]\n"
                          "potential: {external: {kind: uniform, g: 9.8, axis: 1}}\n"
                          "run: {t1: 3, dt: 0.001, sample_every: 100}\n")
    assert run(tmp_path, "simulate", "--config", cfg) == 0
    rows = read_csv(tmp_path / "trajectory.csv")
    for row in rows[1:]:
        t, X1 = float(row[0]), float(row[1])
        assert abs(X1 + 4.9 * t * t) <= 1e-10 * max(1.0, 4.9 * t * t)


def test_simulate_mode_flag(tmp_path, capsys):
    cfg = str(SCENARIOS / "inverse_mass_body.yaml")
    assert run(tmp_path, "simulate", "--config", cfg, "--mode", "representation") == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["mode"] == "representation-consistent"


def test_plot_script_optional(tmp_path):
    text = (SCENARIOS / "wep_fixed_theta.yaml").read_text() + "outputs: {plot_script: true}\n"
    assert run(tmp_path, "simulate", "--config", write(tmp_path, text)) == 0
    script = (tmp_path / "plot_trajectory.py").read_text()
    assert "trajectory.csv" in script
    compile(script, "plot_trajectory.py", "exec")


def test_wep_violation_exit_one(tmp_path, capsys):
    code = run(tmp_path, "wep", "--config", str(SCENARIOS / "wep_fixed_theta.yaml"))
    out = capsys.readouterr().out
    assert code == 1
    assert "WEP violated, max dev = 2.000000e-01" in out
    rows = read_csv(tmp_path / "wep_table.csv")
    assert rows[0] == ["mass_a", "mass_b", "max_deviation"]
    assert float(rows[1][2]) == pytest.approx(0.2, abs=1e-6)
    series = read_csv(tmp_path / "wep_deviations.csv")
    assert float(series[-1][0]) == 2.0


def test_wep_holds_inverse_mass(tmp_path, capsys):
    text = ('gamma: {"12": 0.1}\nparticles: [{mass: 1}]\n'
            "potential: {external: {kind: uniform, g: 1, axis: 1}}\n"
            "run: {t1: 2, dt: 0.001}\nwep: {masses: [1, 2, 5], v0: [0, 1, 0]}\n")
    code = run(tmp_path, "wep", "--config", write(tmp_path, text))
    assert code == 0
    assert "WEP holds within tol" in capsys.readouterr().out
    for row in read_csv(tmp_path / "wep_table.csv")[1:]:
        assert float(row[2]) <= 1e-8


def test_wep_single_mass_usage_error(tmp_path, capsys):
    text = ('gamma: {"12": 0.1}\nparticles: [{mass: 1}]\n'
            "potential: {external: {kind: uniform, g: 1, axis: 1}}\n"
            "run: {t1: 1, dt: 0.01}\nwep: {masses: [1]}\n")
    assert run(tmp_path, "wep", "--config", write(tmp_path, text)) == 2
    assert "usage error" in capsys.readouterr().err


def test_algebra_check_report_contents(tmp_path, capsys):
    assert run(tmp_path, "algebra-check", "--config", str(SCENARIOS / "identical_four.yaml")) == 0
    out = capsys.readouterr().out
    assert "effective theta: 12=0.05" in out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["all_passed"]
    assert len(report["labels"]) == len(report["bracket_matrix"]) == 4 * 6 + 6 + 4 * 6


def test_algebra_check_exact_and_sweep(tmp_path, capsys):
    cfg = str(SCENARIOS / "inverse_mass_body.yaml")
    assert run(tmp_path, "algebra-check", "--config", cfg, "--exact", "--seed", "7") == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["effective_theta"]["12"] == "2/35"
    assert all(block == [["0"] * 3] * 3 for block in report["cross_brackets"])
    assert report["inverse_mass_condition"]["max_residual"] == "0"
    assert len(report["sweep"]) == 20 and all(s["passed"] for s in report["sweep"])
    assert "20/20 systems pass" in capsys.readouterr().out


def test_algebra_check_failure_exit_one(tmp_path):
    # a negative tolerance cannot be met by any check
    cfg = str(SCENARIOS / "identical_four.yaml")
    assert run(tmp_path, "algebra-check", "--config", cfg, "--tol", "-1") == 1


def test_config_error_exit_two(tmp_path, capsys):
    cfg = write(tmp_path, 'gamma: {"12": 0.1}\nparticles:\n  - {mass: 1, theta: {"12": 0.1}}\n')
    assert run(tmp_path, "algebra-check", "--config", cfg) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "not both" in err


def test_missing_file_exit_two(tmp_path):
    assert run(tmp_path, "simulate", "--config", str(tmp_path / "nope.yaml")) == 2


def test_missing_run_section_exit_two(tmp_path):
    cfg = write(tmp_path, "particles: [{mass: 1, theta: {}}]\n")
    assert run(tmp_path, "simulate", "--config", cfg) == 2


def test_integration_error_exit_three(tmp_path, capsys):
    cfg = write(tmp_path, "particles: [{mass: 1, theta: {}}, {mass: 1, theta: {}}]\n"
                          "potential: {pairwise: {profile: inverse, strength: -1}, r_floor: 0.05}\n"
                          "initial: {x: [[-0.5, 0, 0], [0.5, 0, 0]]}\n"
                          "run: {t1: 5, dt: 0.001}\n")
    assert run(tmp_path, "simulate", "--config", cfg) == 3
    err = capsys.readouterr().err
    assert "last valid time" in err


def test_com_split_inverse_mass(tmp_path, capsys):
    cfg = str(SCENARIOS / "inverse_mass_body.yaml")
    assert run(tmp_path, "com-split", "--config", cfg, "--exact") == 0
    assert "relative-momentum coefficients: all zero" in capsys.readouterr().out
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["relative_dependence_vanishes"]


def test_com_split_generic_lists_coefficients(tmp_path, capsys):
    cfg = write(tmp_path, 'particles:\n  - {mass: 1, theta: {"12": "3/10"}}\n  - {mass: 2, theta: {"12": "3/5"}}\n')
    assert run(tmp_path, "com-split", "--config", cfg, "--exact") == 0
    out = capsys.readouterr().out
    assert "X~1 <- dP2_1: 0.075" in out and "X~1 <- dP2_2: -0.075" in out


def test_com_split_theta_zero(tmp_path, capsys):
    cfg = write(tmp_path, "particles: [{mass: 1, theta: {}}, {mass: 3, theta: {}}]\n")
    assert run(tmp_path, "com-split", "--config", cfg) == 0
    assert "X~ = x~ (no momentum dependence)" in capsys.readouterr().out


def test_com_split_single_particle_rejected(tmp_path):
    cfg = write(tmp_path, "particles: [{mass: 1, theta: {}}]\n")
    assert run(tmp_path, "com-split", "--config", cfg) == 2


def test_diagnostics_on_stderr_only(tmp_path, capsys):
    cfg = write(tmp_path, "particles: [{mass: -1, theta: {}}]\n")
    assert run(tmp_path, "simulate", "--config", cfg) == 2
    captured = capsys.readouterr()
    assert captured.out == "" and "config error" in captured.err
