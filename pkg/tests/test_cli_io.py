import json
from pathlib import Path

import numpy as np
import pytest

from fairaw.cli import main
from fairaw.config import parse_config
from fairaw.equilibrium import equilibrium_report
from fairaw.errors import IoError, ParseError, ValidationError
from fairaw.experiments import RandomStudyConfig, run_convergence_study
from fairaw.export import dumps_report, emit_report, emit_trajectory, read_trajectory, trajectory_header
from fairaw.model import ClosedLoopState, ControllerGains, validate_coupling
from fairaw.simulate import SimulationConfig, integrate

MINIMAL = """schema_version = 1
[system]
B = [[2.0, -1.0], [-0.5, 2.0]]
w = [3.0, 3.0]
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert cfg.gains.beta == 1.0
    assert np.array_equal(cfg.gains.p, [1.0, 1.0]) and np.array_equal(cfg.gains.r, [1.5, 1.5])
    assert np.array_equal(cfg.constant_w, [3.0, 3.0])
    assert np.array_equal(cfg.initial.x, [0.0, 0.0])


def test_non_square_matrix(tmp_path):
    with pytest.raises(ValidationError):
        parse_config(write(tmp_path, MINIMAL.replace("[-0.5, 2.0]]", "[-0.5, 2.0], [0.0, 1.0]]")))


def test_disturbance_exclusivity(tmp_path):
    text = MINIMAL + "[system.schedule]\ntimes = [0.0]\nw = [[1.0, 1.0]]\n"
    with pytest.raises(ValidationError):
        parse_config(write(tmp_path, text))


def test_syntax_error_has_line(tmp_path):
    with pytest.raises(ParseError) as info:
        parse_config(write(tmp_path, MINIMAL + "beta = = 2\n"))
    assert info.value.line == 5


def test_unknown_key_names_field(tmp_path):
    with pytest.raises(ParseError) as info:
        parse_config(write(tmp_path, MINIMAL + "gamma = 2\n"))
    assert info.value.field == "system.gamma"


def test_missing_schema_version(tmp_path):
    with pytest.raises(ParseError):
        parse_config(write(tmp_path, MINIMAL.replace("schema_version = 1\n", "")))


def test_matrix_file_and_schedule(tmp_path):
    (tmp_path / "b.csv").write_text("2,-1\n-0.5,2\n")
    text = ('schema_version = 1\n[system]\nB_file = "b.csv"\np = [2.0, 3.0]\n'
            "[system.schedule]\ntimes = [0.0, 1.0]\nw = [[0.0, 0.0], [1.0, 2.0]]\n")
    cfg = parse_config(write(tmp_path, text))
    assert np.array_equal(cfg.coupling.b, [[2, -1], [-0.5, 2]])
    assert cfg.constant_w is None and np.allclose(cfg.schedule(0.5), [0.5, 1.0])
    assert np.array_equal(cfg.gains.p, [2.0, 3.0])


def _scalar_run(**kw):
    c = validate_coupling([[2.0]])
    g = ControllerGains(np.array([1.0]), np.array([0.5]), 1.0)
    return integrate("coordinated", ClosedLoopState(np.array([0.3]), np.array([-0.2])), [3.0], c, g,
                     SimulationConfig(**kw))


def test_trajectory_round_trip(tmp_path):
    res = _scalar_run(horizon=5.0, stop_at_equilibrium=False)
    path = emit_trajectory(res, tmp_path / "t.csv")
    header, rows = read_trajectory(path)
    assert header == ["t", "x_1", "z_1", "u_1", "sat_u_1", "sum_dz"]
    tr = res.trajectory
    mem = np.column_stack([tr.t, tr.x, tr.z, tr.u, tr.sat_u, tr.sum_dz])
    assert rows.shape == mem.shape
    assert np.max(np.abs(rows - mem)) == 0.0
    assert np.all(np.diff(rows[:, 0]) > 0)


def test_immediate_convergence_writes_one_row(tmp_path):
    c = validate_coupling([[2.0]])
    res = integrate("coordinated", ClosedLoopState.origin(1), [0.0], c, ControllerGains.uniform(1))
    header, rows = read_trajectory(emit_trajectory(res, tmp_path / "t.csv"))
    assert len(header) == 6 and rows.shape == (1, 6) and rows[0, 0] == 0.0


def test_header_layout():
    assert trajectory_header(2) == ["t", "x_1", "x_2", "z_1", "z_2", "u_1", "u_2",
                                    "sat_u_1", "sat_u_2", "sum_dz"]


def test_report_bytes_stable(two_by_two, tmp_path):
    rep = equilibrium_report(two_by_two, np.array([3.0, 3.0]), ControllerGains.uniform(2))
    a = emit_report(rep, tmp_path / "a.json").read_bytes()
    b = emit_report(rep, tmp_path / "b.json").read_bytes()
    assert a == b


def test_study_report_fields():
    rep = run_convergence_study(RandomStudyConfig(n_systems=1, ics_per_system=1, seed=1))
    agg = json.loads(dumps_report(rep))["aggregate"]
    assert "max_distance" in agg and agg["tolerance"] == 0.005


def test_zero_disturbance_report(two_by_two):
    rep = json.loads(dumps_report(equilibrium_report(two_by_two, np.zeros(2), ControllerGains.uniform(2))))
    assert rep["equilibrium"]["x0"] == [0.0, 0.0]
    assert rep["schema"] == "fairaw.equilibrium/1"


def test_unwritable_report(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        emit_report({"a": 1}, blocker / "x.json")


# command line ------------------------------------------------------------


def run_cli(tmp_path, config_text, *args):
    cfg = write(tmp_path, config_text)
    out = tmp_path / "out"
    return main(["--config", str(cfg), "--out", str(out), *args]), out


def test_cli_check(tmp_path, capsys):
    code, out = run_cli(tmp_path, MINIMAL, "check")
    assert code == 0
    data = json.loads((out / "check.json").read_text())
    assert data["m_matrix"] and data["n"] == 2


def test_cli_equilibrium_certify(tmp_path):
    code, out = run_cli(tmp_path, MINIMAL, "equilibrium", "--certify")
    assert code == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["agreement"] is True and abs(cert["gamma_star"] - 11 / 6) <= 1e-8


def test_cli_equilibrium_violated(tmp_path):
    code, _ = run_cli(tmp_path, MINIMAL.replace("w = [3.0, 3.0]", "w = [30.0, -30.0]"), "equilibrium")
    assert code == 1


def test_cli_invalid_matrix(tmp_path):
    code, _ = run_cli(tmp_path, MINIMAL.replace("-0.5, 2.0", "-0.5, 0.4"), "check")
    assert code == 1


def test_cli_parse_error(tmp_path):
    code, _ = run_cli(tmp_path, "schema_version = 1\n[system\n", "check")
    assert code == 1


def test_cli_simulate(tmp_path):
    code, out = run_cli(tmp_path, MINIMAL, "simulate")
    assert code == 0
    sim = json.loads((out / "simulation.json").read_text())
    assert sim["converged"] and sim["distance_to_equilibrium"] <= 0.005
    header, rows = read_trajectory(out / "trajectory.csv")
    assert len(header) == 10 and rows[0, 0] == 0.0


def test_cli_simulate_numerical_failure(tmp_path):
    text = MINIMAL + "[simulation]\ninitial_step = 1e-4\nmin_step = 1e-2\n"
    code, _ = run_cli(tmp_path, text, "simulate")
    assert code == 2


def test_cli_io_failure(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["--config", str(cfg), "--out", str(blocker), "check"]) == 3


def test_cli_study_deterministic(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    for out in (first, second):
        assert main(["--out", str(out), "--seed", "3", "study", "--systems", "2", "--ics", "2"]) == 0
    assert (first / "study.json").read_bytes() == (second / "study.json").read_bytes()


def test_cli_flags_after_subcommand(tmp_path):
    out = tmp_path / "o"
    assert main(["study", "--systems", "1", "--ics", "1", "--out", str(out), "--seed", "5"]) == 0
    assert json.loads((out / "study.json").read_text())["config"]["seed"] == 5


def test_cli_heating(tmp_path):
    out = tmp_path / "h"
    assert main(["--out", str(out), "heating"]) == 0
    summary = json.loads((out / "heating.json").read_text())
    assert summary["worst_coordinated"] < summary["worst_uncoordinated"]
    header, _ = read_trajectory(out / "heating_uncoordinated.csv")
    assert header[-1] == "sum_dz" and len(header) == 22
