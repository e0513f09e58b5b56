"""File formats and the command-line interface."""

import os
import filecmp

import numpy as np
import pytest

from pfsim import Grid, State, make_default_model
from pfsim.cli import main
from pfsim.config import build_problem, parse_config
from pfsim.errors import ConfigError
from pfsim.io import (format_float, read_ledger_csv, read_snapshot,
                      write_ledger_csv, write_snapshot)


BASE_CONFIG = """\
[grid]
dim = 1
cells = 64
lengths = 1.0

[model]
lambda_coeffs = 0.0, 0.5, 0.1

[initial]
kind = constant_noise
psi_mean = 0.0
psi_amp = 0.05
theta_value = 1.0
seed = 42

[stepper]
scheme = implicit
dt = 1e-3

[run]
t_end = 0.02
snapshot_every = 10
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(BASE_CONFIG)
    return str(path)


def test_format_float_round_trips():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = float(rng.standard_normal() * 10.0 ** rng.integers(-300, 300))
        assert float(format_float(x)) == x


def test_snapshot_round_trip_bytes(tmp_path):
    g = Grid.rectangle(5, 3, 1.25, 0.75)
    rng = np.random.default_rng(1)
    s = State(rng.standard_normal(15), rng.uniform(0.5, 2.0, 15), g)
    p1 = tmp_path / "a.txt"
    p2 = tmp_path / "b.txt"
    write_snapshot(p1, s, t=0.125)
    loaded, t = read_snapshot(p1)
    assert t == 0.125
    assert loaded.grid == g
    np.testing.assert_array_equal(loaded.psi, s.psi)
    np.testing.assert_array_equal(loaded.theta, s.theta)
    write_snapshot(p2, loaded, t)
    assert filecmp.cmp(p1, p2, shallow=False)


def test_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a snapshot\n")
    with pytest.raises(ValueError):
        read_snapshot(path)


def test_ledger_csv_round_trip(tmp_path):
    from pfsim import StepperConfig, run
    g = Grid.interval(16, 1.0)
    m = make_default_model((0.0, 0.5, 0.1))
    rng = np.random.default_rng(2)
    s = State(0.05 * rng.standard_normal(16), np.ones(16), g)
    summary = run(s, 0.01, StepperConfig(dt=1e-3), m)
    path = tmp_path / "ledger.csv"
    write_ledger_csv(path, summary.ledger)
    data = read_ledger_csv(path)
    np.testing.assert_array_equal(data["t"], summary.ledger.column("t"))
    np.testing.assert_array_equal(data["energy"], summary.ledger.column("energy"))


def test_parse_config_defaults_and_validation(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG)
    cfg = parse_config(path)
    assert cfg.grid.cells == (64,)
    assert cfg.stepper.dt == 1e-3
    assert cfg.seed == 42

    path.write_text(BASE_CONFIG + "\n[typo_section]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config(path)
    path.write_text(BASE_CONFIG + "\n[steady]\nbogus_key = 1\n")
    with pytest.raises(ConfigError):
        parse_config(path)
    path.write_text(BASE_CONFIG.replace("dt = 1e-3", "dt = -1"))
    with pytest.raises(ConfigError):
        parse_config(path)


def test_build_problem_normalize_enthalpy(tmp_path):
    from pfsim import conserved_f
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG + "\n")
    cfg = parse_config(path)
    cfg.normalize_enthalpy = True
    grid, model, state = build_problem(cfg)
    assert abs(conserved_f(state, model)) <= 1e-12


def test_build_problem_theta_from_enthalpy(tmp_path):
    from pfsim import conserved_f
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG.replace(
        "theta_value = 1.0", "theta_from_enthalpy = -0.7"))
    grid, model, state = build_problem(parse_config(path))
    assert conserved_f(state, model) == pytest.approx(-0.7, abs=1e-12)


def test_cli_simulate_writes_outputs(config_path, tmp_path):
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", config_path, "--out", out,
                 "--quiet"]) == 0
    files = sorted(os.listdir(out))
    assert "ledger.csv" in files
    assert "snap_00000000.txt" in files
    assert "snap_00000020.txt" in files
    data = read_ledger_csv(os.path.join(out, "ledger.csv"))
    assert data["t"].size == 21


def test_cli_determinism_byte_identical(config_path, tmp_path):
    out1 = str(tmp_path / "a")
    out2 = str(tmp_path / "b")
    assert main(["simulate", "--config", config_path, "--out", out1, "--quiet"]) == 0
    assert main(["simulate", "--config", config_path, "--out", out2, "--quiet"]) == 0
    assert filecmp.cmp(os.path.join(out1, "ledger.csv"),
                       os.path.join(out2, "ledger.csv"), shallow=False)


def test_cli_seed_override_changes_output(config_path, tmp_path):
    out1 = str(tmp_path / "a")
    out2 = str(tmp_path / "b")
    assert main(["simulate", "--config", config_path, "--out", out1, "--quiet"]) == 0
    assert main(["simulate", "--config", config_path, "--out", out2,
                 "--seed", "7", "--quiet"]) == 0
    assert not filecmp.cmp(os.path.join(out1, "ledger.csv"),
                           os.path.join(out2, "ledger.csv"), shallow=False)


def test_cli_constant_initial_data_constant_ledger(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG.replace("psi_amp = 0.05", "psi_amp = 0.0"))
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", str(path), "--out", out, "--quiet"]) == 0
    data = read_ledger_csv(os.path.join(out, "ledger.csv"))
    assert np.ptp(data["energy"]) == 0.0
    assert np.ptp(data["mass"]) == 0.0


def test_cli_config_error_exit_2(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[grid]\ncells = banana\n")
    assert main(["simulate", "--config", str(path), "--out",
                 str(tmp_path / "o"), "--quiet"]) == 2
    assert main(["simulate", "--out", str(tmp_path / "o"), "--quiet"]) == 2
    path.write_text("[grid\n")
    assert main(["simulate", "--config", str(path), "--out",
                 str(tmp_path / "o"), "--quiet"]) == 2


def test_cli_solver_failure_exit_1(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("""\
[grid]
cells = 16
lengths = 1.0
[model]
lambda_coeffs = 0.0, 3.0, 0.0
b = linear
[initial]
kind = tanh_interface
psi_amp = 1.0
tanh_width = 0.1
theta_value = 0.01
seed = 0
[stepper]
dt = 0.05
[run]
t_end = 2.0
""")
    assert main(["simulate", "--config", str(path), "--out",
                 str(tmp_path / "o"), "--quiet"]) == 1


def test_cli_steady_outputs(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG + "\n[steady]\nm0 = 0.3\nh0 = -0.9\n")
    out = str(tmp_path / "out")
    assert main(["steady", "--config", str(path), "--out", out, "--quiet"]) == 0
    state, _ = read_snapshot(os.path.join(out, "steady_snapshot.txt"))
    np.testing.assert_allclose(state.psi, 0.3, atol=1e-11)
    scalars = dict(line.split("=", 1) for line in
                   open(os.path.join(out, "steady_scalars.txt")))
    assert float(scalars["theta_inf"]) > 0.0
    assert float(scalars["residual_norm"]) <= 1e-11


def test_cli_sweep_dt(tmp_path, config_path):
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG + "\n[sweep]\nmode = dt\ndt_values = 4e-3, 2e-3\nworkers = 1\n")
    out = str(tmp_path / "sweep")
    assert main(["sweep", "--config", str(path), "--out", out, "--quiet"]) == 0
    assert sorted(os.listdir(out))[:2] == ["point_000", "point_001"]
    manifest = open(os.path.join(out, "sweep_manifest.csv")).read().splitlines()
    assert manifest[0] == "point,directory,seed,params,status"
    assert len(manifest) == 3
    assert all(line.endswith("ok") for line in manifest[1:])
    # per-point configs differ in dt and seed
    cfg0 = parse_config(os.path.join(out, "point_000", "config.ini"))
    cfg1 = parse_config(os.path.join(out, "point_001", "config.ini"))
    assert cfg0.stepper.dt == 4e-3
    assert cfg1.stepper.dt == 2e-3
    assert cfg1.seed == cfg0.seed + 1
    for sub in ("point_000", "point_001"):
        assert os.path.exists(os.path.join(out, sub, "ledger.csv"))


def test_cli_sweep_constraints_concurrent(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG
                    + "\n[sweep]\nmode = constraints\n"
                      "m0_values = 0.0, 0.4\nh0_values = -1.0\nworkers = 2\n")
    out = str(tmp_path / "sweep")
    assert main(["sweep", "--config", str(path), "--out", out, "--quiet"]) == 0
    for i, m0 in enumerate((0.0, 0.4)):
        data = read_ledger_csv(os.path.join(out, f"point_{i:03d}", "ledger.csv"))
        assert data["mass"][0] == pytest.approx(m0, abs=1e-12)
        assert data["enthalpy"][0] == pytest.approx(-1.0, abs=1e-10)


def test_cli_sweep_reproducible(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(BASE_CONFIG + "\n[sweep]\nmode = dt\ndt_values = 2e-3\nworkers = 1\n")
    out1 = str(tmp_path / "s1")
    out2 = str(tmp_path / "s2")
    assert main(["sweep", "--config", str(path), "--out", out1, "--quiet"]) == 0
    assert main(["sweep", "--config", str(path), "--out", out2, "--quiet"]) == 0
    assert filecmp.cmp(os.path.join(out1, "point_000", "ledger.csv"),
                       os.path.join(out2, "point_000", "ledger.csv"),
                       shallow=False)
