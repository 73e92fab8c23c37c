"""Command-line interface, configuration, and file formats."""

import subprocess
import sys

import numpy as np
import pytest

from pincflow.config import ConfigError, RunConfig, preset_config
from pincflow.fileio import (
    FileFormatError,
    read_schedule,
    read_trajectory,
    write_trajectory,
)
from pincflow.forwardsim import ControlSchedule, Trajectory

TINY_TRAIN = """
[run]
preset = table1-incompressible

[training]
steady_n_pde = 150
steady_n_bc = 40
steady_adam_epochs = 40
steady_lbfgs_max_iters = 120
transient_n_pde = 250
transient_n_bc = 60
transient_n_ic = 40
transient_adam_epochs = 40
transient_lbfgs_max_iters = 80
val_every = 50
"""


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "pincflow.cli", *map(str, args)],
        capture_output=True,
        text=True,
    )


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    (path / "config.ini").write_text(TINY_TRAIN, encoding="utf-8")
    (path / "schedule.txt").write_text("0.9\n0.7\n0.5\n", encoding="utf-8")
    return path


# configuration -----------------------------------------------------------------------


def test_presets_expand_published_parameters():
    cfg = preset_config("table1-incompressible")
    sys_ = cfg.fluid_system()
    assert sys_.diameter == 0.1 and sys_.viscosity == 1e-3
    assert sys_.reservoir_pressure == 2e5 and sys_.ipr_velocity == 1e-5
    assert sys_.friction_model == "blasius" and sys_.density == 1000.0
    norm = cfg.normalization()
    assert (norm.t_ref, norm.x_ref, norm.p_ref, norm.v_ref) == (10.0, 100.0, 1e5, 1.0)
    arch = cfg.architecture("steady")
    assert (arch.n_layers, arch.hidden_size, arch.activation) == (4, 20, "tanh")
    train = cfg.training_config("steady")
    assert (train.n_pde, train.n_bc, train.adam.epochs) == (1000, 200, 200)
    train_t = cfg.training_config("transient")
    assert (train_t.n_pde, train_t.n_bc, train_t.n_ic, train_t.adam.epochs) == (
        10000, 2000, 1000, 300,
    )
    mpc = cfg.mpc_config()
    assert (mpc.prediction_horizon, mpc.control_horizon, mpc.sampling_seconds) == (10, 2, 1.0)

    gas = preset_config("table2-compressible")
    gsys = gas.fluid_system()
    assert gsys.ipr_mass == 5e-4 and gsys.reservoir_pressure == 5e6
    assert gsys.friction_model == "swamee_jain"
    arch_t = gas.architecture("transient")
    assert (arch_t.n_layers, arch_t.hidden_size) == (8, 93)
    assert arch_t.activation == "swish" and arch_t.skip_connections
    train_s = gas.training_config("steady")
    assert (train_s.n_pde, train_s.n_bc, train_s.adam.epochs) == (8723, 434, 1095)
    train_t = gas.training_config("transient")
    assert (train_t.n_pde, train_t.n_bc, train_t.n_ic, train_t.adam.epochs) == (
        4608, 1449, 1213, 699,
    )
    assert gas.seed_sweep() == 5


def test_config_roundtrip_is_fixed_point():
    cfg = RunConfig.from_text(TINY_TRAIN)
    text = cfg.to_text()
    again = RunConfig.from_text(text)
    assert again.raw == cfg.raw
    assert again.to_text() == text


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_text("[system]\nwarp_drive = 9\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[warp]\nx = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("[run]\npreset = table9-plasma\n")


def test_override_wins_over_preset():
    cfg = RunConfig.from_text(TINY_TRAIN)
    assert cfg.training_config("steady").n_pde == 150
    assert cfg.fluid_system().diameter == 0.1  # untouched preset value


# schedule and trajectory files ----------------------------------------------------------


def test_schedule_file_roundtrip(tmp_path):
    path = tmp_path / "schedule.txt"
    path.write_text("0.9\n\n0.7\n0.5\n", encoding="utf-8")
    schedule = read_schedule(path, window_seconds=10.0, steps_per_window=4)
    assert schedule.initial_control == 0.9
    assert schedule.windows == (0.7, 0.5)
    bad = tmp_path / "bad.txt"
    bad.write_text("0.9\n", encoding="utf-8")
    with pytest.raises(FileFormatError):
        read_schedule(bad, 10.0, 4)


def test_trajectory_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    traj = Trajectory(
        fluid="ideal_gas",
        times=np.array([0.0, 5.0, 10.0]),
        window_index=np.array([1, 1, 2]),
        control=np.array([0.7, 0.7, 0.6]),
        probes=np.array([0.25, 0.75]),
        pressure=rng.random((3, 2)) * 5e6,
        velocity=rng.random((3, 2)) * 50,
        density=rng.random((3, 2)) * 60,
        mass_rate=rng.random((3, 2)) * 100,
    )
    path = tmp_path / "traj.csv"
    write_trajectory(traj, path)
    back = read_trajectory(path)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.pressure, traj.pressure)
    assert np.array_equal(back.mass_rate, traj.mass_rate)
    assert np.array_equal(back.window_index, traj.window_index)


# commands -------------------------------------------------------------------------------


@pytest.mark.slow
def test_cli_train_simulate_evaluate_flow(workdir):
    train = run_cli(
        "train", "--config", workdir / "config.ini", "--regime", "steady",
        "--output", workdir / "run1",
    )
    assert train.returncode == 0, train.stderr
    model_path = workdir / "run1" / "model_steady.json"
    assert model_path.exists()
    assert (workdir / "run1" / "loss_steady.csv").exists()
    assert '"input_dim": 2' in model_path.read_text()

    transient = run_cli(
        "train", "--config", workdir / "config.ini", "--regime", "transient",
        "--ss-model", model_path, "--output", workdir / "run1",
    )
    assert transient.returncode == 0, transient.stderr
    transient_path = workdir / "run1" / "model_transient.json"
    assert '"input_dim": 4' in transient_path.read_text()

    plant = run_cli(
        "simulate", "--config", workdir / "config.ini", "--source", "plant",
        "--schedule", workdir / "schedule.txt", "--probes", "0.1,0.5",
        "--output", workdir / "run1",
    )
    assert plant.returncode == 0, plant.stderr
    surrogate = run_cli(
        "simulate", "--config", workdir / "config.ini", "--source", "pinc",
        "--schedule", workdir / "schedule.txt", "--probes", "0.1,0.5",
        "--model", transient_path, "--output", workdir / "run1",
    )
    assert surrogate.returncode == 0, surrogate.stderr

    metrics = run_cli(
        "evaluate", "--true", workdir / "run1" / "trajectory_plant.csv",
        "--est", workdir / "run1" / "trajectory_pinc.csv", "--output", workdir / "run1",
    )
    assert metrics.returncode == 0, metrics.stderr
    assert (workdir / "run1" / "metrics.csv").exists()

    self_eval = run_cli(
        "evaluate", "--true", workdir / "run1" / "trajectory_plant.csv",
        "--est", workdir / "run1" / "trajectory_plant.csv", "--output", workdir / "run2",
    )
    assert self_eval.returncode == 0
    body = (workdir / "run2" / "metrics.csv").read_text().splitlines()
    values = {line.split(",")[0] + ":" + line.split(",")[1]: float(line.split(",")[3])
              for line in body[1:]}
    assert values["mape:pressure"] == 0.0
    assert values["fit_mean:pressure"] == 100.0


@pytest.mark.slow
def test_cli_training_is_deterministic(workdir):
    fast_cfg = workdir / "fast.ini"
    fast_cfg.write_text(
        TINY_TRAIN.replace("steady_n_pde = 150", "steady_n_pde = 80")
        .replace("steady_adam_epochs = 40", "steady_adam_epochs = 20")
        .replace("steady_lbfgs_max_iters = 120", "steady_lbfgs_max_iters = 40"),
        encoding="utf-8",
    )
    for name in ("det1", "det2"):
        result = run_cli(
            "--threads", 1, "train", "--config", fast_cfg, "--regime", "steady",
            "--output", workdir / name,
        )
        assert result.returncode == 0, result.stderr
    first = (workdir / "det1" / "model_steady.json").read_bytes()
    second = (workdir / "det2" / "model_steady.json").read_bytes()
    assert first == second


def test_cli_transient_without_ss_model_is_config_error(workdir):
    result = run_cli(
        "train", "--config", workdir / "config.ini", "--regime", "transient",
        "--output", workdir / "none",
    )
    assert result.returncode == 1
    assert "ss-model" in result.stderr


def test_cli_unknown_preset_is_config_error(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\npreset = table9-plasma\n", encoding="utf-8")
    result = run_cli("train", "--config", cfg, "--regime", "steady")
    assert result.returncode == 1


def test_cli_evaluate_rejects_misaligned_files(tmp_path):
    times = np.array([0.0, 1.0, 2.0])
    base = dict(
        fluid="incompressible", window_index=np.ones(3, dtype=int),
        control=np.full(3, 0.5), probes=np.array([0.1]),
    )
    a = Trajectory(times=times, pressure=np.ones((3, 1)), velocity=np.ones((3, 1)), **base)
    b = Trajectory(
        times=times[:2], pressure=np.ones((2, 1)), velocity=np.ones((2, 1)),
        fluid="incompressible", window_index=np.ones(2, dtype=int),
        control=np.full(2, 0.5), probes=np.array([0.1]),
    )
    write_trajectory(a, tmp_path / "a.csv")
    write_trajectory(b, tmp_path / "b.csv")
    result = run_cli("evaluate", "--true", tmp_path / "a.csv", "--est", tmp_path / "b.csv")
    assert result.returncode == 1
