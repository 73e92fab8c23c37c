"""Long-horizon transient prediction by cascading control windows.

The transient network takes (position, time, previous control, control) and
is trained against the PDE residuals plus an initial-condition match to a
frozen steady-state network.  A long trajectory is then assembled window by
window with no feedback of predictions, so per-window errors never
accumulate.  The result is compared against the finite-difference plant.

    python demos/02_transient_forward_simulation.py
"""

import pathlib
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from pincflow import (
    AdamSettings,
    ControlSchedule,
    LbfgsSettings,
    NetworkArchitecture,
    TrainingConfig,
    fit_compare,
    pinc_forward,
    simulate_plant,
    train_steady,
    train_transient,
)
from pincflow.config import preset_config

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

cfg = preset_config("table1-incompressible")
system = cfg.fluid_system()
norm = cfg.normalization()
grid = cfg.plant_grid()

# reduced budgets so the demo stays in the minutes range; the full published
# sizes live in the preset and are exercised by the acceptance suite
steady_cfg = TrainingConfig(
    n_pde=1000, n_bc=200, adam=AdamSettings(epochs=200),
    lbfgs=LbfgsSettings(max_iters=1500), val_every=100,
)
transient_cfg = TrainingConfig(
    n_pde=4000, n_bc=800, n_ic=400, adam=AdamSettings(epochs=300),
    lbfgs=LbfgsSettings(max_iters=2000), val_every=100,
)

print("stage 1: steady-state network (initial-condition oracle) ...")
ss_model, _ = train_steady(
    system, norm, NetworkArchitecture(input_dim=2, n_layers=4, hidden_size=20), steady_cfg
)
print("stage 2: transient network ...")
start = time.perf_counter()
tr_model, report = train_transient(
    system, norm, NetworkArchitecture(input_dim=4, n_layers=4, hidden_size=20),
    transient_cfg, ss_model,
)
print(f"done in {time.perf_counter() - start:.0f} s, "
      f"final loss {report.last_value('total'):.2e}")

# a staircase of outlet pressures, one 10 s window each
schedule = ControlSchedule(
    initial_control=0.9,
    windows=(0.8, 0.7, 0.6, 0.5, 0.45, 0.4),
    window_seconds=norm.t_ref,
    steps_per_window=21,
)
probe = [0.1]  # the downhole-gauge position

print("simulating the plant and the surrogate on the same schedule ...")
plant_traj = simulate_plant(system, schedule, probe, norm, grid, dt=0.1)
net_traj = pinc_forward(tr_model, schedule, probe, system)

fit_p = fit_compare(plant_traj.pressure[:, 0], net_traj.pressure[:, 0])
fit_v = fit_compare(plant_traj.velocity[:, 0], net_traj.velocity[:, 0])
print(f"fit at the gauge: pressure {fit_p:.2f} %, velocity {fit_v:.2f} %")

fig, (ax_p, ax_v) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
ax_p.plot(plant_traj.times, plant_traj.pressure[:, 0] / 1e5, "k-", label="plant")
ax_p.plot(net_traj.times, net_traj.pressure[:, 0] / 1e5, "C1.", ms=4, label="network")
ax_p.set_ylabel("gauge pressure [bar]")
ax_p.legend()
ax_v.plot(plant_traj.times, plant_traj.velocity[:, 0], "k-")
ax_v.plot(net_traj.times, net_traj.velocity[:, 0], "C1.", ms=4)
ax_v.set_ylabel("velocity [m/s]")
ax_v.set_xlabel("time [s]")
fig.suptitle("Windowed forward simulation vs finite-difference plant")
fig.tight_layout()
fig.savefig(OUT / "transient_forward_simulation.png", dpi=130)
print(f"plot saved to {OUT / 'transient_forward_simulation.png'}")
