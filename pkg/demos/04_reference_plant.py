"""The built-in finite-difference plant for compressible gas flow.

No networks here: this demo exercises the ground-truth solver on the gas
pipeline case.  Steady profiles show the hallmark of compressible pipe
flow (pressure and density fall along the pipe while velocity rises to keep
the mass flow uniform), and a staircase of valve openings shows the
transient response.

    python demos/04_reference_plant.py
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from pincflow import ControlSchedule, face_mass_flow, simulate_plant, steady_solve_comp
from pincflow.config import preset_config

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

cfg = preset_config("table2-compressible")
system = cfg.fluid_system()
norm = cfg.normalization()
grid = cfg.plant_grid()

print("steady states across the control range ...")
fig, axes = plt.subplots(1, 3, figsize=(13, 4))
for u in (0.9, 0.7, 0.5, 0.3):
    state = steady_solve_comp(system, u, norm, grid)
    mdot = face_mass_flow(system, state, grid, u, norm)
    axes[0].plot(grid.centers / system.length, state.pressure / 1e5, label=f"u={u}")
    axes[1].plot(grid.faces / system.length, state.velocity)
    axes[2].plot(grid.faces / system.length, mdot)
    spread = (mdot.max() - mdot.min()) / abs(mdot.mean())
    print(f"  u={u}: mass flow {mdot.mean():7.2f} kg/s, face-to-face spread {spread:.1e}")
axes[0].set_ylabel("pressure [bar]")
axes[0].legend()
axes[1].set_ylabel("velocity [m/s]")
axes[2].set_ylabel("mass flow [kg/s]")
for ax in axes:
    ax.set_xlabel("normalized position")
fig.suptitle("Compressible steady states on the staggered grid")
fig.tight_layout()
fig.savefig(OUT / "plant_steady_states.png", dpi=130)

print("transient staircase (gradual valve opening) ...")
schedule = ControlSchedule(
    initial_control=0.7,
    windows=(0.7, 0.6, 0.5, 0.4, 0.3),
    window_seconds=norm.t_ref,
    steps_per_window=21,
)
probes = [0.075, 0.25, 0.5, 0.75]
traj = simulate_plant(system, schedule, probes, norm, grid, dt=1.0)

fig, (ax_p, ax_v) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
for j, x in enumerate(probes):
    ax_p.plot(traj.times, traj.pressure[:, j] / 1e5, label=f"x~={x}")
    ax_v.plot(traj.times, traj.velocity[:, j])
ax_p.plot(traj.times, traj.control * norm.p_ref / 1e5, "r--", lw=1, label="outlet control")
ax_p.set_ylabel("pressure [bar]")
ax_p.legend(fontsize=8)
ax_v.set_ylabel("velocity [m/s]")
ax_v.set_xlabel("time [s]")
fig.suptitle("Plant response to a staircase of valve openings")
fig.tight_layout()
fig.savefig(OUT / "plant_transient_staircase.png", dpi=130)
print(f"plots saved to {OUT}")
