"""Steady-state surrogate for incompressible pipe flow.

Trains a small network purely from the mass/momentum residuals and the
boundary conditions (no labeled data anywhere), then compares its pressure
and velocity profiles against the analytic steady solution over a sweep of
outlet-pressure controls.

Run from the repository root:

    python demos/01_steady_state_surrogate.py

Writes plots into demos/output/.
"""

import pathlib
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from pincflow import (
    AdamSettings,
    LbfgsSettings,
    NetworkArchitecture,
    TrainingConfig,
    forward,
    mape,
    steady_solve_inc,
    train_steady,
)
from pincflow.config import preset_config

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# The published water-pipe case: 100 m horizontal pipe, reservoir at 2 bar,
# outlet pressure as the control. All quantities enter the network normalized.
cfg = preset_config("table1-incompressible")
system = cfg.fluid_system()
norm = cfg.normalization()

arch = NetworkArchitecture(input_dim=2, n_layers=4, hidden_size=20, activation="tanh")
train_cfg = TrainingConfig(
    n_pde=1000,
    n_bc=200,
    adam=AdamSettings(epochs=200),
    lbfgs=LbfgsSettings(max_iters=2000),
    val_every=100,
)

print("training the steady-state surrogate from residuals only ...")
start = time.perf_counter()
model, report = train_steady(system, norm, arch, train_cfg)
print(f"done in {time.perf_counter() - start:.1f} s, "
      f"final loss {report.last_value('total'):.2e}")

# sweep the control and compare profiles against the exact steady solution
positions = np.linspace(0.0, 1.0, 21)
controls = np.arange(0.1, 0.95, 0.2)

fig, (ax_p, ax_v) = plt.subplots(1, 2, figsize=(11, 4))
all_true_p, all_est_p = [], []
for u in controls:
    profile = steady_solve_inc(system, u, norm)
    p_true = profile.pressure_at(positions * system.length)
    inputs = np.column_stack([positions, np.full_like(positions, u)])
    y = forward(model.arch, model.params, inputs)
    ax_p.plot(positions, p_true / 1e5, "k--", lw=1)
    ax_p.plot(positions, y[:, 0] * norm.p_ref / 1e5, "o", ms=3, label=f"u={u:.1f}")
    ax_v.plot(positions, np.full_like(positions, profile.velocity), "k--", lw=1)
    ax_v.plot(positions, y[:, 1] * norm.v_ref, "o", ms=3)
    all_true_p.append(p_true)
    all_est_p.append(y[:, 0] * norm.p_ref)

ax_p.set_xlabel("normalized position")
ax_p.set_ylabel("pressure [bar]")
ax_p.legend(fontsize=8, title="network")
ax_v.set_xlabel("normalized position")
ax_v.set_ylabel("velocity [m/s]")
fig.suptitle("Steady profiles: network (dots) vs exact solution (dashed)")
fig.tight_layout()
fig.savefig(OUT / "steady_state_profiles.png", dpi=130)

err = mape(np.concatenate(all_true_p), np.concatenate(all_est_p))
print(f"pressure MAPE over the sweep: {err:.3f} %")
print(f"plot saved to {OUT / 'steady_state_profiles.png'}")
