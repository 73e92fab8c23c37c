"""Closed-loop predictive control of the gauge pressure.

The transient network serves as the predictor of a constrained controller:
target zero gauge pressure (deliberately unreachable, which maximizes
production), a hard floor on the allowed gauge pressure, and a rate limit on
how fast the predicted output may move.  Measurements from the plant
re-anchor the predictions through an additive output offset each sample.

    python demos/03_predictive_control.py
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
    MpcConfig,
    NetworkArchitecture,
    SurrogatePredictor,
    TrainingConfig,
    closed_loop,
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

print("training the two-stage surrogate (reduced budget) ...")
ss_model, _ = train_steady(
    system, norm, NetworkArchitecture(input_dim=2, n_layers=4, hidden_size=20),
    TrainingConfig(n_pde=1000, n_bc=200, adam=AdamSettings(epochs=200),
                   lbfgs=LbfgsSettings(max_iters=1500), val_every=100),
)
tr_model, _ = train_transient(
    system, norm, NetworkArchitecture(input_dim=4, n_layers=4, hidden_size=20),
    TrainingConfig(n_pde=4000, n_bc=800, n_ic=400, adam=AdamSettings(epochs=300),
                   lbfgs=LbfgsSettings(max_iters=2000), val_every=100),
    ss_model,
)

# 4 bar/min output-rate limit at a 1 s sampling time, normalized by the
# 1 bar pressure reference
mpc_cfg = cfg.mpc_config()
predictor = SurrogatePredictor(tr_model, mpc_cfg)

# the gauge-pressure floor tightens twice during the run
floor_schedule = [(0.0, 0.55), (15.0, 0.45)]

print("running the closed loop ...")
start = time.perf_counter()
history = closed_loop(
    predictor, system, norm, mpc_cfg, grid,
    u_init=0.9, duration_seconds=30.0, dt=0.1, y_min_schedule=floor_schedule,
)
print(f"done in {time.perf_counter() - start:.0f} s")
violations = history.rate_violations(mpc_cfg.output_move_max, norm.p_ref)
print(f"measured rate-bound violations: {violations}")

fig, (ax_y, ax_u) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
t = history.times
ax_y.plot(t, history.y_measured / 1e5, "k.-", label="measured")
ax_y.plot(t, history.y_predicted / 1e5, "C1x", ms=5, label="one-step prediction")
ax_y.step(t, history.y_min, "r--", where="post", label="pressure floor")
ax_y.set_ylabel("gauge pressure [bar]")
ax_y.legend()
ax_u.step(t, history.u_applied, "C0.-", where="post")
ax_u.set_ylabel("applied control")
ax_u.set_xlabel("time [s]")
fig.suptitle("Constrained pressure drawdown under predictive control")
fig.tight_layout()
fig.savefig(OUT / "predictive_control.png", dpi=130)
print(f"plot saved to {OUT / 'predictive_control.png'}")
