"""Cascaded surrogate inference over control windows.

A trajectory is built window by window: within window k the network is
queried at normalized times spanning [0, T/t_ref] with the input pair
(previous control, current control); the previous control of window k+1 is
simply the control of window k.  No model output is ever fed back, so errors
cannot accumulate across windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkModel, forward
from .physics import FluidSystem


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant normalized outlet-pressure commands.

    ``initial_control`` is the value that produced the pre-simulation steady
    state; ``window_seconds`` defaults to the time reference so the network
    is never queried beyond its trained time range.
    """

    initial_control: float
    windows: tuple[float, ...]
    window_seconds: float
    steps_per_window: int = 21

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(float(u) for u in self.windows))
        controls = (self.initial_control, *self.windows)
        if any(u < 0.0 or u > 1.0 for u in controls):
            raise ValueError("controls must lie in [0, 1]")
        if self.steps_per_window < 2:
            raise ValueError("need at least 2 sample steps per window")
        if self.window_seconds <= 0:
            raise ValueError("window length must be positive")

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def control_pairs(self):
        """(previous, current) control per window."""
        prev = self.initial_control
        for u in self.windows:
            yield prev, u
            prev = u


@dataclass
class Trajectory:
    """Probe time series in physical units, shared by plant and surrogate."""

    fluid: str
    times: np.ndarray          # s, one entry per sample row
    window_index: np.ndarray   # 1-based window of each row
    control: np.ndarray        # normalized control active in that window
    probes: np.ndarray         # normalized positions
    pressure: np.ndarray       # Pa, shape (n_rows, n_probes)
    velocity: np.ndarray       # m/s
    density: np.ndarray | None = None    # kg/m^3 (gas only)
    mass_rate: np.ndarray | None = None  # kg/s (gas only)

    def __post_init__(self):
        n = len(self.times)
        for name in ("pressure", "velocity"):
            if getattr(self, name).shape != (n, len(self.probes)):
                raise ValueError(f"{name} shape mismatch")


def _window_times(schedule: ControlSchedule, t_ref: float):
    m = schedule.steps_per_window
    return np.arange(m) / (m - 1) * (schedule.window_seconds / t_ref)


def pinc_forward(model: NetworkModel, schedule: ControlSchedule, positions,
                 sys: FluidSystem) -> Trajectory:
    """Evaluate the transient network over every (window, step, position).

    All evaluations are independent single forward passes; they are batched
    into one matrix product for speed.
    """
    if model.arch.input_dim != 4:
        raise ValueError("forward simulation needs the transient network")
    positions = np.asarray(positions, dtype=float)
    t_norm = _window_times(schedule, model.norm.t_ref)
    m = schedule.steps_per_window
    n_win = schedule.n_windows

    rows = []
    for prev, current in schedule.control_pairs():
        for t in t_norm:
            for x in positions:
                rows.append((x, t, prev, current))
    inputs = np.asarray(rows)
    outputs = forward(model.arch, model.params, inputs)

    pressure = outputs[:, 0].reshape(n_win, m, len(positions)) * model.norm.p_ref
    velocity = outputs[:, 1].reshape(n_win, m, len(positions)) * model.norm.v_ref

    times = np.concatenate(
        [(k * schedule.window_seconds) + t_norm * model.norm.t_ref for k in range(n_win)]
    )
    window_index = np.repeat(np.arange(1, n_win + 1), m)
    control = np.repeat(np.asarray(schedule.windows), m)

    pressure = pressure.reshape(n_win * m, len(positions))
    velocity = velocity.reshape(n_win * m, len(positions))
    density = mass_rate = None
    if sys.fluid == "ideal_gas":
        # linear EOS map, tolerant of (unphysical) nonpositive predictions
        density = pressure * sys.molar_mass / (sys.gas_constant * sys.temperature)
        mass_rate = density * velocity * sys.area
    return Trajectory(
        fluid=sys.fluid,
        times=times,
        window_index=window_index,
        control=control,
        probes=positions,
        pressure=pressure,
        velocity=velocity,
        density=density,
        mass_rate=mass_rate,
    )


def window_seam_gap(model: NetworkModel, schedule: ControlSchedule, positions,
                    sys: FluidSystem) -> dict[str, np.ndarray]:
    """Normalized output jumps between the end of one window and the start of
    the next, a diagnostic of how well the steady-reset assumption holds."""
    if schedule.n_windows < 2:
        raise ValueError("need at least two windows to measure seams")
    traj = pinc_forward(model, schedule, positions, sys)
    m = schedule.steps_per_window
    p = traj.pressure / model.norm.p_ref
    v = traj.velocity / model.norm.v_ref
    ends = slice(m - 1, None, m)
    starts = slice(m, None, m)
    return {
        "pressure": np.abs(p[ends][:-1] - p[starts]),
        "velocity": np.abs(v[ends][:-1] - v[starts]),
    }
