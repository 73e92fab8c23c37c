"""CSV and schedule-file serialization shared by library and CLI.

All numeric output is written with 17 significant digits so repeated runs
diff byte-identically.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .forwardsim import ControlSchedule, Trajectory


class FileFormatError(ValueError):
    """Raised for malformed data files."""


def fmt(value) -> str:
    return format(float(value), ".17g")


TRAJECTORY_BASE_COLUMNS = ("t_seconds", "window_index", "u", "probe_x", "P_pa", "V_ms")
TRAJECTORY_GAS_COLUMNS = TRAJECTORY_BASE_COLUMNS + ("rho_kgm3", "mdot_kgs")


def trajectory_to_csv(traj: Trajectory) -> str:
    gas = traj.fluid == "ideal_gas"
    columns = TRAJECTORY_GAS_COLUMNS if gas else TRAJECTORY_BASE_COLUMNS
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for i, t in enumerate(traj.times):
        for j, x in enumerate(traj.probes):
            row = [
                fmt(t), str(int(traj.window_index[i])), fmt(traj.control[i]),
                fmt(x), fmt(traj.pressure[i, j]), fmt(traj.velocity[i, j]),
            ]
            if gas:
                row += [fmt(traj.density[i, j]), fmt(traj.mass_rate[i, j])]
            writer.writerow(row)
    return out.getvalue()


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trajectory_to_csv(traj))


def read_trajectory(path) -> Trajectory:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileFormatError(f"{path}: empty trajectory file")
    header = tuple(rows[0])
    if header == TRAJECTORY_GAS_COLUMNS:
        gas = True
    elif header == TRAJECTORY_BASE_COLUMNS:
        gas = False
    else:
        raise FileFormatError(f"{path}: unexpected columns {header}")
    body = rows[1:]
    if not body:
        raise FileFormatError(f"{path}: no data rows")

    probes = []
    for row in body:
        x = float(row[3])
        if probes and x == probes[0]:
            break
        probes.append(x)
    n_probes = len(probes)
    if len(body) % n_probes != 0:
        raise FileFormatError(f"{path}: row count not a multiple of probe count")
    n_times = len(body) // n_probes

    def grid(col):
        return np.array([float(r[col]) for r in body]).reshape(n_times, n_probes)

    times = grid(0)[:, 0]
    window = grid(1)[:, 0].astype(int)
    control = grid(2)[:, 0]
    return Trajectory(
        fluid="ideal_gas" if gas else "incompressible",
        times=times,
        window_index=window,
        control=control,
        probes=np.asarray(probes),
        pressure=grid(4),
        velocity=grid(5),
        density=grid(6) if gas else None,
        mass_rate=grid(7) if gas else None,
    )


def read_schedule(path, window_seconds: float, steps_per_window: int) -> ControlSchedule:
    """Schedule file: one normalized control per line, first line the
    pre-simulation control."""
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError as exc:
                raise FileFormatError(f"{path}:{line_no}: not a number: {text!r}") from exc
    if len(values) < 2:
        raise FileFormatError(f"{path}: need an initial control plus at least one window")
    return ControlSchedule(
        initial_control=values[0],
        windows=tuple(values[1:]),
        window_seconds=window_seconds,
        steps_per_window=steps_per_window,
    )


def read_floor_schedule(path):
    """Output-floor schedule: lines of 't_seconds value' pairs."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise FileFormatError(f"{path}:{line_no}: expected 't value'")
            entries.append((float(parts[0]), float(parts[1])))
    return sorted(entries)


def loss_report_to_csv(report) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("epoch", "term", "value"))
    for epoch, term, value in report.to_long_rows():
        writer.writerow((str(int(epoch)), term, fmt(value)))
    return out.getvalue()


def closed_loop_to_csv(history) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ("t_seconds", "u_applied", "y_measured_pa", "y_pred_pa", "bias_pa",
         "solve_status", "objective")
    )
    for i in range(len(history.times)):
        writer.writerow(
            (
                fmt(history.times[i]), fmt(history.u_applied[i]),
                fmt(history.y_measured[i]), fmt(history.y_predicted[i]),
                fmt(history.bias[i]), history.status[i], fmt(history.objective[i]),
            )
        )
    return out.getvalue()


def metrics_to_csv(rows) -> str:
    """rows: iterable of (metric, variable, regime, value_percent)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("metric", "variable", "regime", "value_percent"))
    for metric, variable, regime, value in rows:
        writer.writerow((metric, variable, regime, fmt(value)))
    return out.getvalue()
