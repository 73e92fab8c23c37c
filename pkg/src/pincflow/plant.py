"""Finite-difference reference solvers for the pipe-flow systems.

The compressible plant discretizes the conservation equations on a staggered
grid: pressures and densities live at cell centers, velocities at cell
faces.  Time stepping is backward Euler with first-order upwind convective
fluxes; the coupled nonlinear update is solved by a damped Newton method
with a numerical Jacobian.  Incompressible flow collapses to one implicit
scalar velocity equation with an exactly linear pressure profile.

All controls are normalized: the applied outlet pressure is ``u * p_ref``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .forwardsim import ControlSchedule, Trajectory
from .physics import FluidSystem, NormalizationRefs, eos_density, friction_factor, reynolds


class PlantError(RuntimeError):
    """Raised when a nonlinear solve fails to converge."""


@dataclass(frozen=True)
class PlantGrid:
    """Staggered 1-D grid: n_cells centers plus n_cells + 1 faces."""

    n_cells: int
    length: float

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("need at least 2 cells")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dx


@dataclass
class PlantState:
    """Grid fields at one time level."""

    pressure: np.ndarray   # Pa at cell centers
    density: np.ndarray    # kg/m^3 at cell centers
    velocity: np.ndarray   # m/s at faces
    time: float = 0.0

    def copy(self) -> "PlantState":
        return PlantState(
            self.pressure.copy(), self.density.copy(), self.velocity.copy(), self.time
        )


# generic damped Newton -----------------------------------------------------------


def _numerical_jacobian(residual_fn, z, r0):
    n = z.size
    jac = np.empty((n, n))
    for j in range(n):
        h = 1e-7 * (1.0 + abs(z[j]))
        zp = z.copy()
        zp[j] += h
        jac[:, j] = (residual_fn(zp) - r0) / h
    return jac


def damped_newton(residual_fn, z0, tol, max_iters=60, label="newton"):
    """Newton iteration with step halving on the residual infinity norm."""
    z = np.asarray(z0, dtype=float).copy()
    r = residual_fn(z)
    norm = np.max(np.abs(r))
    for _ in range(max_iters):
        if norm <= tol:
            return z
        jac = _numerical_jacobian(residual_fn, z, r)
        try:
            dz = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise PlantError(f"{label}: singular Jacobian") from exc
        step = 1.0
        while step >= 2.0**-30:
            z_new = z + step * dz
            r_new = residual_fn(z_new)
            norm_new = np.max(np.abs(r_new))
            if norm_new < norm or norm_new <= tol:
                z, r, norm = z_new, r_new, norm_new
                break
            step *= 0.5
        else:
            raise PlantError(f"{label}: line search stalled at residual {norm:.3e}")
    if norm <= tol:
        return z
    raise PlantError(f"{label}: no convergence, residual {norm:.3e}")


# incompressible -------------------------------------------------------------------


@dataclass(frozen=True)
class IncompressibleSteady:
    """Uniform velocity and the exactly linear pressure profile."""

    velocity: float
    p_inlet: float
    p_outlet: float
    length: float

    def pressure_at(self, x):
        frac = np.asarray(x, dtype=float) / self.length
        return self.p_inlet + (self.p_outlet - self.p_inlet) * frac


def _friction_gravity_gradient(sys: FluidSystem, velocity: float) -> float:
    """Static pressure gradient from friction and gravity, Pa/m."""
    re = reynolds(sys.density, velocity, sys)
    fr = friction_factor(re, sys)
    grav = sys.density * sys.gravity * np.sin(sys.inclination)
    fric = 0.5 * sys.density * fr * abs(velocity) * velocity / sys.diameter
    return grav + fric


def steady_solve_inc(sys: FluidSystem, u: float, norm: NormalizationRefs,
                     tol=1e-12, max_iters=10000) -> IncompressibleSteady:
    """Damped fixed-point solve of the inflow/pressure-drop balance."""
    p_out = u * norm.p_ref
    k = sys.ipr_velocity
    v = 0.0
    relax = 0.5
    for _ in range(max_iters):
        balance = sys.reservoir_pressure - p_out - _friction_gravity_gradient(sys, v) * sys.length
        v_new = (1.0 - relax) * v + relax * k * balance
        if abs(v_new - v) <= tol:
            v = v_new
            break
        v = v_new
    else:
        raise PlantError("incompressible steady fixed point did not converge")
    p_in = sys.reservoir_pressure - v / k
    return IncompressibleSteady(velocity=v, p_inlet=p_in, p_outlet=p_out, length=sys.length)


def _inc_state(sys, grid, profile: IncompressibleSteady, t=0.0) -> PlantState:
    pressure = profile.pressure_at(grid.centers)
    return PlantState(
        pressure=pressure,
        density=np.full(grid.n_cells, sys.density, dtype=float),
        velocity=np.full(grid.n_cells + 1, profile.velocity, dtype=float),
        time=t,
    )


def _inc_step(sys, state: PlantState, u, dt, norm, grid) -> PlantState:
    """Backward-Euler update of the single implicit velocity equation."""
    p_out = u * norm.p_ref
    v_old = float(state.velocity[0])
    k, rho, length = sys.ipr_velocity, sys.density, sys.length

    def residual(z):
        v = z[0]
        rhs = (
            (sys.reservoir_pressure - v / k - p_out) / (rho * length)
            - _friction_gravity_gradient(sys, v) / rho
        )
        return np.array([v - v_old - dt * rhs])

    v_new = damped_newton(residual, np.array([v_old]), tol=1e-13, label="incompressible step")[0]
    accel = rho * (v_new - v_old) / dt
    gradient = accel + _friction_gravity_gradient(sys, v_new)
    p_in = p_out + gradient * length
    profile = IncompressibleSteady(v_new, p_in, p_out, length)
    return _inc_state(sys, grid, profile, t=state.time + dt)


# compressible ---------------------------------------------------------------------


def _gas_density(sys, pressure):
    return pressure * sys.molar_mass / (sys.gas_constant * sys.temperature)


class _CompressibleResiduals:
    """Scaled residual assembly for the staggered compressible system.

    Unknowns are packed as (n cell pressures, n+1 face velocities), both in
    normalized units.  With ``dt`` None the time terms are dropped and the
    steady system is produced.
    """

    def __init__(self, sys, norm, grid, u, dt=None, old: PlantState | None = None):
        self.sys = sys
        self.norm = norm
        self.grid = grid
        self.p_out = u * norm.p_ref
        self.dt = dt
        if dt is not None:
            rho_f_old = self._face_density(old.pressure, old.density)
            self.mom_old = rho_f_old * old.velocity
            self.rho_old = old.density

    def unpack(self, z):
        n = self.grid.n_cells
        return z[:n] * self.norm.p_ref, z[n:] * self.norm.v_ref

    def _face_density(self, pressure, density):
        """Density at the n+1 faces: interior averages, boundary closures."""
        sys = self.sys
        p_in = 1.5 * pressure[0] - 0.5 * pressure[1]
        rho = np.empty(len(density) + 1)
        rho[0] = _gas_density(sys, p_in)
        rho[1:-1] = 0.5 * (density[:-1] + density[1:])
        rho[-1] = _gas_density(sys, self.p_out)
        return rho

    def __call__(self, z):
        sys, norm, grid = self.sys, self.norm, self.grid
        n, dx = grid.n_cells, grid.dx
        pressure, velocity = self.unpack(z)
        density = _gas_density(sys, pressure)

        p_in = 1.5 * pressure[0] - 0.5 * pressure[1]
        rho_in = _gas_density(sys, p_in)

        # mass flux per face, upwind density
        flux = np.empty(n + 1)
        flux[0] = rho_in * velocity[0]
        up = np.where(velocity[1:n] >= 0, density[:-1], density[1:])
        flux[1:n] = up * velocity[1:n]
        rho_ghost = _gas_density(sys, 2.0 * self.p_out - pressure[-1])
        flux[n] = (density[-1] if velocity[n] >= 0 else rho_ghost) * velocity[n]

        # cell momentum flux with donor-cell velocity
        v_center = 0.5 * (velocity[:-1] + velocity[1:])
        v_donor = np.where(v_center >= 0, velocity[:-1], velocity[1:])
        mom_flux = density * v_center * v_donor

        rho_face = self._face_density(pressure, density)
        re = reynolds(rho_face, velocity, sys)
        fric = friction_factor(re, sys)
        drag = 0.5 * rho_face * fric * np.abs(velocity) * velocity / sys.diameter
        grav = rho_face * sys.gravity * np.sin(sys.inclination)

        mass = np.empty(n)
        momentum = np.empty(n + 1)

        if self.dt is None:
            mass[:] = (flux[1:] - flux[:-1]) / (norm.rho_ref * norm.v_ref)
        else:
            mass[:] = (
                (density - self.rho_old) / self.dt + (flux[1:] - flux[:-1]) / dx
            ) * (norm.x_ref / (norm.rho_ref * norm.v_ref))

        # inlet: inflow-performance relation replaces the momentum balance
        drawdown = sys.reservoir_pressure - p_in
        momentum[0] = (rho_in * velocity[0] * sys.area - sys.ipr_mass * drawdown) / (
            norm.rho_ref * norm.v_ref * sys.area
        )

        conv = np.empty(n + 1)
        conv[1:n] = (mom_flux[1:] - mom_flux[:-1]) / dx
        conv[n] = (mom_flux[-1] - mom_flux[-2]) / dx  # one-sided at the outflow face
        dpdx = np.empty(n + 1)
        dpdx[1:n] = (pressure[1:] - pressure[:-1]) / dx
        dpdx[n] = 2.0 * (self.p_out - pressure[-1]) / dx  # ghost-cell outlet closure

        interior = slice(1, n + 1)
        momentum[interior] = conv[interior] + dpdx[interior] + grav[interior] + drag[interior]
        if self.dt is not None:
            rate = (rho_face * velocity - self.mom_old) / self.dt
            momentum[interior] += rate[interior]
        momentum[interior] *= norm.x_ref / norm.p_ref

        return np.concatenate([mass, momentum])


def _pack_state(state: PlantState, norm) -> np.ndarray:
    return np.concatenate([state.pressure / norm.p_ref, state.velocity / norm.v_ref])


def _unpack_state(sys, z, grid, norm, t) -> PlantState:
    n = grid.n_cells
    pressure = z[:n] * norm.p_ref
    if np.any(pressure <= 0):
        raise PlantError("solver produced nonpositive pressure (unphysical state)")
    return PlantState(
        pressure=pressure,
        density=eos_density(pressure, sys),
        velocity=z[n:] * norm.v_ref,
        time=t,
    )


def steady_solve_comp(sys: FluidSystem, u: float, norm: NormalizationRefs,
                      grid: PlantGrid, tol=1e-10) -> PlantState:
    """Steady staggered system via damped Newton with continuation in u.

    Starts from the exact no-flow solution at outlet pressure = reservoir
    pressure and walks the control down to the target, halving the step when
    Newton stalls (steep drawdowns are strongly nonlinear).
    """
    if not 0 < u <= 1:
        raise ValueError("compressible steady solve needs u in (0, 1]")
    u_start = sys.reservoir_pressure / norm.p_ref
    if u > u_start:
        raise PlantError("outlet above reservoir pressure: backflow steady state unsupported")
    # exact no-flow solution at outlet pressure = reservoir pressure
    z = np.concatenate([np.full(grid.n_cells, u_start), np.zeros(grid.n_cells + 1)])
    last_u = u_start
    step = 0.1
    while last_u > u:
        trial = max(u, last_u - step)
        try:
            z_trial = damped_newton(
                _CompressibleResiduals(sys, norm, grid, trial), z, tol,
                label=f"steady gas u={trial:.4f}",
            )
        except PlantError:
            step *= 0.5
            if step < 1e-4:
                raise PlantError(f"steady gas solve: continuation stalled before u={u}")
            continue
        z, last_u = z_trial, trial
    return _unpack_state(sys, z, grid, norm, t=0.0)


def steady_solve(sys, u, norm, grid) -> PlantState:
    if sys.fluid == "incompressible":
        return _inc_state(sys, grid, steady_solve_inc(sys, u, norm))
    return steady_solve_comp(sys, u, norm, grid)


def step_transient(sys: FluidSystem, state: PlantState, u: float, dt: float,
                   norm: NormalizationRefs, grid: PlantGrid, tol=1e-8,
                   _depth: int = 0) -> PlantState:
    """One backward-Euler step; on Newton failure the step is halved (up to
    six times) and retried as two substeps."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if sys.fluid == "incompressible":
        return _inc_step(sys, state, u, dt, norm, grid)
    residual = _CompressibleResiduals(sys, norm, grid, u, dt=dt, old=state)
    try:
        z = damped_newton(residual, _pack_state(state, norm), tol, label="gas step")
    except PlantError:
        if _depth >= 6:
            raise
        half = step_transient(sys, state, u, dt / 2, norm, grid, tol, _depth + 1)
        return step_transient(sys, half, u, dt / 2, norm, grid, tol, _depth + 1)
    return _unpack_state(sys, z, grid, norm, t=state.time + dt)


def face_mass_flow(sys: FluidSystem, state: PlantState, grid: PlantGrid, u: float,
                   norm: NormalizationRefs) -> np.ndarray:
    """Mass flow rate through every face, kg/s, using the scheme's closures."""
    if sys.fluid == "incompressible":
        return sys.density * state.velocity * sys.area
    helper = _CompressibleResiduals(sys, norm, grid, u)
    n = grid.n_cells
    p, v = state.pressure, state.velocity
    rho = state.density
    p_in = 1.5 * p[0] - 0.5 * p[1]
    flux = np.empty(n + 1)
    flux[0] = _gas_density(sys, p_in) * v[0]
    up = np.where(v[1:n] >= 0, rho[:-1], rho[1:])
    flux[1:n] = up * v[1:n]
    rho_ghost = _gas_density(sys, 2.0 * helper.p_out - p[-1])
    flux[n] = (rho[-1] if v[n] >= 0 else rho_ghost) * v[n]
    return flux * sys.area


# probing and trajectories ----------------------------------------------------------


def _interp_extrap(xq, xs, ys):
    """Linear interpolation that extends the end segments past the nodes."""
    xq = np.asarray(xq, dtype=float)
    out = np.interp(xq, xs, ys)
    lo = xq < xs[0]
    hi = xq > xs[-1]
    if np.any(lo):
        slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        out = np.where(lo, ys[0] + slope * (xq - xs[0]), out)
    if np.any(hi):
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        out = np.where(hi, ys[-1] + slope * (xq - xs[-1]), out)
    return out


def probe_state(sys: FluidSystem, state: PlantState, probes, grid: PlantGrid):
    """Pressure/velocity (and gas density, mass rate) at normalized positions."""
    x = np.asarray(probes, dtype=float) * grid.length
    pressure = _interp_extrap(x, grid.centers, state.pressure)
    velocity = np.interp(x, grid.faces, state.velocity)
    if sys.fluid == "incompressible":
        return pressure, velocity, None, None
    density = _interp_extrap(x, grid.centers, state.density)
    return pressure, velocity, density, density * velocity * sys.area


def simulate_plant(sys: FluidSystem, schedule: ControlSchedule, probes,
                   norm: NormalizationRefs, grid: PlantGrid, dt: float | None = None
                   ) -> Trajectory:
    """March the plant through the control windows, sampling like the surrogate.

    The plant starts at the steady state of the schedule's initial control
    and records ``steps_per_window`` snapshots per window (window boundaries
    are recorded twice, once in each window, matching the surrogate's rows).
    """
    window = schedule.window_seconds
    record_dt = window / (schedule.steps_per_window - 1)
    if dt is None:
        dt = window / 100.0
    substeps = record_dt / dt
    if abs(substeps - round(substeps)) > 1e-9 or round(substeps) < 1:
        raise ValueError("dt must divide the recording interval")
    substeps = round(substeps)

    probes = np.asarray(probes, dtype=float)
    state = steady_solve(sys, schedule.initial_control, norm, grid)

    times, windows, controls, rows = [], [], [], []

    def record(k, u, state):
        times.append(state.time)
        windows.append(k)
        controls.append(u)
        rows.append(probe_state(sys, state, probes, grid))

    for k, (_, u) in enumerate(schedule.control_pairs(), start=1):
        record(k, u, state)  # window-start snapshot
        for _ in range(schedule.steps_per_window - 1):
            for _ in range(substeps):
                state = step_transient(sys, state, u, dt, norm, grid)
            record(k, u, state)

    pressure = np.array([r[0] for r in rows])
    velocity = np.array([r[1] for r in rows])
    density = mass_rate = None
    if sys.fluid == "ideal_gas":
        density = np.array([r[2] for r in rows])
        mass_rate = np.array([r[3] for r in rows])
    return Trajectory(
        fluid=sys.fluid,
        times=np.asarray(times),
        window_index=np.asarray(windows),
        control=np.asarray(controls),
        probes=probes,
        pressure=pressure,
        velocity=velocity,
        density=density,
        mass_rate=mass_rate,
    )
