"""Reference finite-difference solvers: fixed points, conservation, consistency."""

import numpy as np
import pytest

from pincflow.forwardsim import ControlSchedule
from pincflow.plant import (
    PlantError,
    PlantGrid,
    face_mass_flow,
    probe_state,
    simulate_plant,
    steady_solve,
    steady_solve_comp,
    steady_solve_inc,
    step_transient,
)


def water_velocity_oracle(sys, u, p_ref, tol=1e-14):
    """Independent damped fixed-point iteration of the inflow balance."""
    v = 1.0
    for _ in range(100000):
        re = max(min(sys.density * abs(v) * sys.diameter / sys.viscosity, 1e8), 100.0)
        fr = 0.316 / re**0.25
        drop = 0.5 * sys.density * fr * abs(v) * v / sys.diameter * sys.length
        v_new = 0.5 * v + 0.5 * sys.ipr_velocity * (sys.reservoir_pressure - u * p_ref - drop)
        if abs(v_new - v) < tol:
            return v_new
        v = v_new
    raise AssertionError("oracle iteration did not converge")


@pytest.fixture(scope="module")
def gas_grid():
    return PlantGrid(50, 2000.0)


@pytest.fixture(scope="module")
def water_grid():
    return PlantGrid(50, 100.0)


# incompressible steady ---------------------------------------------------------------


def test_inc_steady_zero_drawdown(water_system, water_norm):
    # outlet pressure equal to the reservoir pressure: no flow, flat profile
    profile = steady_solve_inc(water_system, 2.0, water_norm)
    assert abs(profile.velocity) <= 1e-12
    assert np.allclose(profile.pressure_at([0.0, 50.0, 100.0]), 2e5)


def test_inc_steady_published_operating_point(water_system, water_norm):
    profile = steady_solve_inc(water_system, 0.5, water_norm)
    oracle = water_velocity_oracle(water_system, 0.5, water_norm.p_ref)
    assert abs(profile.velocity - oracle) <= 1e-10
    assert abs(profile.velocity - 1.3497) <= 2e-4
    p0 = sys_p0 = water_system.reservoir_pressure - profile.velocity / water_system.ipr_velocity
    assert abs(profile.p_inlet - p0) == 0.0
    assert abs(profile.p_inlet - 6.503e4) < 50.0


def test_inc_profile_is_linear_and_honors_outlet(water_system, water_norm, water_grid):
    state = steady_solve(water_system, 0.37, water_norm, water_grid)
    x = water_grid.centers
    slope = np.diff(state.pressure) / np.diff(x)
    assert np.allclose(slope, slope[0], rtol=1e-12)
    # velocity lives as one scalar: spatially uniform at machine precision
    assert np.ptp(state.velocity) == 0.0
    profile = steady_solve_inc(water_system, 0.37, water_norm)
    assert profile.p_outlet == 0.37 * water_norm.p_ref


# compressible steady ------------------------------------------------------------------


def test_comp_steady_trivial_at_reservoir_pressure(gas_system, gas_norm, gas_grid):
    state = steady_solve_comp(gas_system, 1.0, gas_norm, gas_grid)
    assert np.max(np.abs(state.velocity)) <= 1e-10
    assert np.allclose(state.pressure, gas_system.reservoir_pressure, rtol=1e-12)


def test_comp_steady_mass_flow_uniform(gas_system, gas_norm, gas_grid):
    state = steady_solve_comp(gas_system, 0.5, gas_norm, gas_grid)
    mdot = face_mass_flow(gas_system, state, gas_grid, 0.5, gas_norm)
    spread = (np.max(mdot) - np.min(mdot)) / abs(np.mean(mdot))
    assert spread <= 1e-8


def test_comp_steady_profiles_monotone(gas_system, gas_norm, gas_grid):
    state = steady_solve_comp(gas_system, 0.5, gas_norm, gas_grid)
    assert np.all(np.diff(state.pressure) < 0)
    assert np.all(np.diff(state.velocity) > 0)


def test_comp_steady_outlet_ghost_closure(gas_system, gas_norm, gas_grid):
    u = 0.6
    state = steady_solve_comp(gas_system, u, gas_norm, gas_grid)
    p_out = u * gas_norm.p_ref
    ghost = 2.0 * p_out - state.pressure[-1]
    assert 0.5 * (ghost + state.pressure[-1]) == pytest.approx(p_out, abs=1e-9)
    # extrapolated probe at the outlet agrees to discretization accuracy
    pressure = probe_state(gas_system, state, [1.0], gas_grid)[0]
    assert abs(pressure[0] - p_out) / p_out < 2e-4


def test_comp_steady_rejects_bad_control(gas_system, gas_norm, gas_grid):
    with pytest.raises(ValueError):
        steady_solve_comp(gas_system, 0.0, gas_norm, gas_grid)
    with pytest.raises(ValueError):
        steady_solve_comp(gas_system, 1.5, gas_norm, gas_grid)


# transient stepping -------------------------------------------------------------------


def test_step_is_fixed_point_of_steady_state(gas_system, gas_norm, gas_grid):
    state = steady_solve_comp(gas_system, 0.5, gas_norm, gas_grid)
    stepped = step_transient(gas_system, state, 0.5, 1.0, gas_norm, gas_grid)
    rel_p = np.max(np.abs(stepped.pressure - state.pressure)) / np.max(np.abs(state.pressure))
    rel_v = np.max(np.abs(stepped.velocity - state.velocity)) / np.max(np.abs(state.velocity))
    assert max(rel_p, rel_v) <= 1e-8


def test_inc_transient_converges_to_steady_oracle(water_system, water_norm, water_grid):
    state = steady_solve(water_system, 1.0, water_norm, water_grid)
    state.velocity[:] = 0.0
    for _ in range(400):
        state = step_transient(water_system, state, 0.5, 0.1, water_norm, water_grid)
    oracle = water_velocity_oracle(water_system, 0.5, water_norm.p_ref)
    assert abs(state.velocity[0] - oracle) / oracle <= 1e-4


def test_comp_transient_converges_to_steady(gas_system, gas_norm, gas_grid):
    target = steady_solve_comp(gas_system, 0.6, gas_norm, gas_grid)
    state = steady_solve_comp(gas_system, 0.8, gas_norm, gas_grid)
    for _ in range(400):
        state = step_transient(gas_system, state, 0.6, 1.0, gas_norm, gas_grid)
    rel_p = np.max(np.abs(state.pressure - target.pressure) / target.pressure)
    nonzero = np.abs(target.velocity) > 1e-9
    rel_v = np.max(
        np.abs(state.velocity[nonzero] - target.velocity[nonzero])
        / np.abs(target.velocity[nonzero])
    )
    assert rel_p <= 1e-3
    assert rel_v <= 1e-3


def test_step_rejects_nonpositive_dt(water_system, water_norm, water_grid):
    state = steady_solve(water_system, 0.5, water_norm, water_grid)
    with pytest.raises(ValueError):
        step_transient(water_system, state, 0.5, 0.0, water_norm, water_grid)


# trajectories ---------------------------------------------------------------------------


def test_simulate_constant_schedule_is_flat(water_system, water_norm, water_grid):
    schedule = ControlSchedule(0.5, (0.5, 0.5), window_seconds=10.0, steps_per_window=6)
    traj = simulate_plant(water_system, schedule, [0.1, 0.9], water_norm, water_grid, dt=0.5)
    assert np.ptp(traj.pressure, axis=0).max() / traj.pressure.mean() < 1e-9
    assert np.ptp(traj.velocity, axis=0).max() < 1e-9


def test_simulate_rows_and_window_bookkeeping(gas_system, gas_norm, gas_grid):
    schedule = ControlSchedule(0.7, (0.6, 0.5), window_seconds=100.0, steps_per_window=5)
    traj = simulate_plant(gas_system, schedule, [0.25, 0.75], gas_norm, gas_grid, dt=5.0)
    assert traj.times.shape == (10,)
    assert list(traj.window_index) == [1] * 5 + [2] * 5
    assert np.allclose(traj.control[:5], 0.6) and np.allclose(traj.control[5:], 0.5)
    # seam: first row of window 2 repeats the final state of window 1
    assert np.array_equal(traj.pressure[4], traj.pressure[5])
    assert traj.density is not None and traj.mass_rate is not None


def test_gradual_opening_lowers_probe_pressure(gas_system, gas_norm, gas_grid):
    schedule = ControlSchedule(0.7, (0.7, 0.6, 0.5), window_seconds=100.0, steps_per_window=3)
    traj = simulate_plant(gas_system, schedule, [0.25, 0.5, 0.75], gas_norm, gas_grid, dt=2.5)
    window_means = [traj.pressure[traj.window_index == k].mean() for k in (1, 2, 3)]
    assert window_means[0] > window_means[1] > window_means[2]


def test_simulate_rejects_incompatible_dt(water_system, water_norm, water_grid):
    schedule = ControlSchedule(0.5, (0.5,), window_seconds=10.0, steps_per_window=6)
    with pytest.raises(ValueError):
        simulate_plant(water_system, schedule, [0.1], water_norm, water_grid, dt=0.3)
