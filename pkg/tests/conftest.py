import numpy as np
import pytest

from pincflow.network import NetworkArchitecture
from pincflow.physics import FluidSystem, NormalizationRefs


@pytest.fixture(scope="session")
def water_system():
    return FluidSystem(
        fluid="incompressible",
        diameter=0.1,
        length=100.0,
        viscosity=1e-3,
        reservoir_pressure=2e5,
        friction_model="blasius",
        density=1000.0,
        ipr_velocity=1e-5,
    )


@pytest.fixture(scope="session")
def water_norm():
    return NormalizationRefs(t_ref=10.0, x_ref=100.0, p_ref=1e5, v_ref=1.0, rho_ref=1000.0)


@pytest.fixture(scope="session")
def gas_system():
    return FluidSystem(
        fluid="ideal_gas",
        diameter=0.2,
        length=2000.0,
        viscosity=5e-5,
        reservoir_pressure=5e6,
        friction_model="swamee_jain",
        molar_mass=0.03,
        temperature=300.0,
        ipr_mass=5e-4,
    )


@pytest.fixture(scope="session")
def gas_norm():
    return NormalizationRefs(t_ref=100.0, x_ref=2000.0, p_ref=5e6, v_ref=50.0, rho_ref=60.0)


def small_arch(input_dim=2, activation="tanh", skip=False, hidden=8, layers=3):
    return NetworkArchitecture(
        input_dim=input_dim,
        n_layers=layers,
        hidden_size=hidden,
        activation=activation,
        skip_connections=skip,
    )


def relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum.reduce([np.abs(a), np.abs(b), np.full_like(a, floor)])
