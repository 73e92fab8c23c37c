"""Fluid system description, closure correlations, and PDE residuals.

All residuals are stated in normalized variables: position and time scaled
to [0, 1], pressure by ``p_ref``, velocity by ``v_ref`` and, for gas flow,
density by ``rho_ref``.  The friction factor and the equation of state are
evaluated inside the forward computation so that training gradients flow
through them.

Every formula here accepts either numpy arrays or autodiff variables, which
lets the same code serve plain evaluation and gradient-recording passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

GRAVITY = 9.81
UNIVERSAL_GAS_CONSTANT = 8.314

# Reynolds clamp keeping the friction factor and its gradient finite at
# vanishing velocity
RE_MIN = 100.0
RE_MAX = 1.0e8

FRICTION_MODELS = ("laminar", "blasius", "swamee_jain", "colebrook")


class PhysicsError(ValueError):
    """Raised for physically invalid states (e.g. nonpositive gas pressure)."""


@dataclass(frozen=True)
class FluidSystem:
    """Pipe geometry, fluid model, and boundary-condition constants."""

    fluid: str                      # "incompressible" | "ideal_gas"
    diameter: float                 # m
    length: float                   # m
    viscosity: float                # Pa s
    reservoir_pressure: float       # Pa
    friction_model: str
    inclination: float = 0.0        # rad
    roughness: float = 0.0          # m, absolute
    gravity: float = GRAVITY
    density: float | None = None          # kg/m^3, incompressible only
    ipr_velocity: float | None = None     # m/s per Pa drawdown, incompressible
    molar_mass: float | None = None       # kg/mol, ideal gas only
    temperature: float | None = None      # K, ideal gas only
    gas_constant: float = UNIVERSAL_GAS_CONSTANT
    ipr_mass: float | None = None         # kg/(s Pa) drawdown, ideal gas

    def __post_init__(self):
        if self.fluid not in ("incompressible", "ideal_gas"):
            raise ValueError(f"unknown fluid {self.fluid!r}")
        if self.friction_model not in FRICTION_MODELS:
            raise ValueError(f"unknown friction model {self.friction_model!r}")
        for name in ("diameter", "length", "viscosity", "reservoir_pressure"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.roughness < 0:
            raise ValueError("roughness must be nonnegative")
        if self.fluid == "incompressible":
            if self.density is None or self.ipr_velocity is None:
                raise ValueError("incompressible flow needs density and ipr_velocity")
        else:
            if self.molar_mass is None or self.temperature is None or self.ipr_mass is None:
                raise ValueError("ideal_gas flow needs molar_mass, temperature and ipr_mass")

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0


@dataclass(frozen=True)
class NormalizationRefs:
    """Reference scales mapping physical fields to network variables."""

    t_ref: float
    x_ref: float
    p_ref: float
    v_ref: float
    rho_ref: float = 1.0

    def __post_init__(self):
        for name in ("t_ref", "x_ref", "p_ref", "v_ref", "rho_ref"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


# closures ---------------------------------------------------------------------


def reynolds(rho, velocity, sys: FluidSystem, re_min=RE_MIN, re_max=RE_MAX):
    """Clamped Reynolds number rho |V| D / mu."""
    raw = rho * ad.absolute(velocity) * (sys.diameter / sys.viscosity)
    return ad.clamp(raw, re_min, re_max)


def friction_factor(re, sys: FluidSystem):
    """Darcy friction factor for the system's configured correlation."""
    model = sys.friction_model
    if model == "laminar":
        return ad.div(64.0, re)
    if model == "blasius":
        return 0.316 * ad.power(re, -0.25)
    if model == "swamee_jain":
        rough = sys.roughness / (3.7 * sys.diameter)
        return 0.25 * ad.power(ad.log10(rough + 5.74 * ad.power(re, -0.9)), -2.0)
    # Colebrook-White: implicit; reference correlation evaluated iteratively,
    # not differentiable and not intended for training residuals
    if isinstance(re, ad.Var):
        raise TypeError("colebrook is a reference correlation without gradients")
    return _colebrook(np.asarray(re, dtype=float), sys)


def _colebrook(re, sys, tol=1e-12, max_iter=200):
    rough = sys.roughness / (3.7 * sys.diameter)
    inv_sqrt = 1.0 / np.sqrt(0.25 * np.log10(rough + 5.74 * re**-0.9) ** -2.0)
    f = inv_sqrt**-2.0
    for _ in range(max_iter):
        inv_sqrt = -2.0 * np.log10(rough + 2.51 * inv_sqrt / re)
        f_new = inv_sqrt**-2.0
        if np.max(np.abs(f_new - f)) < tol:
            return f_new
        f = f_new
    raise PhysicsError("Colebrook fixed-point iteration did not converge")


def eos_density(pressure, sys: FluidSystem):
    """Density from pressure in physical units (Pa -> kg/m^3)."""
    if sys.fluid == "incompressible":
        return np.broadcast_to(np.float64(sys.density), np.shape(pressure)).copy()
    p = np.asarray(pressure, dtype=float)
    if np.any(p <= 0):
        raise PhysicsError("ideal gas law requires positive pressure")
    return p * sys.molar_mass / (sys.gas_constant * sys.temperature)


def normalized_eos_slope(sys: FluidSystem, norm: NormalizationRefs) -> float:
    """d(rho~)/d(P~) for the ideal-gas closure in normalized variables."""
    return norm.p_ref * sys.molar_mass / (sys.gas_constant * sys.temperature * norm.rho_ref)


# residual formulas -------------------------------------------------------------


@dataclass
class FlowFields:
    """Normalized network outputs and their input derivatives at a batch."""

    pressure: object
    velocity: object
    dpressure_dx: object = None
    dvelocity_dx: object = None
    dpressure_dt: object = None
    dvelocity_dt: object = None


@dataclass
class ResidualVector:
    """Dimensionless mass and momentum residuals."""

    r_mass: object
    r_momentum: object


def fields_from_network(outputs, jacobian, x_col=None, t_col=None) -> FlowFields:
    """Bundle forward results; columns index the jacobian's tangent slots."""
    take = ad.getitem
    return FlowFields(
        pressure=take(outputs, (slice(None), 0)),
        velocity=take(outputs, (slice(None), 1)),
        dpressure_dx=None if x_col is None else take(jacobian, (slice(None), 0, x_col)),
        dvelocity_dx=None if x_col is None else take(jacobian, (slice(None), 1, x_col)),
        dpressure_dt=None if t_col is None else take(jacobian, (slice(None), 0, t_col)),
        dvelocity_dt=None if t_col is None else take(jacobian, (slice(None), 1, t_col)),
    )


def _friction_incompressible(fields, sys, norm):
    re = reynolds(sys.density, fields.velocity * norm.v_ref, sys)
    return friction_factor(re, sys)


def residual_inc_steady_fields(fields: FlowFields, sys, norm) -> ResidualVector:
    fr = _friction_incompressible(fields, sys, norm)
    pressure_coef = norm.p_ref / (sys.density * norm.v_ref * norm.x_ref)
    gravity_term = sys.gravity * math.sin(sys.inclination) / norm.v_ref
    r_mom = (
        pressure_coef * fields.dpressure_dx
        + gravity_term
        + 0.5 * (norm.v_ref / sys.diameter) * fr * ad.absolute(fields.velocity) * fields.velocity
    )
    return ResidualVector(r_mass=fields.dvelocity_dx, r_momentum=r_mom)


def residual_inc_transient_fields(fields: FlowFields, sys, norm) -> ResidualVector:
    fr = _friction_incompressible(fields, sys, norm)
    pressure_coef = norm.t_ref * norm.p_ref / (sys.density * norm.v_ref * norm.x_ref)
    gravity_term = norm.t_ref * sys.gravity * math.sin(sys.inclination) / norm.v_ref
    r_mom = (
        fields.dvelocity_dt
        + pressure_coef * fields.dpressure_dx
        + gravity_term
        + 0.5
        * (norm.t_ref * norm.v_ref / sys.diameter)
        * fr
        * ad.absolute(fields.velocity)
        * fields.velocity
    )
    return ResidualVector(r_mass=fields.dvelocity_dx, r_momentum=r_mom)


def _compressible_terms(fields, sys, norm):
    """Normalized density, its derivatives, and friction for gas residuals.

    The density ratio is the linear ideal-gas map of normalized pressure; it
    is evaluated directly (without the positive-pressure guard) so training
    residuals stay finite for arbitrary network outputs.
    """
    slope = normalized_eos_slope(sys, norm)
    rho_n = slope * fields.pressure
    drho_dx = slope * fields.dpressure_dx
    re = reynolds(rho_n * norm.rho_ref, fields.velocity * norm.v_ref, sys)
    fr = friction_factor(re, sys)
    return slope, rho_n, drho_dx, fr


def residual_comp_steady_fields(fields: FlowFields, sys, norm) -> ResidualVector:
    _, rho_n, drho_dx, fr = _compressible_terms(fields, sys, norm)
    vel = fields.velocity
    d_rhov_dx = rho_n * fields.dvelocity_dx + vel * drho_dx
    d_rhov2_dx = vel * vel * drho_dx + 2.0 * rho_n * vel * fields.dvelocity_dx
    r_mom = (
        (norm.v_ref / norm.x_ref) * d_rhov2_dx
        + (norm.p_ref / (norm.rho_ref * norm.v_ref * norm.x_ref)) * fields.dpressure_dx
        + (sys.gravity * math.sin(sys.inclination) / norm.v_ref) * rho_n
        + 0.5 * (norm.v_ref / sys.diameter) * fr * rho_n * ad.absolute(vel) * vel
    )
    return ResidualVector(r_mass=d_rhov_dx, r_momentum=r_mom)


def residual_comp_transient_fields(fields: FlowFields, sys, norm) -> ResidualVector:
    slope, rho_n, drho_dx, fr = _compressible_terms(fields, sys, norm)
    vel = fields.velocity
    drho_dt = slope * fields.dpressure_dt
    d_rhov_dx = rho_n * fields.dvelocity_dx + vel * drho_dx
    d_rhov2_dx = vel * vel * drho_dx + 2.0 * rho_n * vel * fields.dvelocity_dx
    d_rhov_dt = rho_n * fields.dvelocity_dt + vel * drho_dt
    advect = norm.v_ref * norm.t_ref / norm.x_ref
    r_mass = drho_dt + advect * d_rhov_dx
    r_mom = (
        d_rhov_dt
        + advect * d_rhov2_dx
        + (norm.p_ref * norm.t_ref / (norm.rho_ref * norm.v_ref * norm.x_ref))
        * fields.dpressure_dx
        + (sys.gravity * norm.t_ref * math.sin(sys.inclination) / norm.v_ref) * rho_n
        + 0.5 * (norm.v_ref * norm.t_ref / sys.diameter) * fr * rho_n * ad.absolute(vel) * vel
    )
    return ResidualVector(r_mass=r_mass, r_momentum=r_mom)


def bc_upstream_residual(pressure, velocity, sys, norm):
    """Inflow-performance residual at the inlet, normalized."""
    if sys.fluid == "incompressible":
        inflow = sys.ipr_velocity * (sys.reservoir_pressure - norm.p_ref * pressure) / norm.v_ref
        return velocity - inflow
    rho_n = normalized_eos_slope(sys, norm) * pressure
    inflow = (
        sys.ipr_mass
        * (sys.reservoir_pressure - pressure * norm.p_ref)
        / (norm.rho_ref * norm.v_ref * sys.area)
    )
    return rho_n * velocity - inflow


def bc_downstream_residual(pressure, control):
    """Outlet residual: normalized pressure minus the control value."""
    return pressure - control


# model-facing wrappers ----------------------------------------------------------


def _model_fields(model, inputs, x_col=0, t_col=None):
    from .network import forward_with_jacobian

    dims = (0,) if t_col is None else (0, 1)
    y, jac = forward_with_jacobian(model.arch, model.params, inputs, tangent_dims=dims)
    return fields_from_network(y, jac, x_col=x_col, t_col=t_col)


def _column_stack(*cols):
    arrays = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in cols])
    return np.stack([a.ravel() for a in arrays], axis=1)


def residual_inc_steady(model, x, u, sys) -> ResidualVector:
    fields = _model_fields(model, _column_stack(x, u))
    return residual_inc_steady_fields(fields, sys, model.norm)


def residual_inc_transient(model, x, t, u0, u, sys) -> ResidualVector:
    fields = _model_fields(model, _column_stack(x, t, u0, u), t_col=1)
    return residual_inc_transient_fields(fields, sys, model.norm)


def residual_comp_steady(model, x, u, sys) -> ResidualVector:
    fields = _model_fields(model, _column_stack(x, u))
    return residual_comp_steady_fields(fields, sys, model.norm)


def residual_comp_transient(model, x, t, u0, u, sys) -> ResidualVector:
    fields = _model_fields(model, _column_stack(x, t, u0, u), t_col=1)
    return residual_comp_transient_fields(fields, sys, model.norm)


def bc_residuals(model, sys, u, u0=None, t=None):
    """Upstream and downstream boundary residuals for a steady or transient net."""
    from .network import forward

    u = np.asarray(u, dtype=float)
    if model.arch.input_dim == 2:
        up_in = _column_stack(np.zeros_like(u), u)
        down_in = _column_stack(np.ones_like(u), u)
    else:
        if u0 is None or t is None:
            raise ValueError("transient boundary residuals need t and u0")
        up_in = _column_stack(np.zeros_like(u), t, u0, u)
        down_in = _column_stack(np.ones_like(u), t, u0, u)
    y_up = forward(model.arch, model.params, up_in)
    y_down = forward(model.arch, model.params, down_in)
    r_up = bc_upstream_residual(y_up[:, 0], y_up[:, 1], sys, model.norm)
    r_down = bc_downstream_residual(y_down[:, 0], down_in[:, -1])
    return r_up, r_down


def ic_residual(transient_model, steady_model, x, u0, u):
    """Transient outputs at t = 0 minus the frozen steady-state targets."""
    from .network import forward

    inputs = _column_stack(x, np.zeros_like(np.asarray(x, dtype=float)), u0, u)
    y_t = forward(transient_model.arch, transient_model.params, inputs)
    y_ss = forward(steady_model.arch, steady_model.params, inputs[:, (0, 2)])
    diff = y_t - y_ss
    return diff[:, 0], diff[:, 1]
