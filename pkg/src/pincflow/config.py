"""Run configuration: INI-style files, strict schemas, and named presets.

A configuration is a plain section/key/value table.  Presets expand to the
full published parameter sets for the two reference cases (water pipe and
gas pipeline); file entries overlay preset values key by key.  Unknown
sections or keys are rejected outright so typos cannot silently divert a
run.  Serialization writes back the raw strings, making parse -> serialize
-> parse a fixed point.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

from .network import NetworkArchitecture
from .physics import FluidSystem, NormalizationRefs
from .training import AdamSettings, LbfgsSettings, LossWeights, TrainingConfig


class ConfigError(ValueError):
    """Raised for malformed configuration input."""


_SCHEMA = {
    "system": {
        "fluid", "diameter", "length", "viscosity", "inclination", "roughness",
        "gravity", "reservoir_pressure", "friction_model", "density",
        "ipr_velocity", "molar_mass", "temperature", "gas_constant", "ipr_mass",
    },
    "normalization": {"t_ref", "x_ref", "p_ref", "v_ref", "rho_ref"},
    "network": {
        "steady_n_layers", "steady_hidden_size", "steady_activation",
        "steady_skip_connections",
        "transient_n_layers", "transient_hidden_size", "transient_activation",
        "transient_skip_connections",
    },
    "training": {
        "steady_n_pde", "steady_n_bc", "steady_adam_epochs", "steady_lbfgs_max_iters",
        "transient_n_pde", "transient_n_bc", "transient_n_ic",
        "transient_adam_epochs", "transient_lbfgs_max_iters",
        "adam_learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
        "lbfgs_memory", "lbfgs_grad_tol", "lbfgs_wolfe_c1", "lbfgs_wolfe_c2",
        "lambda_pde", "lambda_boundary", "lambda_initial", "lambda_data",
        "sampling_seed", "weights_seed", "validation_seed", "val_every",
        "seed_sweep", "refine_max_iters",
    },
    "plant": {"n_cells", "dt_seconds"},
    "mpc": {
        "prediction_horizon", "control_horizon", "sampling_seconds", "probe_x",
        "y_target", "output_move_max", "move_penalty", "y_min", "u_move_max",
        "u_init", "duration_seconds",
    },
    "run": {
        "preset", "output_dir", "threads", "steps_per_window", "window_seconds",
    },
}

_SECTION_ORDER = ("system", "normalization", "network", "training", "plant", "mpc", "run")

PRESETS: dict[str, dict[str, dict[str, str]]] = {
    # horizontal water pipe, velocity-based inflow relation
    "table1-incompressible": {
        "system": {
            "fluid": "incompressible", "diameter": "0.1", "length": "100.0",
            "viscosity": "0.001", "inclination": "0.0", "roughness": "0.0",
            "gravity": "9.81", "reservoir_pressure": "2e5",
            "friction_model": "blasius", "density": "1000.0",
            "ipr_velocity": "1e-5",
        },
        "normalization": {
            "t_ref": "10.0", "x_ref": "100.0", "p_ref": "1e5", "v_ref": "1.0",
            "rho_ref": "1000.0",
        },
        "network": {
            "steady_n_layers": "4", "steady_hidden_size": "20",
            "steady_activation": "tanh", "steady_skip_connections": "false",
            "transient_n_layers": "4", "transient_hidden_size": "20",
            "transient_activation": "tanh", "transient_skip_connections": "false",
        },
        "training": {
            "steady_n_pde": "1000", "steady_n_bc": "200",
            "steady_adam_epochs": "200", "steady_lbfgs_max_iters": "4000",
            "transient_n_pde": "10000", "transient_n_bc": "2000",
            "transient_n_ic": "1000", "transient_adam_epochs": "300",
            "transient_lbfgs_max_iters": "4000",
            "sampling_seed": "0", "weights_seed": "0", "validation_seed": "1000",
            "val_every": "25", "seed_sweep": "1", "refine_max_iters": "0",
        },
        "plant": {"n_cells": "50", "dt_seconds": "0.1"},
        "mpc": {
            "prediction_horizon": "10", "control_horizon": "2",
            "sampling_seconds": "1.0", "probe_x": "0.1", "y_target": "0.0",
            "output_move_max": "0.06666666666666667", "move_penalty": "0.01",
            "y_min": "0.55", "u_init": "0.9", "duration_seconds": "30.0",
        },
        "run": {"steps_per_window": "21", "window_seconds": "10.0"},
    },
    # horizontal gas pipeline, mass-based inflow relation
    "table2-compressible": {
        "system": {
            "fluid": "ideal_gas", "diameter": "0.2", "length": "2000.0",
            "viscosity": "5e-5", "inclination": "0.0", "roughness": "0.0",
            "gravity": "9.81", "reservoir_pressure": "5e6",
            "friction_model": "swamee_jain", "molar_mass": "0.03",
            "temperature": "300.0", "gas_constant": "8.314", "ipr_mass": "5e-4",
        },
        "normalization": {
            "t_ref": "100.0", "x_ref": "2000.0", "p_ref": "5e6", "v_ref": "50.0",
            "rho_ref": "60.0",
        },
        "network": {
            "steady_n_layers": "8", "steady_hidden_size": "43",
            "steady_activation": "tanh", "steady_skip_connections": "false",
            "transient_n_layers": "8", "transient_hidden_size": "93",
            "transient_activation": "swish", "transient_skip_connections": "true",
        },
        "training": {
            "steady_n_pde": "8723", "steady_n_bc": "434",
            "steady_adam_epochs": "1095", "steady_lbfgs_max_iters": "1500",
            "transient_n_pde": "4608", "transient_n_bc": "1449",
            "transient_n_ic": "1213", "transient_adam_epochs": "699",
            "transient_lbfgs_max_iters": "1200",
            "sampling_seed": "0", "weights_seed": "0", "validation_seed": "1000",
            "val_every": "50", "seed_sweep": "5", "refine_max_iters": "3000",
        },
        "plant": {"n_cells": "50", "dt_seconds": "1.0"},
        "mpc": {
            "prediction_horizon": "10", "control_horizon": "2",
            "sampling_seconds": "10.0", "probe_x": "0.075", "y_target": "0.0",
            "output_move_max": "0.013333333333333334",
            "u_move_max": "0.013333333333333334", "move_penalty": "0.01",
            "y_min": "0.9", "u_init": "0.95", "duration_seconds": "600.0",
        },
        "run": {"steps_per_window": "21", "window_seconds": "100.0"},
    },
}


def _validate(raw: dict[str, dict[str, str]]):
    for section, keys in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in keys:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


@dataclass
class RunConfig:
    """Merged section/key/value table with typed accessors."""

    raw: dict[str, dict[str, str]]

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        raw = {s: dict(parser.items(s)) for s in parser.sections()}
        _validate(raw)
        preset = raw.get("run", {}).pop("preset", None)
        if preset is not None:
            base = expand_preset(preset)
            for section, items in raw.items():
                base.setdefault(section, {}).update(items)
            base.setdefault("run", {})["preset"] = preset
            raw = base
        _validate(raw)
        return cls(raw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    def to_text(self) -> str:
        out = io.StringIO()
        for section in _SECTION_ORDER:
            if section not in self.raw or not self.raw[section]:
                continue
            out.write(f"[{section}]\n")
            for key in sorted(self.raw[section]):
                out.write(f"{key} = {self.raw[section][key]}\n")
            out.write("\n")
        return out.getvalue()

    # -- low-level typed access --------------------------------------------

    def _get(self, section, key, default=None):
        value = self.raw.get(section, {}).get(key, default)
        if value is None:
            raise ConfigError(f"missing required key {key!r} in section [{section}]")
        return value

    def _float(self, section, key, default=None):
        try:
            return float(self._get(section, key, default))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be a number") from exc

    def _int(self, section, key, default=None):
        try:
            return int(self._get(section, key, default))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be an integer") from exc

    def _bool(self, section, key, default=None):
        value = str(self._get(section, key, default)).strip().lower()
        if value in ("true", "1", "yes", "on"):
            return True
        if value in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key} must be a boolean")

    def _optional_float(self, section, key):
        value = self.raw.get(section, {}).get(key)
        if value is None or value.strip().lower() in ("", "none"):
            return None
        return self._float(section, key)

    # -- domain objects -----------------------------------------------------

    def fluid_system(self) -> FluidSystem:
        fluid = self._get("system", "fluid")
        common = dict(
            fluid=fluid,
            diameter=self._float("system", "diameter"),
            length=self._float("system", "length"),
            viscosity=self._float("system", "viscosity"),
            inclination=self._float("system", "inclination", "0.0"),
            roughness=self._float("system", "roughness", "0.0"),
            gravity=self._float("system", "gravity", "9.81"),
            reservoir_pressure=self._float("system", "reservoir_pressure"),
            friction_model=self._get("system", "friction_model"),
        )
        try:
            if fluid == "incompressible":
                return FluidSystem(
                    density=self._float("system", "density"),
                    ipr_velocity=self._float("system", "ipr_velocity"),
                    **common,
                )
            return FluidSystem(
                molar_mass=self._float("system", "molar_mass"),
                temperature=self._float("system", "temperature"),
                gas_constant=self._float("system", "gas_constant", "8.314"),
                ipr_mass=self._float("system", "ipr_mass"),
                **common,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def normalization(self) -> NormalizationRefs:
        try:
            return NormalizationRefs(
                t_ref=self._float("normalization", "t_ref"),
                x_ref=self._float("normalization", "x_ref"),
                p_ref=self._float("normalization", "p_ref"),
                v_ref=self._float("normalization", "v_ref"),
                rho_ref=self._float("normalization", "rho_ref", "1.0"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def architecture(self, regime: str) -> NetworkArchitecture:
        if regime not in ("steady", "transient"):
            raise ConfigError(f"unknown regime {regime!r}")
        try:
            return NetworkArchitecture(
                input_dim=2 if regime == "steady" else 4,
                n_layers=self._int("network", f"{regime}_n_layers"),
                hidden_size=self._int("network", f"{regime}_hidden_size"),
                activation=self._get("network", f"{regime}_activation"),
                skip_connections=self._bool("network", f"{regime}_skip_connections"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def training_config(self, regime: str) -> TrainingConfig:
        if regime not in ("steady", "transient"):
            raise ConfigError(f"unknown regime {regime!r}")
        try:
            adam = AdamSettings(
                epochs=self._int("training", f"{regime}_adam_epochs"),
                learning_rate=self._float("training", "adam_learning_rate", "1e-3"),
                beta1=self._float("training", "adam_beta1", "0.9"),
                beta2=self._float("training", "adam_beta2", "0.999"),
                eps=self._float("training", "adam_eps", "1e-8"),
            )
            lbfgs = LbfgsSettings(
                memory=self._int("training", "lbfgs_memory", "50"),
                max_iters=self._int("training", f"{regime}_lbfgs_max_iters", "20000"),
                grad_tol=self._float("training", "lbfgs_grad_tol", "1e-9"),
                wolfe_c1=self._float("training", "lbfgs_wolfe_c1", "1e-4"),
                wolfe_c2=self._float("training", "lbfgs_wolfe_c2", "0.9"),
            )
            weights = LossWeights(
                pde=self._float("training", "lambda_pde", "1.0"),
                boundary=self._float("training", "lambda_boundary", "1.0"),
                initial=self._float("training", "lambda_initial", "1.0"),
                data=self._float("training", "lambda_data", "0.0"),
            )
            return TrainingConfig(
                n_pde=self._int("training", f"{regime}_n_pde"),
                n_bc=self._int("training", f"{regime}_n_bc"),
                n_ic=self._int("training", "transient_n_ic", "0") if regime == "transient" else 0,
                adam=adam,
                lbfgs=lbfgs,
                weights=weights,
                sampling_seed=self._int("training", "sampling_seed", "0"),
                weights_seed=self._int("training", "weights_seed", "0"),
                validation_seed=self._int("training", "validation_seed", "1000"),
                val_every=self._int("training", "val_every", "1"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def seed_sweep(self) -> int:
        return self._int("training", "seed_sweep", "1")

    def refine_max_iters(self) -> int:
        return self._int("training", "refine_max_iters", "0")

    def plant_grid(self):
        from .plant import PlantGrid

        return PlantGrid(
            n_cells=self._int("plant", "n_cells", "50"),
            length=self._float("system", "length"),
        )

    def plant_dt(self) -> float:
        default = self._float("normalization", "t_ref") / 100.0
        return self._float("plant", "dt_seconds", str(default))

    def mpc_config(self):
        from .mpc import MpcConfig

        try:
            return MpcConfig(
                prediction_horizon=self._int("mpc", "prediction_horizon"),
                control_horizon=self._int("mpc", "control_horizon"),
                sampling_seconds=self._float("mpc", "sampling_seconds"),
                probe_x=self._float("mpc", "probe_x"),
                y_target=self._float("mpc", "y_target", "0.0"),
                output_move_max=self._float("mpc", "output_move_max"),
                move_penalty=self._float("mpc", "move_penalty", "0.01"),
                y_min=self._optional_float("mpc", "y_min"),
                u_move_max=self._optional_float("mpc", "u_move_max"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def mpc_scenario(self) -> dict:
        return {
            "u_init": self._float("mpc", "u_init"),
            "duration_seconds": self._float("mpc", "duration_seconds"),
        }

    def window_settings(self) -> dict:
        t_ref = self._float("normalization", "t_ref")
        return {
            "steps_per_window": self._int("run", "steps_per_window", "21"),
            "window_seconds": self._float("run", "window_seconds", str(t_ref)),
        }


def expand_preset(name: str) -> dict[str, dict[str, str]]:
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown preset {name!r} (known: {known})")
    return {section: dict(items) for section, items in PRESETS[name].items()}


def preset_config(name: str) -> RunConfig:
    raw = expand_preset(name)
    raw.setdefault("run", {})["preset"] = name
    return RunConfig(raw)
