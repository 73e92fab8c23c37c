"""Dense feed-forward surrogate networks with exact input derivatives.

Two variants are provided: a plain multilayer perceptron and a gated
skip-connection network in which two encoder layers project the input and
every hidden layer blends them through a learned gate.  Both map normalized
inputs to the normalized output pair (pressure, velocity).

First derivatives of the outputs with respect to selected inputs are
propagated analytically alongside the forward pass (forward-mode tangents).
Because the tangent recurrence is expressed with :mod:`pincflow.autodiff`
operations, a single reverse sweep yields exact parameter gradients of any
scalar objective built from outputs *and* input derivatives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .physics import NormalizationRefs

ACTIVATIONS = ("tanh", "sinusoidal", "swish")


class ModelFormatError(ValueError):
    """Raised for malformed or version-incompatible model documents."""


@dataclass(frozen=True)
class NetworkArchitecture:
    """Shape of a surrogate network.

    input_dim is 2 for the steady variant (position, control) and 4 for the
    transient variant (position, time, previous control, current control).
    """

    input_dim: int
    n_layers: int
    hidden_size: int
    activation: str = "tanh"
    skip_connections: bool = False
    output_dim: int = 2

    def __post_init__(self):
        if self.input_dim not in (2, 4):
            raise ValueError(f"input_dim must be 2 or 4, got {self.input_dim}")
        if self.output_dim != 2:
            raise ValueError("networks predict exactly (pressure, velocity)")
        if self.n_layers < 1 or self.hidden_size < 1:
            raise ValueError("n_layers and hidden_size must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class EvalResult:
    """Outputs and the exact jacobian of outputs w.r.t. inputs at one point."""

    outputs: np.ndarray       # (output_dim,)
    input_jacobian: np.ndarray  # (output_dim, input_dim)


@dataclass(frozen=True)
class ParameterLayout:
    """Deterministic bijection between named tensors and the flat vector."""

    names: tuple[str, ...]
    shapes: dict[str, tuple[int, ...]]
    offsets: dict[str, int]
    size: int

    def slice_of(self, name: str) -> slice:
        start = self.offsets[name]
        return slice(start, start + int(np.prod(self.shapes[name], dtype=int)))

    def unpack(self, params: np.ndarray) -> dict[str, np.ndarray]:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {params.shape}")
        return {
            name: params[self.slice_of(name)].reshape(self.shapes[name])
            for name in self.names
        }


def _layer_entries(prefix, out_dim, in_dim, activation, entries):
    entries.append((f"{prefix}.weight", (out_dim, in_dim)))
    entries.append((f"{prefix}.bias", (out_dim,)))
    if activation == "sinusoidal":
        entries.append((f"{prefix}.sin_weight", ()))
        entries.append((f"{prefix}.cos_weight", ()))


def parameter_layout(arch: NetworkArchitecture) -> ParameterLayout:
    entries: list[tuple[str, tuple[int, ...]]] = []
    h, d = arch.hidden_size, arch.input_dim
    if arch.skip_connections:
        _layer_entries("encoder_a", h, d, arch.activation, entries)
        _layer_entries("encoder_b", h, d, arch.activation, entries)
        for k in range(arch.n_layers):
            _layer_entries(f"gate{k}", h, d if k == 0 else h, arch.activation, entries)
    else:
        for k in range(arch.n_layers):
            _layer_entries(f"hidden{k}", h, d if k == 0 else h, arch.activation, entries)
    entries.append(("out.weight", (arch.output_dim, h)))
    entries.append(("out.bias", (arch.output_dim,)))

    names = tuple(name for name, _ in entries)
    shapes = {name: shape for name, shape in entries}
    offsets = {}
    offset = 0
    for name, shape in entries:
        offsets[name] = offset
        offset += int(np.prod(shape, dtype=int))
    return ParameterLayout(names, shapes, offsets, offset)


def init_params(arch: NetworkArchitecture, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, unit sine / zero cosine weights."""
    layout = parameter_layout(arch)
    rng = np.random.default_rng(seed)
    params = np.zeros(layout.size)
    for name in layout.names:
        shape = layout.shapes[name]
        if name.endswith(".weight"):
            fan_out, fan_in = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params[layout.slice_of(name)] = rng.uniform(-bound, bound, size=fan_in * fan_out)
        elif name.endswith(".sin_weight"):
            params[layout.slice_of(name)] = 1.0
        # biases and cos_weight stay zero
    return params


# forward evaluation ----------------------------------------------------------


def _activation(kind, z, tensors, prefix):
    """Apply the activation; returns (value, pointwise slope)."""
    if kind == "tanh":
        t = ad.tanh(z)
        return t, 1.0 - t * t
    if kind == "swish":
        s = ad.sigmoid(z)
        return z * s, s * (1.0 + z * (1.0 - s))
    # sinusoidal with per-layer trainable sine/cosine weights
    w_sin = tensors[f"{prefix}.sin_weight"]
    w_cos = tensors[f"{prefix}.cos_weight"]
    sn, cs = ad.sin(z), ad.cos(z)
    return w_sin * sn + w_cos * cs, w_sin * cs - w_cos * sn


def _seed_tangents(n, input_dim, tangent_dims):
    basis = np.zeros((n, input_dim, len(tangent_dims)))
    for col, dim in enumerate(tangent_dims):
        basis[:, dim, col] = 1.0
    return basis


def _layer(tensors, prefix, kind, x, tx):
    weight = tensors[f"{prefix}.weight"]
    z = ad.linear(x, weight, tensors[f"{prefix}.bias"])
    h, slope = _activation(kind, z, tensors, prefix)
    if tx is None:
        return h, None
    tz = ad.tangent_linear(weight, tx)
    return h, ad.mul(ad.unsqueeze(slope, 2), tz)


def _forward_core(arch, tensors, x, tangent_dims):
    """Shared forward pass; works on numpy arrays and autodiff Vars alike."""
    tx = None
    if tangent_dims is not None:
        tx = _seed_tangents(ad.value_of(x).shape[0], arch.input_dim, tangent_dims)
    kind = arch.activation

    if not arch.skip_connections:
        h, th = x, tx
        for k in range(arch.n_layers):
            h, th = _layer(tensors, f"hidden{k}", kind, h, th)
    else:
        u, tu = _layer(tensors, "encoder_a", kind, x, tx)
        v, tv = _layer(tensors, "encoder_b", kind, x, tx)
        h, th = x, tx
        for k in range(arch.n_layers):
            z, tz = _layer(tensors, f"gate{k}", kind, h, th)
            h = u + z * (v - u)
            if tx is not None:
                th = ad.add(
                    ad.add(tu, ad.mul(tz, ad.unsqueeze(v - u, 2))),
                    ad.mul(ad.unsqueeze(z, 2), ad.sub(tv, tu)),
                )

    y = ad.linear(h, tensors["out.weight"], tensors["out.bias"])
    jac = None if tx is None else ad.tangent_linear(tensors["out.weight"], th)
    return y, jac


def _as_batch(arch, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ValueError(f"expected inputs of width {arch.input_dim}, got shape {x.shape}")
    return x, single


def forward(arch: NetworkArchitecture, params: np.ndarray, x) -> np.ndarray:
    """Batched evaluation; accepts one point (d,) or a batch (n, d)."""
    x, single = _as_batch(arch, x)
    tensors = parameter_layout(arch).unpack(params)
    y, _ = _forward_core(arch, tensors, x, None)
    return y[0] if single else y


def forward_plain(arch, params, x):
    if arch.skip_connections:
        raise ValueError("architecture declares skip connections; use forward_skip")
    return forward(arch, params, x)


def forward_skip(arch, params, x):
    if not arch.skip_connections:
        raise ValueError("architecture is a plain network; use forward_plain")
    return forward(arch, params, x)


def forward_with_jacobian(arch, params, x, tangent_dims=None):
    """Outputs (n, 2) and exact jacobian (n, 2, k) for the selected inputs."""
    x, single = _as_batch(arch, x)
    if tangent_dims is None:
        tangent_dims = tuple(range(arch.input_dim))
    tensors = parameter_layout(arch).unpack(params)
    y, jac = _forward_core(arch, tensors, x, tuple(tangent_dims))
    return (y[0], jac[0]) if single else (y, jac)


def eval_with_input_derivatives(arch, params, x) -> EvalResult:
    y, jac = forward_with_jacobian(arch, params, np.asarray(x, dtype=float))
    return EvalResult(outputs=y, input_jacobian=jac)


# parameter gradients ---------------------------------------------------------


def param_vars(arch: NetworkArchitecture, params: np.ndarray) -> dict[str, ad.Var]:
    """Wrap each named tensor as a leaf autodiff variable."""
    return {name: ad.Var(arr) for name, arr in parameter_layout(arch).unpack(params).items()}


def taped_forward(arch, pvars: dict[str, ad.Var], x, tangent_dims=None):
    """Forward pass recording the graph; returns (outputs, jacobian) Vars."""
    x, _ = _as_batch(arch, x)
    dims = None if tangent_dims is None else tuple(tangent_dims)
    return _forward_core(arch, pvars, x, dims)


def collect_gradient(arch, pvars, loss: ad.Var) -> np.ndarray:
    """Flatten leaf gradients of ``loss`` into layout order (zeros if unused)."""
    layout = parameter_layout(arch)
    grad = np.zeros(layout.size)
    if isinstance(loss, ad.Var):
        leaf = ad.backward(loss)
        for name, var in pvars.items():
            g = leaf.get(var)
            if g is not None:
                grad[layout.slice_of(name)] = np.asarray(g).ravel()
    return grad


def objective_gradient(arch, params, objective, x, tangent_dims=None):
    """Exact parameter gradient of ``objective(outputs, jacobian)``.

    The objective receives batched outputs (n, 2) and the input jacobian
    (n, 2, k) as autodiff variables and must return a scalar.  Gradient paths
    through the jacobian (input-derivative) terms are included.
    """
    pvars = param_vars(arch, params)
    if tangent_dims is None:
        tangent_dims = tuple(range(arch.input_dim))
    y, jac = taped_forward(arch, pvars, x, tangent_dims)
    loss = objective(y, jac)
    value = float(ad.value_of(loss))
    return value, collect_gradient(arch, pvars, loss)


# model bundle and persistence -------------------------------------------------


@dataclass
class NetworkModel:
    """A trained network: architecture, flat parameters, normalization."""

    arch: NetworkArchitecture
    params: np.ndarray
    norm: NormalizationRefs

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        expected = parameter_layout(self.arch).size
        if self.params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {self.params.shape}")


FORMAT_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_model(model: NetworkModel) -> str:
    """Canonical UTF-8 JSON document; fixed key order, 17 significant digits."""
    a, n = model.arch, model.norm
    lines = [
        "{",
        f'  "format_version": {FORMAT_VERSION},',
        "  \"architecture\": {"
        f'"input_dim": {a.input_dim}, "output_dim": {a.output_dim}, '
        f'"n_layers": {a.n_layers}, "hidden_size": {a.hidden_size}, '
        f'"activation": "{a.activation}", '
        f'"skip_connections": {"true" if a.skip_connections else "false"}'
        "},",
        "  \"normalization\": {"
        f'"t_ref": {_fmt(n.t_ref)}, "x_ref": {_fmt(n.x_ref)}, '
        f'"P_ref": {_fmt(n.p_ref)}, "V_ref": {_fmt(n.v_ref)}, '
        f'"rho_ref": {_fmt(n.rho_ref)}'
        "},",
        '  "parameters": [' + ", ".join(_fmt(p) for p in model.params) + "]",
        "}",
    ]
    return "\n".join(lines) + "\n"


def deserialize_model(document: str) -> NetworkModel:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("model document missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {doc['format_version']!r}, expected {FORMAT_VERSION}"
        )
    try:
        a = doc["architecture"]
        arch = NetworkArchitecture(
            input_dim=int(a["input_dim"]),
            n_layers=int(a["n_layers"]),
            hidden_size=int(a["hidden_size"]),
            activation=str(a["activation"]),
            skip_connections=bool(a["skip_connections"]),
            output_dim=int(a["output_dim"]),
        )
        n = doc["normalization"]
        norm = NormalizationRefs(
            t_ref=float(n["t_ref"]),
            x_ref=float(n["x_ref"]),
            p_ref=float(n["P_ref"]),
            v_ref=float(n["V_ref"]),
            rho_ref=float(n["rho_ref"]),
        )
        params = np.asarray(doc["parameters"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    return NetworkModel(arch=arch, params=params, norm=norm)


def save_model(model: NetworkModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(model))


def load_model(path) -> NetworkModel:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize_model(fh.read())
