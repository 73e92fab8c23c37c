"""Residual-loss assembly and two-stage optimization (Adam then L-BFGS).

Training is purely physics-driven: the loss averages squared PDE residuals
over collocation points, squared boundary residuals per boundary, and, for
the transient network, squared mismatch against the frozen steady-state
network at time zero.  Gradients come from one reverse sweep through the
forward-plus-tangent graph, so both optimizers consume the exact same
gradient the network module produces.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .network import (
    NetworkArchitecture,
    NetworkModel,
    collect_gradient,
    forward,
    init_params,
    param_vars,
    parameter_layout,
    taped_forward,
)
from .physics import (
    FluidSystem,
    NormalizationRefs,
    bc_downstream_residual,
    bc_upstream_residual,
    fields_from_network,
    residual_comp_steady_fields,
    residual_comp_transient_fields,
    residual_inc_steady_fields,
    residual_inc_transient_fields,
)
from .sampling import TrainingSets, build_training_sets


class TrainingError(RuntimeError):
    """Raised when optimization hits a non-finite loss or invalid setup."""


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights of the loss terms.

    The labeled-data term is carried for interface compatibility but no data
    loss is assembled; training is residual-only, so ``data`` must stay 0.
    """

    pde: float = 1.0
    boundary: float = 1.0
    initial: float = 1.0
    data: float = 0.0

    def __post_init__(self):
        if min(self.pde, self.boundary, self.initial, self.data) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.data != 0.0:
            raise ValueError("no labeled-data loss is implemented; data weight must be 0")


@dataclass(frozen=True)
class AdamSettings:
    epochs: int = 200
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class LbfgsSettings:
    memory: int = 50
    max_iters: int = 20000
    grad_tol: float = 1e-9
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search: int = 30

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass(frozen=True)
class TrainingConfig:
    n_pde: int
    n_bc: int
    n_ic: int = 0
    adam: AdamSettings = AdamSettings()
    lbfgs: LbfgsSettings = LbfgsSettings()
    weights: LossWeights = LossWeights()
    sampling_seed: int = 0
    weights_seed: int = 0
    validation_seed: int = 1000
    val_every: int = 1


@dataclass
class LossReport:
    """Per-iteration training (and periodic validation) loss terms."""

    rows: list[dict] = field(default_factory=list)

    TERMS = ("mass", "momentum", "bc_up", "bc_down", "ic", "total")

    def append(self, epoch, phase, terms, val_terms=None):
        row = {"epoch": epoch, "phase": phase}
        row.update({k: float(v) for k, v in terms.items()})
        if val_terms is not None:
            row.update({f"val_{k}": float(v) for k, v in val_terms.items()})
        self.rows.append(row)

    def last_value(self, key, default=np.nan):
        for row in reversed(self.rows):
            if key in row:
                return row[key]
        return default

    def to_long_rows(self):
        """(epoch, term, value) triples for CSV export."""
        out = []
        for row in self.rows:
            for key, value in row.items():
                if key in ("epoch", "phase"):
                    continue
                out.append((row["epoch"], key, value))
        return out


_RESIDUAL_FNS = {
    ("incompressible", "steady"): residual_inc_steady_fields,
    ("incompressible", "transient"): residual_inc_transient_fields,
    ("ideal_gas", "steady"): residual_comp_steady_fields,
    ("ideal_gas", "transient"): residual_comp_transient_fields,
}


class PincLoss:
    """Weighted MSE of PDE, boundary, and initial-condition residuals.

    The same instance evaluates in two modes: ``value`` runs plain numpy
    (cheap, for validation curves) while ``value_and_grad`` records the
    graph and returns the exact parameter gradient.
    """

    def __init__(self, regime, arch, sys, norm, sets: TrainingSets, weights: LossWeights,
                 ss_model: NetworkModel | None = None):
        if regime not in ("steady", "transient"):
            raise ValueError(f"unknown regime {regime!r}")
        if regime == "transient" and ss_model is None:
            raise ValueError("transient training needs the frozen steady-state model")
        self.regime = regime
        self.arch = arch
        self.sys = sys
        self.norm = norm
        self.sets = sets
        self.weights = weights
        self.layout = parameter_layout(arch)
        self.residual_fn = _RESIDUAL_FNS[(sys.fluid, regime)]
        self.tangent_dims = (0,) if regime == "steady" else (0, 1)
        self.t_col = None if regime == "steady" else 1
        if regime == "transient":
            # frozen IC targets: steady net evaluated at (position, previous control)
            ic_inputs = sets.ic.points[:, (0, 2)]
            self.ic_targets = forward(ss_model.arch, ss_model.params, ic_inputs)
        else:
            self.ic_targets = None

    # -- evaluation ------------------------------------------------------

    def _evaluate(self, tensors):
        w = self.weights
        terms = {}

        y, jac = taped_forward(self.arch, tensors, self.sets.pde.points, self.tangent_dims)
        fields = fields_from_network(y, jac, x_col=0, t_col=self.t_col)
        res = self.residual_fn(fields, self.sys, self.norm)
        terms["mass"] = ad.mean(res.r_mass * res.r_mass)
        terms["momentum"] = ad.mean(res.r_momentum * res.r_momentum)
        mse_pde = 0.5 * (terms["mass"] + terms["momentum"])

        terms["bc_up"] = self._boundary_term(tensors, self.sets.bc_up, upstream=True)
        terms["bc_down"] = self._boundary_term(tensors, self.sets.bc_down, upstream=False)
        mse_bc = 0.5 * (terms["bc_up"] + terms["bc_down"])

        total = w.pde * mse_pde + w.boundary * mse_bc
        if self.regime == "transient":
            y_ic, _ = taped_forward(self.arch, tensors, self.sets.ic.points, None)
            diff = y_ic - self.ic_targets
            dp = ad.getitem(diff, (slice(None), 0))
            dv = ad.getitem(diff, (slice(None), 1))
            terms["ic"] = 0.5 * (ad.mean(dp * dp) + ad.mean(dv * dv))
            total = total + w.initial * terms["ic"]
        else:
            terms["ic"] = 0.0
        terms["total"] = total
        return total, {k: float(ad.value_of(v)) for k, v in terms.items()}

    def _boundary_term(self, tensors, batch, upstream):
        if len(batch) == 0:
            return 0.0
        y, _ = taped_forward(self.arch, tensors, batch.points, None)
        pressure = ad.getitem(y, (slice(None), 0))
        if upstream:
            velocity = ad.getitem(y, (slice(None), 1))
            r = bc_upstream_residual(pressure, velocity, self.sys, self.norm)
        else:
            r = bc_downstream_residual(pressure, batch.points[:, -1])
        return ad.mean(r * r)

    def value(self, params):
        _, terms = self._evaluate(self.layout.unpack(params))
        return terms

    def value_and_grad(self, params):
        pvars = param_vars(self.arch, params)
        total, terms = self._evaluate(pvars)
        grad = collect_gradient(self.arch, pvars, total)
        return terms["total"], grad, terms


# optimizers --------------------------------------------------------------------


def _check_finite(loss, grad, where):
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite loss or gradient at {where}: loss={loss!r}")


def adam_run(objective, params, settings: AdamSettings, report: LossReport | None = None,
             val_fn=None, val_every=1, epoch_offset=0):
    """Full-batch Adam with bias correction; returns updated parameters."""
    params = np.asarray(params, dtype=float).copy()
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    for step in range(1, settings.epochs + 1):
        loss, grad, terms = objective(params)
        _check_finite(loss, grad, f"adam epoch {step}")
        m = settings.beta1 * m + (1.0 - settings.beta1) * grad
        v = settings.beta2 * v + (1.0 - settings.beta2) * grad * grad
        m_hat = m / (1.0 - settings.beta1**step)
        v_hat = v / (1.0 - settings.beta2**step)
        params -= settings.learning_rate * m_hat / (np.sqrt(v_hat) + settings.eps)
        if report is not None:
            val = None
            if val_fn is not None and (step % val_every == 0 or step == settings.epochs):
                val = val_fn(params)
            report.append(epoch_offset + step, "adam", terms, val)
    return params


def _two_loop(grad, s_list, y_list, rho_list):
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if s_list:
        gamma = np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1])
        q *= gamma
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through (a, fa, da), (b, fb, db); NaN if ill-posed."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return np.nan
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return np.nan
    return b - (b - a) * (db + d2 - d1) / denom


def _strong_wolfe(fg, x0, f0, g0, direction, c1, c2, max_iter):
    """Line search enforcing the strong Wolfe conditions.

    Returns (alpha, f, g, terms, evals, ok).  On failure the best point seen
    is returned with ok=False.
    """
    dphi0 = float(np.dot(g0, direction))
    if dphi0 >= 0:
        return 0.0, f0, g0, None, 0, False

    def phi(alpha):
        f, g, terms = fg(x0 + alpha * direction)
        return f, g, terms, float(np.dot(g, direction))

    best = (0.0, f0, g0, None)
    alpha_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    alpha = 1.0
    evals = 0

    def zoom(lo, f_lo, dphi_lo, hi, f_hi, dphi_hi):
        nonlocal evals, best
        for _ in range(max_iter):
            trial = _cubic_min(lo, f_lo, dphi_lo, hi, f_hi, dphi_hi)
            width = abs(hi - lo)
            if not np.isfinite(trial) or trial <= min(lo, hi) + 0.1 * width or trial >= max(
                lo, hi
            ) - 0.1 * width:
                trial = 0.5 * (lo + hi)
            f, g, terms, dphi = phi(trial)
            evals += 1
            if f < best[1]:
                best = (trial, f, g, terms)
            if f > f0 + c1 * trial * dphi0 or f >= f_lo:
                hi, f_hi, dphi_hi = trial, f, dphi
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return trial, f, g, terms, True
                if dphi * (hi - lo) >= 0:
                    hi, f_hi, dphi_hi = lo, f_lo, dphi_lo
                lo, f_lo, dphi_lo = trial, f, dphi
            if width < 1e-16:
                break
        return best[0], best[1], best[2], best[3], False

    for it in range(1, max_iter + 1):
        f, g, terms, dphi = phi(alpha)
        evals += 1
        if f < best[1]:
            best = (alpha, f, g, terms)
        if f > f0 + c1 * alpha * dphi0 or (it > 1 and f >= f_prev):
            a, fr, gr, tr, ok = zoom(alpha_prev, f_prev, dphi_prev, alpha, f, dphi)
            return a, fr, gr, tr, evals, ok
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, g, terms, evals, True
        if dphi >= 0:
            a, fr, gr, tr, ok = zoom(alpha, f, dphi, alpha_prev, f_prev, dphi_prev)
            return a, fr, gr, tr, evals, ok
        alpha_prev, f_prev, dphi_prev = alpha, f, dphi
        alpha = min(2.0 * alpha, 1e10)
    return best[0], best[1], best[2], best[3], evals, False


def lbfgs_run(objective, params, settings: LbfgsSettings, report: LossReport | None = None,
              val_fn=None, val_every=1, epoch_offset=0):
    """Limited-memory BFGS with two-loop recursion and strong Wolfe search.

    Stops on the infinity-norm gradient tolerance, the iteration cap, or a
    failed line search; the best parameters seen are always returned.
    """
    params = np.asarray(params, dtype=float).copy()
    f, grad, terms = objective(params)
    _check_finite(f, grad, "lbfgs start")
    best_f, best_params = f, params.copy()
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    status = "max_iters"
    iters_done = 0

    for it in range(1, settings.max_iters + 1):
        if np.max(np.abs(grad)) <= settings.grad_tol:
            status = "converged"
            break
        direction = -_two_loop(grad, s_hist, y_hist, rho_hist)
        if np.dot(grad, direction) >= 0:
            # stale curvature; fall back to steepest descent
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            direction = -grad
        alpha, f_new, g_new, ls_terms, _, ok = _strong_wolfe(
            objective, params, f, grad,
            direction, settings.wolfe_c1, settings.wolfe_c2, settings.max_line_search,
        )
        if not ok or alpha == 0.0:
            status = "line_search_failure"
            break
        step = alpha * direction
        params = params + step
        y_vec = g_new - grad
        sy = float(np.dot(step, y_vec))
        if sy > 1e-10 * np.linalg.norm(step) * np.linalg.norm(y_vec):
            s_hist.append(step)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > settings.memory:
                s_hist.pop(0), y_hist.pop(0), rho_hist.pop(0)
        f, grad, terms = f_new, g_new, ls_terms
        _check_finite(f, grad, f"lbfgs iter {it}")
        iters_done = it
        if f < best_f:
            best_f, best_params = f, params.copy()
        if report is not None:
            val = None
            if val_fn is not None and (it % val_every == 0):
                val = val_fn(params)
            report.append(epoch_offset + it, "lbfgs", terms, val)

    return best_params, status, iters_done


# high-level training -------------------------------------------------------------


def _sizes(config: TrainingConfig, regime: str) -> dict:
    sizes = {"n_pde": config.n_pde, "n_bc": config.n_bc}
    if regime == "transient":
        sizes["n_ic"] = config.n_ic
    return sizes


def _fit(regime, sys, norm, arch, config, ss_model=None, initial_params=None):
    sets = build_training_sets(regime, _sizes(config, regime), config.sampling_seed)
    val_sets = build_training_sets(regime, _sizes(config, regime), config.validation_seed)
    loss = PincLoss(regime, arch, sys, norm, sets, config.weights, ss_model)
    val_loss = PincLoss(regime, arch, sys, norm, val_sets, config.weights, ss_model)

    params = (
        init_params(arch, config.weights_seed)
        if initial_params is None
        else np.asarray(initial_params, dtype=float).copy()
    )
    report = LossReport()
    params = adam_run(
        loss.value_and_grad, params, config.adam,
        report, val_loss.value, config.val_every,
    )
    params, status, iters = lbfgs_run(
        loss.value_and_grad, params, config.lbfgs,
        report, val_loss.value, config.val_every, epoch_offset=config.adam.epochs,
    )
    final_val = val_loss.value(params)
    report.append(config.adam.epochs + iters, f"final:{status}", loss.value(params), final_val)
    return NetworkModel(arch=arch, params=params, norm=norm), report


def train_steady(sys: FluidSystem, norm: NormalizationRefs, arch: NetworkArchitecture,
                 config: TrainingConfig, initial_params=None):
    """Train the steady-state network from PDE and boundary residuals alone."""
    if arch.input_dim != 2:
        raise ValueError("steady-state networks take (position, control) inputs")
    return _fit("steady", sys, norm, arch, config, initial_params=initial_params)


def train_transient(sys: FluidSystem, norm: NormalizationRefs, arch: NetworkArchitecture,
                    config: TrainingConfig, ss_model: NetworkModel, initial_params=None):
    """Train the transient network against the frozen steady-state model."""
    if arch.input_dim != 4:
        raise ValueError("transient networks take (position, time, prev control, control)")
    if ss_model.norm != norm:
        raise ValueError("steady-state model was trained with different normalization")
    return _fit("transient", sys, norm, arch, config, ss_model=ss_model, initial_params=initial_params)


def best_of_seeds(regime, sys, norm, arch, config: TrainingConfig, seeds,
                  ss_model: NetworkModel | None = None, refine_max_iters: int | None = None):
    """Train once per seed, keep the best validation loss, optionally refine it.

    Each seed drives both the sampling streams and the weight initialization.
    The winner can be fine-tuned further by a longer L-BFGS run on the same
    point sets, mirroring a select-then-converge protocol.
    """
    trainer = train_steady if regime == "steady" else train_transient
    results = []
    for seed in seeds:
        cfg = dataclasses.replace(config, sampling_seed=seed, weights_seed=seed)
        if regime == "steady":
            model, report = trainer(sys, norm, arch, cfg)
        else:
            model, report = trainer(sys, norm, arch, cfg, ss_model)
        val = report.last_value("val_total")
        results.append({"seed": seed, "val_total": val, "model": model, "report": report})

    best = min(results, key=lambda r: r["val_total"])
    if refine_max_iters:
        cfg = dataclasses.replace(
            config,
            sampling_seed=best["seed"],
            weights_seed=best["seed"],
            adam=dataclasses.replace(config.adam, epochs=0),
            lbfgs=dataclasses.replace(config.lbfgs, max_iters=refine_max_iters),
        )
        if regime == "steady":
            model, report = trainer(sys, norm, arch, cfg, initial_params=best["model"].params)
        else:
            model, report = trainer(
                sys, norm, arch, cfg, ss_model, initial_params=best["model"].params
            )
        best = {
            "seed": best["seed"],
            "val_total": report.last_value("val_total"),
            "model": model,
            "report": report,
        }
    summary = [{k: r[k] for k in ("seed", "val_total")} for r in results]
    return best["model"], best["report"], summary
