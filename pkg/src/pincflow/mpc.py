"""Constrained finite-horizon control on top of the transient surrogate.

The horizon problem minimizes squared tracking error of the probed output
plus a control-move penalty, subject to bounds on the predicted output's
change per sampling interval, an optional output floor, optional hard
control-rate limits, and box bounds on the control.  It is solved with an
augmented-Lagrangian outer loop around a projected quasi-Newton inner solve;
a feasible incumbent is tracked across outer iterations so the reported
objective never increases.

The closed loop follows a measure / re-bias / solve / apply cycle: the
mismatch between the measurement and the model's one-interval-old prediction
becomes an additive output offset over the whole horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import NetworkModel, forward_with_jacobian
from .physics import FluidSystem, NormalizationRefs
from .plant import PlantGrid, probe_state, steady_solve, step_transient


@dataclass(frozen=True)
class MpcConfig:
    prediction_horizon: int          # steps the output is shaped over
    control_horizon: int             # independent control moves
    sampling_seconds: float
    probe_x: float                   # normalized measurement position
    y_target: float                  # normalized output target
    output_move_max: float           # max |predicted output change| per step
    move_penalty: float = 1e-2
    y_min: float | None = None       # optional hard floor on predicted output
    u_move_max: float | None = None  # optional hard control-rate limit
    tol_constraint: float = 1e-6
    tol_grad: float = 1e-6
    max_outer: int = 40
    max_inner: int = 300

    def __post_init__(self):
        if not 1 <= self.control_horizon <= self.prediction_horizon:
            raise ValueError("need 1 <= control horizon <= prediction horizon")
        if self.output_move_max < 0:
            raise ValueError("output_move_max must be nonnegative")
        if self.sampling_seconds <= 0:
            raise ValueError("sampling_seconds must be positive")


@dataclass
class MpcSolution:
    controls: np.ndarray          # optimal moves, length control_horizon
    predicted: np.ndarray         # biased output predictions over the horizon
    objective: float
    status: str                   # "converged" | "least_infeasible"
    max_violation: float
    outer_objectives: list        # feasible-incumbent objective per outer iteration


class SurrogatePredictor:
    """One-sampling-interval output prediction from the transient network."""

    supports_batch = True

    def __init__(self, model: NetworkModel, cfg: MpcConfig):
        if model.arch.input_dim != 4:
            raise ValueError("the predictor needs the transient network")
        self.model = model
        self.ts_norm = cfg.sampling_seconds / model.norm.t_ref
        if not 0 < self.ts_norm <= 1:
            raise ValueError("sampling time must lie within the trained window")
        self.probe_x = cfg.probe_x

    def _inputs(self, u_prev, u_curr):
        u_prev = np.asarray(u_prev, dtype=float).ravel()
        u_curr = np.asarray(u_curr, dtype=float).ravel()
        n = u_prev.size
        return np.column_stack(
            [np.full(n, self.probe_x), np.full(n, self.ts_norm), u_prev, u_curr]
        )

    def predict(self, u_prev, u_curr):
        from .network import forward

        y = forward(self.model.arch, self.model.params, self._inputs(u_prev, u_curr))
        return y[:, 0]

    def predict_with_grad(self, u_prev, u_curr):
        y, jac = forward_with_jacobian(
            self.model.arch, self.model.params, self._inputs(u_prev, u_curr),
            tangent_dims=(2, 3),
        )
        return y[:, 0], jac[:, 0, 0], jac[:, 0, 1]


class PlantPredictor:
    """Oracle predictor that queries the plant itself (perfect-model mode).

    Each prediction starts from the steady state of the previous control and
    integrates one sampling interval; gradients are central differences.
    """

    supports_batch = False

    def __init__(self, sys: FluidSystem, norm: NormalizationRefs, grid: PlantGrid,
                 cfg: MpcConfig, dt: float | None = None):
        self.sys = sys
        self.norm = norm
        self.grid = grid
        self.cfg = cfg
        self.dt = dt if dt is not None else cfg.sampling_seconds / 10.0

    def _single(self, u_prev, u_curr):
        state = steady_solve(self.sys, float(u_prev), self.norm, self.grid)
        steps = max(1, round(self.cfg.sampling_seconds / self.dt))
        for _ in range(steps):
            state = step_transient(
                self.sys, state, float(u_curr), self.cfg.sampling_seconds / steps,
                self.norm, self.grid,
            )
        pressure = probe_state(self.sys, state, [self.cfg.probe_x], self.grid)[0]
        return float(pressure[0]) / self.norm.p_ref

    def predict(self, u_prev, u_curr):
        u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
        u_curr = np.atleast_1d(np.asarray(u_curr, dtype=float))
        return np.array([self._single(a, b) for a, b in zip(u_prev, u_curr)])

    def predict_with_grad(self, u_prev, u_curr, h=1e-5):
        u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
        u_curr = np.atleast_1d(np.asarray(u_curr, dtype=float))
        y = self.predict(u_prev, u_curr)
        d_prev = (self.predict(u_prev + h, u_curr) - self.predict(u_prev - h, u_curr)) / (2 * h)
        d_curr = (self.predict(u_prev, u_curr + h) - self.predict(u_prev, u_curr - h)) / (2 * h)
        return y, d_prev, d_curr


class _HorizonProblem:
    """Objective, constraints, and their exact gradients in the move variables."""

    def __init__(self, predictor, cfg: MpcConfig, u_prev, y0, bias):
        self.predictor = predictor
        self.cfg = cfg
        self.u_prev = float(u_prev)
        self.y0 = float(y0)
        self.bias = float(bias)
        self.n = cfg.control_horizon
        # horizon index i -> decision variable of u_i (u_0 is fixed)
        self.var_of = [None] + [min(i, self.n) - 1 for i in range(1, cfg.prediction_horizon + 1)]

    def horizon_controls(self, w):
        return np.concatenate([[self.u_prev], w[np.minimum(np.arange(1, self.cfg.prediction_horizon + 1), self.n) - 1]])

    def _predictions(self, w, with_grad):
        u = self.horizon_controls(w)
        pairs_prev, pairs_curr = u[:-1], u[1:]
        if with_grad:
            y, d_prev, d_curr = self.predictor.predict_with_grad(pairs_prev, pairs_curr)
        else:
            y = self.predictor.predict(pairs_prev, pairs_curr)
            d_prev = d_curr = None
        y = y + self.bias
        grads = None
        if with_grad:
            n_p = self.cfg.prediction_horizon
            grads = np.zeros((n_p, self.n))
            for i in range(1, n_p + 1):
                j_curr = self.var_of[i]
                grads[i - 1, j_curr] += d_curr[i - 1]
                j_prev = self.var_of[i - 1]
                if j_prev is not None:
                    grads[i - 1, j_prev] += d_prev[i - 1]
        return y, grads

    def evaluate(self, w, with_grad=True):
        """Returns (objective, d_objective, predictions, g, G) with g <= 0 feasible."""
        cfg = self.cfg
        y, dy = self._predictions(w, with_grad)
        u = self.horizon_controls(w)

        err = y - cfg.y_target
        objective = float(np.sum(err**2))
        moves = u[1 : self.n + 1] - u[: self.n]
        objective += cfg.move_penalty * float(np.sum(moves**2))

        d_obj = None
        if with_grad:
            d_obj = 2.0 * (err @ dy)
            for i in range(1, self.n + 1):
                delta = u[i] - u[i - 1]
                d_obj[self.var_of[i]] += 2.0 * cfg.move_penalty * delta
                if self.var_of[i - 1] is not None:
                    d_obj[self.var_of[i - 1]] -= 2.0 * cfg.move_penalty * delta

        g_rows, grad_rows = [], []

        def constraint(value, grad):
            g_rows.append(value)
            if with_grad:
                grad_rows.append(grad)

        zeros = np.zeros(self.n)
        dy_or_zeros = dy if with_grad else [zeros] * len(y)
        # first predicted move is measured against the current measurement
        constraint(y[0] - self.y0 - cfg.output_move_max, +dy_or_zeros[0])
        constraint(self.y0 - y[0] - cfg.output_move_max, -dy_or_zeros[0])
        for i in range(1, cfg.prediction_horizon):
            diff_grad = dy_or_zeros[i] - dy_or_zeros[i - 1]
            constraint(y[i] - y[i - 1] - cfg.output_move_max, +diff_grad)
            constraint(y[i - 1] - y[i] - cfg.output_move_max, -diff_grad)
        if cfg.y_min is not None:
            for i in range(cfg.prediction_horizon):
                constraint(cfg.y_min - y[i], -dy_or_zeros[i])
        if cfg.u_move_max is not None:
            for i in range(1, self.n + 1):
                grad = np.zeros(self.n)
                grad[self.var_of[i]] += 1.0
                if self.var_of[i - 1] is not None:
                    grad[self.var_of[i - 1]] -= 1.0
                delta = u[i] - u[i - 1]
                constraint(delta - cfg.u_move_max, grad.copy())
                constraint(-delta - cfg.u_move_max, -grad)

        g = np.asarray(g_rows)
        big_g = np.asarray(grad_rows) if with_grad else None
        return objective, d_obj, y, g, big_g


def _project(w):
    return np.clip(w, 0.0, 1.0)


def _projected_grad_norm(w, grad):
    return float(np.max(np.abs(w - _project(w - grad))))


def _inner_minimize(problem, w, mu, rho, tol, max_iter):
    """Projected BFGS on the augmented Lagrangian."""

    def al_value_grad(w):
        obj, d_obj, _, g, big_g = problem.evaluate(w)
        active = np.maximum(0.0, mu + rho * g)
        value = obj + float(np.sum(active**2 - mu**2)) / (2.0 * rho)
        grad = d_obj + active @ big_g
        return value, grad

    value, grad = al_value_grad(w)
    h_inv = np.eye(w.size)
    for _ in range(max_iter):
        if _projected_grad_norm(w, grad) <= tol:
            break
        direction = -h_inv @ grad
        if np.dot(direction, grad) > 0:
            direction = -grad
        step, accepted = 1.0, False
        for _ in range(40):
            w_new = _project(w + step * direction)
            if np.max(np.abs(w_new - w)) == 0.0:
                break
            value_new, grad_new = al_value_grad(w_new)
            if value_new <= value + 1e-4 * np.dot(grad, w_new - w):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        s, y_vec = w_new - w, grad_new - grad
        sy = float(np.dot(s, y_vec))
        if sy > 1e-12:
            rho_b = 1.0 / sy
            eye = np.eye(w.size)
            h_inv = (eye - rho_b * np.outer(s, y_vec)) @ h_inv @ (
                eye - rho_b * np.outer(y_vec, s)
            ) + rho_b * np.outer(s, s)
        w, value, grad = w_new, value_new, grad_new
    return w


def _candidate_starts(problem, cfg, u_prev):
    starts = [np.full(cfg.control_horizon, u_prev)]
    if getattr(problem.predictor, "supports_batch", False):
        # coarse feasibility-aware scan; batched, so cheap for the surrogate
        if cfg.control_horizon == 1:
            grid = np.linspace(0.0, 1.0, 101)[:, None]
        elif cfg.control_horizon == 2:
            axis = np.linspace(0.0, 1.0, 21)
            grid = np.array([[a, b] for a in axis for b in axis])
        else:
            return starts
        best, best_score = None, np.inf
        for w in grid:
            obj, _, _, g, _ = problem.evaluate(w, with_grad=False)
            score = obj + 1e4 * float(np.sum(np.maximum(0.0, g) ** 2))
            if score < best_score:
                best, best_score = w, score
        starts.append(best)
    return starts


def solve_horizon(predictor, cfg: MpcConfig, u_prev: float, y0: float,
                  bias: float = 0.0) -> MpcSolution:
    """Solve the horizon problem; infeasible problems return the least-
    infeasible point with a flagged status."""
    problem = _HorizonProblem(predictor, cfg, u_prev, y0, bias)

    best = None  # (objective, w, predictions, violation)
    least_infeasible = None
    outer_objectives = []

    for w0 in _candidate_starts(problem, cfg, u_prev):
        mu = None
        rho = 10.0
        w = w0.copy()
        prev_violation = np.inf
        for _ in range(cfg.max_outer):
            obj, _, predictions, g, _ = problem.evaluate(w, with_grad=False)
            if mu is None:
                mu = np.zeros(g.size)
            violation = float(max(0.0, np.max(g))) if g.size else 0.0
            if least_infeasible is None or violation < least_infeasible[3]:
                least_infeasible = (obj, w.copy(), predictions, violation)
            if violation <= cfg.tol_constraint:
                if best is None or obj < best[0]:
                    best = (obj, w.copy(), predictions, violation)
            outer_objectives.append(best[0] if best is not None else np.inf)
            if violation <= cfg.tol_constraint:
                _, d_obj, _, g, big_g = problem.evaluate(w)
                active = np.maximum(0.0, mu + rho * g)
                grad = d_obj + active @ big_g
                if _projected_grad_norm(w, grad) <= cfg.tol_grad:
                    break
            w = _inner_minimize(problem, w, mu, rho, cfg.tol_grad, cfg.max_inner)
            _, _, _, g, _ = problem.evaluate(w, with_grad=False)
            mu = np.maximum(0.0, mu + rho * g)
            violation = float(max(0.0, np.max(g))) if g.size else 0.0
            if violation > 0.25 * prev_violation and violation > cfg.tol_constraint:
                rho = min(rho * 10.0, 1e10)
            prev_violation = max(violation, 1e-300)

    if best is not None:
        obj, w, predictions, violation = best
        status = "converged"
    else:
        obj, w, predictions, violation = least_infeasible
        status = "least_infeasible"
    return MpcSolution(
        controls=w,
        predicted=predictions,
        objective=obj,
        status=status,
        max_violation=violation,
        outer_objectives=[v for v in outer_objectives if np.isfinite(v)],
    )


# closed loop --------------------------------------------------------------------


@dataclass
class ClosedLoopHistory:
    """Per-sample record of the measure / solve / apply cycle (SI units)."""

    times: np.ndarray
    u_applied: np.ndarray
    y_measured: np.ndarray     # Pa
    y_predicted: np.ndarray    # Pa, first-step biased prediction
    bias: np.ndarray           # Pa
    status: list
    objective: np.ndarray
    y_min: np.ndarray          # normalized active floor (nan when absent)
    final_measurement: float   # Pa, after the last interval

    def rate_violations(self, output_move_max_norm, p_ref, slack=0.25) -> int:
        """Count measured moves beyond the bound plus mismatch slack."""
        series = np.concatenate([self.y_measured, [self.final_measurement]])
        moves = np.abs(np.diff(series)) / p_ref
        return int(np.sum(moves > output_move_max_norm * (1.0 + slack) + 1e-12))


def _active_floor(schedule, t):
    if schedule is None:
        return None
    value = None
    for t_from, level in schedule:
        if t >= t_from - 1e-9:
            value = level
    return value


def closed_loop(predictor, sys: FluidSystem, norm: NormalizationRefs, cfg: MpcConfig,
                grid: PlantGrid, u_init: float, duration_seconds: float,
                dt: float | None = None, y_min_schedule=None) -> ClosedLoopHistory:
    """Run the controller against the finite-difference plant.

    ``y_min_schedule`` is an optional list of (t_from_seconds, normalized
    floor) pairs; the most recent entry at each sampling instant is active.
    The plant starts at the steady state of ``u_init``.
    """
    ts = cfg.sampling_seconds
    if dt is None:
        dt = ts / 10.0
    substeps = round(ts / dt)
    if substeps < 1 or abs(substeps * dt - ts) > 1e-9 * ts:
        raise ValueError("dt must divide the sampling time")
    n_steps = round(duration_seconds / ts)

    state = steady_solve(sys, u_init, norm, grid)
    u_before_prev, u_prev = u_init, u_init

    rows = {key: [] for key in ("t", "u", "y", "yp", "b", "status", "obj", "ymin")}
    for k in range(n_steps):
        t = k * ts
        y_meas = float(probe_state(sys, state, [cfg.probe_x], grid)[0][0]) / norm.p_ref
        if k == 0:
            bias = 0.0
        else:
            bias = y_meas - float(predictor.predict([u_before_prev], [u_prev])[0])
        floor = _active_floor(y_min_schedule, t)
        step_cfg = cfg if floor is None else replace(cfg, y_min=floor)
        solution = solve_horizon(predictor, step_cfg, u_prev, y_meas, bias)
        u_apply = float(solution.controls[0])

        for _ in range(substeps):
            state = step_transient(sys, state, u_apply, dt, norm, grid)

        rows["t"].append(t)
        rows["u"].append(u_apply)
        rows["y"].append(y_meas * norm.p_ref)
        rows["yp"].append(float(solution.predicted[0]) * norm.p_ref)
        rows["b"].append(bias * norm.p_ref)
        rows["status"].append(solution.status)
        rows["obj"].append(solution.objective)
        rows["ymin"].append(np.nan if floor is None else floor)
        u_before_prev, u_prev = u_prev, u_apply

    final_y = float(probe_state(sys, state, [cfg.probe_x], grid)[0][0])
    return ClosedLoopHistory(
        times=np.asarray(rows["t"]),
        u_applied=np.asarray(rows["u"]),
        y_measured=np.asarray(rows["y"]),
        y_predicted=np.asarray(rows["yp"]),
        bias=np.asarray(rows["b"]),
        status=rows["status"],
        objective=np.asarray(rows["obj"]),
        y_min=np.asarray(rows["ymin"]),
        final_measurement=final_y,
    )
