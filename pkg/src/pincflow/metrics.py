"""Model assessment: percentage errors, fit indices, and wall-clock ratios."""

from __future__ import annotations

import time

import numpy as np


def mape(y_true, y_est) -> float:
    """Mean absolute percentage error, in percent.

    Requires every true value to be nonzero (the error is relative).
    """
    y_true = np.asarray(y_true, dtype=float)
    y_est = np.asarray(y_est, dtype=float)
    if y_true.shape != y_est.shape or y_true.size == 0:
        raise ValueError("series must be nonempty and equally shaped")
    if np.any(y_true == 0.0):
        raise ValueError("MAPE is undefined when the true series contains zeros")
    return float(np.mean(np.abs((y_true - y_est) / y_true)) * 100.0)


def fit_compare(y_true, y_est) -> float:
    """Fit index in percent: 100 means identical, 0 matches a constant mean.

    Defined as one minus the ratio of the residual norm to the norm of the
    true series' deviation from its mean.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_est = np.asarray(y_est, dtype=float)
    if y_true.shape != y_est.shape or y_true.size == 0:
        raise ValueError("series must be nonempty and equally shaped")
    spread = np.linalg.norm(y_true - np.mean(y_true))
    if spread == 0.0:
        raise ValueError("fit index is undefined for a constant true series")
    return float((1.0 - np.linalg.norm(y_true - y_est) / spread) * 100.0)


def mean_fit_over_probes(true_matrix, est_matrix) -> float:
    """Arithmetic mean of the per-probe (per-column) fit indices."""
    true_matrix = np.asarray(true_matrix, dtype=float)
    est_matrix = np.asarray(est_matrix, dtype=float)
    fits = [fit_compare(true_matrix[:, j], est_matrix[:, j]) for j in range(true_matrix.shape[1])]
    return float(np.mean(fits))


def speed_ratio(model_run, plant_run, repeats: int = 5) -> float:
    """Median wall time of the reference run over the surrogate run.

    Both callables must perform the identical trajectory request.
    """
    if repeats < 5:
        raise ValueError("use at least 5 repetitions")

    def median_time(fn):
        samples = []
        for _ in range(repeats):
            start = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - start)
        return float(np.median(samples))

    return median_time(plant_run) / median_time(model_run)
