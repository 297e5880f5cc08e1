"""Least-squares slope fitting for empirical convergence-order checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SlopeFit:
    """Log-log power-law fit of a metric against the iteration budget.

    ``slope``/``intercept``/``r_squared`` describe the fit of
    log(metric) against log(N) over ``window``.  The semilog fields fit
    log(metric) against N itself; when that fit explains the data better
    the decay is flagged super-polynomial (e.g. geometric sequences).
    """

    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]
    n_points: int
    n_excluded: int
    semilog_slope: float
    semilog_r_squared: float
    super_polynomial: bool


def _least_squares(u: np.ndarray, v: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(u, v, 1)
    pred = slope * u + intercept
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - np.mean(v)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(intercept), min(1.0, r2)


def fit_rate(values, window: tuple[int, int], budgets=None) -> SlopeFit:
    """Fit the decay order of ``values`` over budgets in ``window``.

    ``values[i]`` is the metric at budget ``budgets[i]``; without
    explicit budgets, entry i is taken at budget i + 1 (trace row
    convention).  Nonpositive values cannot enter a log fit and are
    excluded, with the count reported.
    """
    values = np.asarray(values, dtype=float)
    if budgets is None:
        budgets = np.arange(1, len(values) + 1)
    budgets = np.asarray(budgets, dtype=float)
    lo, hi = window
    if lo > hi:
        raise ValueError("window must satisfy lo <= hi")
    in_window = (budgets >= lo) & (budgets <= hi)
    if not np.any(in_window):
        raise ValueError("window selects no points")
    pos = in_window & (values > 0) & np.isfinite(values)
    n_excluded = int(np.sum(in_window) - np.sum(pos))
    if np.sum(pos) < 2:
        raise ValueError("need at least two positive points to fit")
    n = budgets[pos]
    v = np.log(values[pos])
    slope, intercept, r2 = _least_squares(np.log(n), v)
    semi_slope, _, semi_r2 = _least_squares(n, v)
    return SlopeFit(slope=slope, intercept=intercept, r_squared=r2,
                    window=(int(lo), int(hi)), n_points=int(np.sum(pos)),
                    n_excluded=n_excluded, semilog_slope=semi_slope,
                    semilog_r_squared=semi_r2,
                    super_polynomial=bool(semi_r2 > r2))
