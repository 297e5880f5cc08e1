"""Stochastic bilevel solver.

The outer loop mirrors the deterministic solver but consumes noisy
oracles: the inner loop is stochastic gradient descent with diminishing
steps, and the hypergradient correction applies the randomized
truncated Neumann-series inverse estimator to the noisy outer gradient,
using matrix-vector products only.  Rates are statements about
expectations, so runs come in seed ensembles whose metrics are averaged
with reported standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hia import hia_apply
from .inner import sgd_inner
from .problem import AssumptionViolation, FeasibleSet, NoiseSpec, SmoothnessConstants, derived_constants
from .testbeds import make_stochastic
from .trace import RunTrace, build_trace

AVERAGING_BY_CLASS = {
    "strongly_convex": "weighted_average",
    "convex": "uniform_average",
    "nonconvex": "last",
}


@dataclass
class StochasticHypergrad:
    grad: np.ndarray
    p_used: int
    samples: dict


@dataclass
class BsaSchedule:
    convexity_class: str
    alpha: Callable[[int], float]
    t_k: Callable[[int], int]
    b_k: Callable[[int], int]
    N: int
    seeds: tuple[int, ...] = (0,)
    averaging: str = "last"


def _b_rule(Q_g: float, half: bool, sqrt_target: bool, offset: int):
    """Truncation budget ceil(ln(target) / (c ln(Q/(Q-1)))) with floor 1.

    ``target`` is k + offset, halved in log when ``sqrt_target`` (the
    target enters as a square root) and divided by 2 again when ``half``.
    With Q_g = 1 the estimator is already exact after one term.
    """
    if Q_g <= 1.0:
        return lambda k: 1
    denom = math.log(Q_g / (Q_g - 1.0))
    scale = (0.5 if sqrt_target else 1.0) * (0.5 if half else 1.0)
    def rule(k: int) -> int:
        target = k + offset
        if target <= 1:
            return 1
        return max(1, math.ceil(scale * math.log(target) / denom))
    return rule


def bsa_schedule(convexity_class: str, c: SmoothnessConstants, N: int,
                 seeds=(0,), exact_paper_schedule: bool = False,
                 alpha_override: float | None = None) -> BsaSchedule:
    """Preset stochastic schedule for the given outer convexity class.

    Strongly convex: alpha_k = 4/(mu_f (k+2)), t_k = k (floored at 1
    unless ``exact_paper_schedule``), truncation depth growing like
    half the log of (k+2).  Convex and nonconvex use the horizon-tuned
    constant step 1/(2 L_f sqrt(N+1)) with t_k = k+1 and ceil(sqrt(k+1))
    respectively.
    """
    d = derived_constants(c)
    q = d.Q_g
    if convexity_class == "strongly_convex":
        if c.mu_f <= 0:
            raise ValueError("strongly_convex preset requires mu_f > 0")
        if c.C_fx is None:
            raise ValueError("strongly_convex stochastic runs need a declared C_fx")
        mu_f = c.mu_f
        alpha = (lambda k: alpha_override) if alpha_override is not None \
            else (lambda k: 4.0 / (mu_f * (k + 2.0)))
        if exact_paper_schedule:
            t_rule = lambda k: k
        else:
            t_rule = lambda k: max(1, k)
        b_rule = _b_rule(q, half=True, sqrt_target=False, offset=2)
    elif convexity_class == "convex":
        if d.L_f <= 0:
            raise ValueError("derived L_f must be positive")
        a = alpha_override if alpha_override is not None else 1.0 / (2.0 * d.L_f * math.sqrt(N + 1.0))
        alpha = lambda k: a
        t_rule = lambda k: k + 1
        b_rule = _b_rule(q, half=False, sqrt_target=True, offset=1)
    elif convexity_class == "nonconvex":
        if d.L_f <= 0:
            raise ValueError("derived L_f must be positive")
        a = alpha_override if alpha_override is not None else 1.0 / (2.0 * d.L_f * math.sqrt(N + 1.0))
        alpha = lambda k: a
        t_rule = lambda k: max(1, math.ceil(math.sqrt(k + 1.0)))
        b_rule = _b_rule(q, half=True, sqrt_target=True, offset=1)
    else:
        raise ValueError(f"unknown convexity class {convexity_class!r}")
    return BsaSchedule(convexity_class=convexity_class, alpha=alpha, t_k=t_rule,
                       b_k=b_rule, N=N, seeds=tuple(int(s) for s in seeds),
                       averaging=AVERAGING_BY_CLASS[convexity_class])


def stochastic_hypergradient(oracle, x, ybar, b: int, p_rng=None) -> StochasticHypergrad:
    """Noisy hypergradient with a Neumann-estimated inverse correction.

    Consumes one outer gradient pair (xi stream), one mixed Hessian
    sample (zeta2) and p inner Hessian samples (zeta3), where the
    truncation depth p is drawn from the oracle's dedicated stream.
    Counter effect: gc_f + 1, hc_g + (1 + p).
    """
    if b < 1:
        raise ValueError("b must be a positive integer")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ybar = np.atleast_1d(np.asarray(ybar, dtype=float))
    rng = p_rng if p_rng is not None else oracle.streams["hia_p"]
    gx, gy = oracle.grad_f_pair(x, ybar)
    h_xy = oracle.hess_xy_g(x, ybar)
    v, p = hia_apply(oracle, x, ybar, gy, b, rng)
    grad = gx - h_xy @ v
    return StochasticHypergrad(grad=grad, p_used=p,
                               samples={"xi": 1, "zeta2": 1, "zeta3": p})


def weighted_average_weights(N: int) -> np.ndarray:
    """Normalized weights of the weighted running average (proportional to k)."""
    w = np.arange(1, N + 1, dtype=float)
    return w / w.sum()


def bsa_run(oracle, feasible: FeasibleSet, x0, y0, sched: BsaSchedule,
            cold_start: bool = False, f_star=None,
            on_failure: str = "raise") -> RunTrace:
    """One seeded stochastic run; the oracle owns all randomness."""
    problem = oracle.problem
    x = feasible.project(np.atleast_1d(np.asarray(x0, dtype=float)))
    if not np.allclose(x, np.atleast_1d(np.asarray(x0, dtype=float)), atol=1e-10):
        raise ValueError("x0 must belong to the feasible set")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    y = y0.copy()

    xs = [x.copy()]
    canonical, grad_points, snaps = [], [], []
    t_used, b_used, p_used = [], [], []
    avg_sum = np.zeros_like(x)
    weighted_sum = np.zeros_like(x)
    failure = None

    for k in range(sched.N):
        t = sched.t_k(k)
        start = y0 if cold_start else y
        try:
            y = sgd_inner(oracle, x, start, t).y_final
            b = sched.b_k(k)
            sh = stochastic_hypergradient(oracle, x, y, b)
        except AssumptionViolation as exc:
            if on_failure != "partial":
                raise
            failure = str(exc)
            break
        grad_points.append(x.copy())
        x = feasible.project(x - sched.alpha(k) * sh.grad)
        xs.append(x.copy())

        avg_sum += x
        weighted_sum += (k + 1) * x
        if sched.averaging == "uniform_average":
            canonical.append(avg_sum / (k + 1))
        elif sched.averaging == "weighted_average":
            canonical.append(2.0 * weighted_sum / ((k + 1) * (k + 2)))
        else:
            canonical.append(x.copy())
        snaps.append(oracle.counters.snapshot())
        t_used.append(t)
        b_used.append(b)
        p_used.append(sh.p_used)

    done = len(canonical)
    x_avg = avg_sum / max(done, 1)
    x_weighted = 2.0 * weighted_sum / max(done * (done + 1), 1)
    if done:
        R = int(oracle.streams["r_draw"].integers(0, done))
        x_R = xs[R]
    else:
        R, x_R = None, None

    noise = getattr(oracle, "noise", None)
    meta = {
        "t_k": np.asarray(t_used), "b_k": np.asarray(b_used),
        "p_used": np.asarray(p_used), "cold_start": cold_start,
        "seed": getattr(oracle, "seed", None),
        "sigma_gy": getattr(noise, "sigma_gy", 0.0),
        "sigma_gyy": getattr(noise, "sigma_gyy", 0.0),
        "clamp_frequency": getattr(oracle, "clamp_frequency", 0.0),
        "numerical_failure": failure,
    }
    return build_trace(
        solver="bsa", convexity_class=sched.convexity_class, problem=problem,
        xs=xs, canonical_points=canonical, grad_points=grad_points,
        counter_snaps=snaps, f_star=f_star,
        x_avg=x_avg, x_weighted=x_weighted, x_R=x_R, R=R, meta=meta,
    )


@dataclass
class EnsembleSummary:
    """Across-seed means and standard errors of the per-iteration metrics."""

    seeds: tuple[int, ...]
    f_gap_mean: np.ndarray
    f_gap_se: np.ndarray
    grad_norm_sq_mean: np.ndarray
    grad_norm_sq_se: np.ndarray
    final_f_gap_mean: float
    final_f_gap_se: float
    grad_at_R_mean: float
    grad_at_R_se: float
    traces: list = field(default_factory=list)


def _mean_se(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = rows.mean(axis=0)
    if rows.shape[0] > 1:
        se = rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
    else:
        se = np.zeros_like(mean)
    return mean, se


def bsa_ensemble(problem, noise, feasible: FeasibleSet, x0, y0,
                 sched: BsaSchedule, cold_start: bool = False,
                 f_star=None) -> EnsembleSummary:
    """Run one seeded trace per entry of sched.seeds and aggregate.

    ``grad_at_R`` is the exact expectation over the uniform reporting
    index (the mean over iterations of the pre-step gradient norms),
    averaged across seeds; a drawn x_R is still attached to each trace.
    """
    if isinstance(noise, dict):
        noise = NoiseSpec(**noise)
    traces = []
    for seed in sched.seeds:
        oracle = make_stochastic(problem, noise, seed)
        traces.append(bsa_run(oracle, feasible, x0, y0, sched,
                              cold_start=cold_start, f_star=f_star))
    gaps = np.vstack([t.f_gap for t in traces])
    grads = np.vstack([t.grad_norm_sq for t in traces])
    gap_mean, gap_se = _mean_se(gaps)
    grad_mean, grad_se = _mean_se(grads)
    per_seed_er = grads.mean(axis=1)
    er_mean, er_se = _mean_se(per_seed_er.reshape(-1, 1))
    return EnsembleSummary(
        seeds=sched.seeds,
        f_gap_mean=gap_mean, f_gap_se=gap_se,
        grad_norm_sq_mean=grad_mean, grad_norm_sq_se=grad_se,
        final_f_gap_mean=float(gap_mean[-1]), final_f_gap_se=float(gap_se[-1]),
        grad_at_R_mean=float(er_mean[0]), grad_at_R_se=float(er_se[0]),
        traces=traces,
    )
