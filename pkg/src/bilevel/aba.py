"""Accelerated deterministic bilevel solver.

The outer loop is a momentum scheme on the composed objective: a
lookahead point x_md mixes the proximal iterate x_k with the reported
iterate x_ag, the inner loop tracks y*(x_md), and a single approximate
hypergradient drives two proximal updates, one with a pair of quadratic
terms (producing x_{k+1}) and one plain projected step of size alpha
(producing x_ag_{k+1}).  The weights theta_k, lambda_k, gamma_k follow
closed-form recursions validated at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hypergrad import hypergradient
from .inner import gd_inner
from .problem import AssumptionViolation, FeasibleSet, SmoothnessConstants, derived_constants
from .trace import RunTrace, build_trace


@dataclass
class AbaState:
    """One outer iteration's coefficients and points (diagnostic record)."""

    k: int
    x: np.ndarray
    x_ag: np.ndarray
    x_md: np.ndarray
    theta: float
    eta: float
    lam: float
    gamma: float
    Gamma: float
    Gamma_bar: float


def gamma_sequence(gamma_rule, N: int) -> np.ndarray:
    """Cumulative products Gamma_1..Gamma_N of (1 - gamma_k).

    Gamma_1 is 1 when gamma_0 = 1 and (1 - gamma_0) otherwise; each
    subsequent term multiplies by (1 - gamma_k).  ``gamma_rule`` is a
    callable k -> gamma_k or a sequence of length >= N; every gamma must
    lie in (0, 1].
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    get = gamma_rule if callable(gamma_rule) else (lambda k: gamma_rule[k])
    gammas = [float(get(k)) for k in range(N)]
    for g in gammas:
        if not (0.0 < g <= 1.0):
            raise ValueError("every gamma_k must lie in (0, 1]")
    out = np.empty(N)
    out[0] = 1.0 if gammas[0] == 1.0 else 1.0 - gammas[0]
    for k in range(1, N):
        out[k] = out[k - 1] * (1.0 - gammas[k])
    return out


@dataclass
class AbaSchedule:
    convexity_class: str
    alpha: float
    t_k: Callable[[int], int]
    N: int
    theta: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray
    Gamma: np.ndarray          # Gamma_1..Gamma_N
    Gamma_bar: np.ndarray      # Gamma_bar_0..Gamma_bar_N (products of 1 - theta)
    mu_f: float


def aba_schedule(convexity_class: str, c: SmoothnessConstants, N: int,
                 alpha_override: float | None = None) -> AbaSchedule:
    """Build and validate the accelerated schedule for the given class.

    Strongly convex: t_k = k+1, theta_k fromosed-form positive root of
    theta^2 = alpha mu_f / 4 + (1 - theta) Gamma_bar_k, constant
    gamma = min(sqrt(mu_f/(3 L_f))/2, 2/(Q_g+1)).  Convex: theta_k =
    gamma_k = 2/(k+2) and t_k = ceil(sqrt(k+1)).  Both use
    lambda_k = 8 Gamma_{k+1} / alpha, which keeps lambda_k/Gamma_{k+1}
    constant.  A failed feasibility check here is a construction bug and
    raises.
    """
    if convexity_class not in ("strongly_convex", "convex"):
        raise ValueError("accelerated presets exist for strongly_convex and convex only")
    d = derived_constants(c)
    if d.L_f <= 0:
        raise ValueError("derived L_f must be positive")
    alpha = alpha_override if alpha_override is not None else 1.0 / (3.0 * d.L_f)

    theta = np.empty(N)
    gamma = np.empty(N)
    gamma_bar = np.empty(N + 1)
    gamma_bar[0] = 1.0

    if convexity_class == "strongly_convex":
        if c.mu_f <= 0:
            raise ValueError("strongly_convex preset requires mu_f > 0")
        g_const = min(0.5 * math.sqrt(c.mu_f / (3.0 * d.L_f)), 2.0 / (d.Q_g + 1.0))
        for k in range(N):
            gb = gamma_bar[k]
            theta[k] = 0.5 * (-gb + math.sqrt(gb * gb + 4.0 * gb + alpha * c.mu_f))
            gamma_bar[k + 1] = (1.0 - theta[k]) * gb
            gamma[k] = g_const
        t_rule = lambda k: k + 1
    else:
        for k in range(N):
            theta[k] = 2.0 / (k + 2.0)
            gamma[k] = theta[k]
            gamma_bar[k + 1] = (1.0 - theta[k]) * gamma_bar[k]
        t_rule = lambda k: max(1, math.ceil(math.sqrt(k + 1)))

    big_gamma = gamma_sequence(gamma, N)
    lam = 8.0 * big_gamma / alpha  # lambda_k pairs with Gamma_{k+1}

    mu_f = c.mu_f if convexity_class == "strongly_convex" else 0.0
    for k in range(N):
        if not (0.0 < theta[k] <= 1.0):
            raise AssertionError(f"theta_{k}={theta[k]} outside (0, 1]")
        if theta[k] ** 2 > alpha * (mu_f + lam[k]) / 4.0 + 1e-12:
            raise AssertionError(f"schedule infeasible at k={k}: theta too large")
        if convexity_class == "strongly_convex":
            resid = theta[k] ** 2 - (alpha * mu_f / 4.0 + (1.0 - theta[k]) * gamma_bar[k])
            if abs(resid) > 1e-12:
                raise AssertionError(f"theta root identity violated at k={k}: {resid}")
    ratios = lam / big_gamma
    if not np.allclose(ratios, ratios[0], rtol=1e-12, atol=0.0):
        raise AssertionError("lambda_k / Gamma_{k+1} is not constant")

    return AbaSchedule(convexity_class=convexity_class, alpha=alpha, t_k=t_rule,
                       N=N, theta=theta, lam=lam, gamma=gamma,
                       Gamma=big_gamma, Gamma_bar=gamma_bar, mu_f=mu_f)


def _eta(theta: float, mu_f: float, lam: float) -> float:
    num = theta * (mu_f + lam) - theta * theta * mu_f
    den = mu_f + lam - theta * theta * mu_f
    return num / den


def aba_run(oracle, feasible: FeasibleSet, x0, y0, sched: AbaSchedule,
            cold_start: bool = False, f_star=None,
            record_states: bool = False, on_failure: str = "raise") -> RunTrace:
    """Run the accelerated solver; the trace reports the x_ag sequence.

    The combined proximal subproblem for x_{k+1} has two quadratic
    terms; completing the square reduces it to a single projection of
    (c1 x_md + c2 x_k - grad) / (c1 + c2), exact for every supported
    feasible set.
    """
    problem = oracle.problem
    x = feasible.project(np.atleast_1d(np.asarray(x0, dtype=float)))
    if not np.allclose(x, np.atleast_1d(np.asarray(x0, dtype=float)), atol=1e-10):
        raise ValueError("x0 must belong to the feasible set")
    x_ag = x.copy()
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    y = y0.copy()

    xs = [x.copy()]
    canonical, grad_points, snaps, states = [], [], [], []
    t_used = []
    mu_f = sched.mu_f
    failure = None

    for k in range(sched.N):
        theta = float(sched.theta[k])
        lam = float(sched.lam[k])
        eta = _eta(theta, mu_f, lam)
        if not (-1e-12 <= eta <= 1.0 + 1e-12):
            raise AssertionError(f"eta_{k}={eta} outside [0, 1]")
        x_md = eta * x + (1.0 - eta) * x_ag

        t = sched.t_k(k)
        start = y0 if cold_start else y
        try:
            y = gd_inner(oracle, x_md, start, t).y_final
            grad = hypergradient(oracle, x_md, y).grad
        except AssumptionViolation as exc:
            if on_failure != "partial":
                raise
            failure = str(exc)
            break
        grad_points.append(x_md.copy())

        c1 = mu_f / 2.0
        c2 = ((1.0 - theta) * mu_f + lam) / (2.0 * theta)
        x = feasible.project((c1 * x_md + c2 * x - grad) / (c1 + c2))
        x_ag = feasible.project(x_md - sched.alpha * grad)

        xs.append(x.copy())
        canonical.append(x_ag.copy())
        snaps.append(oracle.counters.snapshot())
        t_used.append(t)
        if record_states:
            states.append(AbaState(k=k, x=x.copy(), x_ag=x_ag.copy(), x_md=x_md.copy(),
                                   theta=theta, eta=eta, lam=lam,
                                   gamma=float(sched.gamma[k]),
                                   Gamma=float(sched.Gamma[k]),
                                   Gamma_bar=float(sched.Gamma_bar[k + 1])))

    trace = build_trace(
        solver="aba", convexity_class=sched.convexity_class, problem=problem,
        xs=xs, canonical_points=canonical, grad_points=grad_points,
        counter_snaps=snaps, f_star=f_star,
        meta={"t_k": np.asarray(t_used), "cold_start": cold_start,
              "alpha": sched.alpha,
              "x_ag_final": canonical[-1] if canonical else x_ag,
              "states": states, "numerical_failure": failure},
    )
    return trace
