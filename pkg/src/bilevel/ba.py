"""Deterministic bilevel solver: projected approximate-gradient descent.

Each outer iteration runs t_k inner gradient steps to track y*(x_k),
forms the approximate hypergradient there, and takes a projected step
with constant stepsize 1/(3 L_f).  The preset inner budgets are
t_k = k+1 (strongly convex outer objective), ceil((k+1)^(1/4)) (convex)
and ceil((k+1)^(1/4)/2) (nonconvex), each floored at one step.
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

CONVEXITY_CLASSES = ("strongly_convex", "convex", "nonconvex")


@dataclass
class ScheduleSpec:
    """Outer stepsize and inner iteration budget for a fixed-horizon run."""

    convexity_class: str
    alpha: Callable[[int], float]
    t_k: Callable[[int], int]
    N: int

    def __post_init__(self):
        if self.convexity_class not in CONVEXITY_CLASSES:
            raise ValueError(f"unknown convexity class {self.convexity_class!r}")
        if self.N < 1:
            raise ValueError("N must be at least 1")


def ba_schedule(convexity_class: str, c: SmoothnessConstants, N: int,
                alpha_override: float | None = None,
                t_const: int | None = None) -> ScheduleSpec:
    """Preset schedule for the given outer convexity class."""
    d = derived_constants(c)
    if d.L_f <= 0:
        raise ValueError("derived L_f must be positive to set the stepsize")
    if convexity_class == "strongly_convex" and c.mu_f <= 0:
        raise ValueError("strongly_convex preset requires mu_f > 0")
    alpha_value = alpha_override if alpha_override is not None else 1.0 / (3.0 * d.L_f)

    if t_const is not None:
        t_rule = lambda k: max(1, int(t_const))
    elif convexity_class == "strongly_convex":
        t_rule = lambda k: k + 1
    elif convexity_class == "convex":
        t_rule = lambda k: max(1, math.ceil((k + 1) ** 0.25))
    else:
        t_rule = lambda k: max(1, math.ceil((k + 1) ** 0.25 / 2.0))

    return ScheduleSpec(convexity_class=convexity_class,
                        alpha=lambda k: alpha_value, t_k=t_rule, N=N)


def ba_run(oracle, feasible: FeasibleSet, x0, y0, sched: ScheduleSpec,
           cold_start: bool = False, seed: int = 0, f_star=None,
           on_failure: str = "raise") -> RunTrace:
    """Run the solver for sched.N outer iterations and return the trace.

    The inner loop warm starts from the previous inner output unless
    ``cold_start`` is set, in which case every outer iteration restarts
    from y0 (the regime the theoretical bounds are stated in).  For the
    nonconvex class a reporting index R is drawn uniformly over
    {0, ..., N-1} from a dedicated stream seeded by ``seed``.  With
    ``on_failure="partial"`` a failed inner-Hessian factorization stops
    the loop and returns the completed iterations instead of raising.
    """
    problem = oracle.problem
    x = feasible.project(np.atleast_1d(np.asarray(x0, dtype=float)))
    if not np.allclose(x, np.atleast_1d(np.asarray(x0, dtype=float)), atol=1e-10):
        raise ValueError("x0 must belong to the feasible set")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    y = y0.copy()

    xs = [x.copy()]
    canonical, grad_points, snaps = [], [], []
    t_used = []
    avg_sum = np.zeros_like(x)
    failure = None

    for k in range(sched.N):
        t = sched.t_k(k)
        start = y0 if cold_start else y
        try:
            y = gd_inner(oracle, x, start, t).y_final
            hg = hypergradient(oracle, x, y)
        except AssumptionViolation as exc:
            if on_failure != "partial":
                raise
            failure = str(exc)
            break
        grad_points.append(x.copy())
        x = feasible.project(x - sched.alpha(k) * hg.grad)
        xs.append(x.copy())
        avg_sum += x
        if sched.convexity_class == "convex":
            canonical.append(avg_sum / (k + 1))
        else:
            canonical.append(x.copy())
        snaps.append(oracle.counters.snapshot())
        t_used.append(t)

    done = len(canonical)
    x_avg = avg_sum / max(done, 1)
    x_R = R = None
    if sched.convexity_class == "nonconvex" and done:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(101,)))
        R = int(rng.integers(0, done))
        x_R = xs[R]

    return build_trace(
        solver="ba", convexity_class=sched.convexity_class, problem=problem,
        xs=xs, canonical_points=canonical, grad_points=grad_points,
        counter_snaps=snaps, f_star=f_star,
        x_avg=x_avg, x_R=x_R, R=R,
        meta={"t_k": np.asarray(t_used), "cold_start": cold_start,
              "alpha": [sched.alpha(k) for k in range(done)],
              "numerical_failure": failure},
    )
