"""Per-iteration run records shared by all solvers.

Row semantics: row k describes the state after completing outer
iteration k (so row k corresponds to an iteration budget of N = k + 1).
``f_gap`` is evaluated at the class-canonical reported point for that
budget (last iterate for strongly convex runs, running average for
convex runs, weighted running average for the stochastic strongly
convex run, accelerated iterate for the accelerated solver).
``grad_norm_sq`` is the squared composed-gradient norm at the point
where the step was computed (the pre-step iterate), so for nonconvex
runs the running mean of this column over rows 0..k equals the uniform
expectation over a random iterate index that the analysis bounds.
Counters are cumulative through iteration k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunTrace:
    solver: str
    convexity_class: str
    N: int
    xs: np.ndarray
    f_gap: np.ndarray
    f_gap_last: np.ndarray
    grad_norm_sq: np.ndarray
    gc_f: np.ndarray
    gc_g: np.ndarray
    hc_g: np.ndarray
    x_final: np.ndarray
    f_star_value: float
    f_star_mode: str
    x_avg: np.ndarray | None = None
    x_weighted: np.ndarray | None = None
    x_R: np.ndarray | None = None
    R: int | None = None
    bound_value: np.ndarray | None = None
    bound_id: str | None = None
    wall_ms_total: float = 0.0
    meta: dict = field(default_factory=dict)

    def mean_grad_norm_sq(self, upto: int | None = None) -> float:
        """Running mean of the pre-step gradient norms through row ``upto``."""
        end = self.N if upto is None else upto + 1
        return float(np.mean(self.grad_norm_sq[:end]))


def build_trace(solver: str, convexity_class: str, problem,
                xs: list[np.ndarray],
                canonical_points: list[np.ndarray],
                grad_points: list[np.ndarray],
                counter_snaps: list[tuple[int, int, int]],
                f_star=None,
                x_avg=None, x_weighted=None, x_R=None, R=None,
                meta: dict | None = None) -> RunTrace:
    """Assemble a RunTrace, evaluating gaps and gradients analytically.

    Metrics use the testbed's closed forms and never touch oracle
    counters.  ``f_star`` may be a float (trusted optimal value), None
    (taken from the problem), or the string ``"surrogate"`` to subtract
    the best observed composed value instead.
    """
    N = len(canonical_points)
    f_points = np.array([problem.composed_value(p) for p in canonical_points])
    f_last = np.array([problem.composed_value(x) for x in xs[1:]])
    mode = "analytic"
    if f_star == "surrogate":
        fsv = float(min(np.min(f_points), np.min(f_last)))
        mode = "surrogate"
    elif f_star is None:
        fsv = float(problem.f_star_unconstrained())
    else:
        fsv = float(f_star)
    grads = np.array([float(np.linalg.norm(problem.composed_grad(p)) ** 2) for p in grad_points])
    snaps = np.asarray(counter_snaps, dtype=np.int64)
    return RunTrace(
        solver=solver,
        convexity_class=convexity_class,
        N=N,
        xs=np.asarray(xs, dtype=float),
        f_gap=f_points - fsv,
        f_gap_last=f_last - fsv,
        grad_norm_sq=grads,
        gc_f=snaps[:, 0],
        gc_g=snaps[:, 1],
        hc_g=snaps[:, 2],
        x_final=np.asarray(xs[-1], dtype=float),
        f_star_value=fsv,
        f_star_mode=mode,
        x_avg=None if x_avg is None else np.asarray(x_avg, dtype=float),
        x_weighted=None if x_weighted is None else np.asarray(x_weighted, dtype=float),
        x_R=None if x_R is None else np.asarray(x_R, dtype=float),
        R=R,
        meta=meta or {},
    )
