"""Numeric evaluation of the theoretical convergence bounds.

Each function evaluates the closed-form upper bound of one
solver/convexity-class pairing at an outer iteration budget N, using
declared testbed constants.  The bounds hold for the preset schedules
with cold-started inner loops; warm starts only shrink the inner error,
so traces are compared against the same curves.  Missing ingredients
(an unbounded feasible set where a diameter is needed, an unknown inner
start radius M) make a bound unavailable rather than silently wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import NoiseSpec, SmoothnessConstants, derived_constants

BOUND_IDS = (
    "ba/strongly_convex", "ba/convex", "ba/nonconvex",
    "aba/strongly_convex", "aba/convex",
    "bsa/strongly_convex", "bsa/convex", "bsa/nonconvex",
)


class BoundUnavailable(ValueError):
    """A constant required by the requested bound is missing or infinite."""


@dataclass(frozen=True)
class BoundInputs:
    """Everything the bound formulas may consume, precomputed by the caller."""

    constants: SmoothnessConstants
    gap0: float | None = None          # f(x_0; y*(x_0)) - f*
    dist0_sq: float | None = None      # ||x* - x_0||^2
    M: float | None = None             # max over X of ||y_0 - y*(x)||
    D_X: float | None = None
    noise_totals: dict | None = None   # aggregate sigmas (see NoiseSpec.totals)


def _require(val, name: str) -> float:
    if val is None or not math.isfinite(val):
        raise BoundUnavailable(f"bound needs finite {name}")
    return float(val)


def _m_term(coeff: float, M: float | None) -> float:
    # a vanishing coefficient kills the M term even when M is unknown
    if coeff == 0.0:
        return 0.0
    return coeff * _require(M, "M") ** 2


def ba_strongly_convex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    d = derived_constants(c)
    gap0 = _require(inp.gap0, "gap0")
    if N == 0:
        return gap0
    gamma = min(c.mu_f / (3.0 * d.L_f), 2.0 / (d.Q_g + 1.0))
    extra = _m_term((d.Q_g - 1.0) * d.C**2 / (6.0 * d.L_f), inp.M)
    return (1.0 - gamma) ** N * (gap0 + extra)


def ba_convex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    d = derived_constants(c)
    D = _require(inp.D_X, "D_X")
    lead = 18.0 * d.L_f * D**2 / N
    tail = _m_term((d.Q_g - 1.0) ** 2 * (d.Q_g + 1.0) ** 6 * d.C**2 / (75.0 * d.L_f), inp.M) / N
    return lead + tail


def ba_nonconvex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    d = derived_constants(c)
    gap0 = _require(inp.gap0, "gap0")
    tail = _m_term(5.0 * (d.Q_g - 1.0) * (d.Q_g + 1.0) ** 3 * d.C**2, inp.M)
    return (18.0 * d.L_f * gap0 + tail) / N


def aba_strongly_convex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    d = derived_constants(c)
    gap0 = _require(inp.gap0, "gap0")
    dist0 = _require(inp.dist0_sq, "dist0_sq")
    if N == 0:
        return gap0
    gamma = min(0.5 * math.sqrt(c.mu_f / (3.0 * d.L_f)), 2.0 / (d.Q_g + 1.0))
    extra = _m_term(7.0 * (d.Q_g - 1.0) * d.C**2 / (4.0 * c.mu_f), inp.M)
    return (1.0 - gamma) ** N * (gap0 + (c.mu_f + 12.0 * d.L_f) * dist0 / 4.0 + extra)


def aba_convex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    d = derived_constants(c)
    D = _require(inp.D_X, "D_X")
    tail = _m_term(16.0 * (d.Q_g - 1.0) ** 2 * (d.Q_g + 1.0) ** 6 * d.C**2 / d.L_f, inp.M)
    return (2.0 / (N * (N + 1.0))) * (15.0 * d.L_f * D**2 + tail)


@dataclass(frozen=True)
class StochasticBoundConstants:
    """Aggregate constants of the stochastic analysis."""

    C1: float
    C2: float
    C3_sq: float
    sigma_f_sq: float
    C_bar: float


def stochastic_constants(c: SmoothnessConstants, noise_totals: dict,
                         M: float | None) -> StochasticBoundConstants:
    """Derived constants of the stochastic bounds.

    C1 pairs the hypergradient error constant with the worst inner
    tracking level (initial radius vs gradient-noise floor; the
    gradient-noise sigma is used since the inner loop queries gradients
    only).  C2 is the truncation-bias scale, sigma_f_sq the hypergradient
    second-moment level, C_bar the composed gradient bound.
    """
    d = derived_constants(c)
    mu = c.mu_g
    s_x = noise_totals["sigma_x"]
    s_y = noise_totals["sigma_y"]
    s_gy = noise_totals["sigma_gy"]
    s_gxy = noise_totals["sigma_gxy"]
    if M is None or not math.isfinite(M):
        raise BoundUnavailable("stochastic bounds need finite M")
    C1 = d.C * max(M, s_gy / mu)
    C2 = c.C_gxy * c.C_fy / mu
    sigma_f_sq = 2.0 * s_x**2 + (4.0 / mu**2) * (
        c.C_gxy**2 * s_y**2 + 2.0 * c.C_fy**2 * (s_gxy**2 + 2.0 * c.C_gxy**2)
    )
    C_fx = c.C_fx if c.C_fx is not None else 0.0
    C_bar = C_fx + c.C_gxy * c.C_fy / mu
    if c.mu_f > 0:
        L_f = d.L_f
        C3_sq = (2.0 * (32.0 * L_f + c.mu_f) * (C1**2 + C2**2) + 16.0 * L_f * C_bar**2) / c.mu_f \
            + 4.0 * sigma_f_sq
    else:
        C3_sq = math.nan
    return StochasticBoundConstants(C1=C1, C2=C2, C3_sq=C3_sq,
                                    sigma_f_sq=sigma_f_sq, C_bar=C_bar)


def bsa_strongly_convex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    if c.C_fx is None:
        raise BoundUnavailable("bound needs a declared C_fx")
    d = derived_constants(c)
    sc = stochastic_constants(c, inp.noise_totals or {}, inp.M)
    dist0 = _require(inp.dist0_sq, "dist0_sq")
    mu = c.mu_f
    log_term = 16.0 * d.L_f * sc.C_bar**2 * math.log(N) / N if N > 1 else 0.0
    bracket = sc.C3_sq + (8.0 * d.L_f + 3.0 * mu) * sc.C1**2 \
        + (4.0 * d.L_f + mu) * sc.C2**2 + 4.0 * mu * sc.sigma_f_sq + log_term
    return mu * dist0 / (2.0 * N * (N + 1.0)) + 2.0 * bracket / (mu**2 * (N + 1.0))


def bsa_convex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    d = derived_constants(c)
    sc = stochastic_constants(c, inp.noise_totals or {}, inp.M)
    dist0 = _require(inp.dist0_sq, "dist0_sq")
    D = _require(inp.D_X, "D_X")
    return (2.0 * d.L_f * dist0 + 3.0 * D * (math.sqrt(2.0) * sc.C1 + sc.C2)
            + sc.sigma_f_sq / (2.0 * d.L_f)) / math.sqrt(N)


def bsa_nonconvex_bound(N: int, inp: BoundInputs) -> float:
    c = inp.constants
    d = derived_constants(c)
    sc = stochastic_constants(c, inp.noise_totals or {}, inp.M)
    gap0 = _require(inp.gap0, "gap0")
    return (8.0 / math.sqrt(N)) * (4.0 * d.L_f * gap0 + 36.0 * sc.C1**2
                                   + 6.0 * sc.C2**2 + sc.sigma_f_sq)


_FORMULAS = {
    "ba/strongly_convex": ba_strongly_convex_bound,
    "ba/convex": ba_convex_bound,
    "ba/nonconvex": ba_nonconvex_bound,
    "aba/strongly_convex": aba_strongly_convex_bound,
    "aba/convex": aba_convex_bound,
    "bsa/strongly_convex": bsa_strongly_convex_bound,
    "bsa/convex": bsa_convex_bound,
    "bsa/nonconvex": bsa_nonconvex_bound,
}

# For horizon-tuned stepsizes the bound is only a statement about the
# final budget, not about every prefix of the same run.
PREFIX_VALID = {
    "ba/strongly_convex": True,
    "ba/convex": True,
    "ba/nonconvex": True,
    "aba/strongly_convex": True,
    "aba/convex": True,
    "bsa/strongly_convex": True,
    "bsa/convex": False,
    "bsa/nonconvex": False,
}


def bound_curve(bound_id: str, N: int, inp: BoundInputs) -> np.ndarray:
    """Per-row bound values for a run of N outer iterations.

    Row k holds the bound at budget k + 1.  For bounds that are valid
    only at the full horizon, every row except the last is NaN.
    Raises :class:`BoundUnavailable` when an ingredient is missing.
    """
    if bound_id not in _FORMULAS:
        raise ValueError(f"unknown bound id {bound_id!r}")
    fn = _FORMULAS[bound_id]
    out = np.full(N, np.nan)
    if PREFIX_VALID[bound_id]:
        for k in range(N):
            out[k] = fn(k + 1, inp)
    else:
        out[-1] = fn(N, inp)
    return out
