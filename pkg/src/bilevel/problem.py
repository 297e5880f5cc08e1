"""Core abstractions for bilevel problems.

A bilevel problem minimizes an outer objective f(x, y*(x)) over a closed
convex set X, where y*(x) is the unique minimizer of an inner objective
g(x, .) that is strongly convex in y.  This module provides the pieces
every solver consumes: feasible sets with exact Euclidean projections,
declared smoothness constants and the quantities derived from them,
oracle-call accounting, and the exact / stochastic first- and
second-order oracle wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np


class AssumptionViolation(RuntimeError):
    """Raised when a numerical check contradicts a declared assumption.

    The typical trigger is a failed symmetric positive definite
    factorization of the inner Hessian, which means the inner problem is
    not strongly convex at the queried point.
    """


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibleSet:
    """Projection-capable description of the outer feasible set X.

    Supported kinds are ``all_space``, ``box`` and ``ball``; each admits a
    closed-form Euclidean projection so proximal steps are bit-reproducible.
    """

    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    @staticmethod
    def all_space() -> "FeasibleSet":
        return FeasibleSet(kind="all_space")

    @staticmethod
    def box(lower, upper) -> "FeasibleSet":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape:
            raise ValueError("box bounds must have matching shapes")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper componentwise")
        return FeasibleSet(kind="box", lower=lower, upper=upper)

    @staticmethod
    def ball(center, radius: float) -> "FeasibleSet":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        return FeasibleSet(kind="ball", center=center, radius=float(radius))

    def project(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if self.kind == "all_space":
            return p
        if self.kind == "box":
            return np.clip(p, self.lower, self.upper)
        if self.kind == "ball":
            d = p - self.center
            nrm = float(np.linalg.norm(d))
            if nrm <= self.radius:
                return p
            return self.center + (self.radius / nrm) * d
        raise ValueError(f"unknown feasible set kind {self.kind!r}")

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return bool(np.linalg.norm(self.project(p) - p) <= tol * (1.0 + np.linalg.norm(p)))

    def diameter(self) -> float:
        if self.kind == "all_space":
            return math.inf
        if self.kind == "box":
            return float(np.linalg.norm(self.upper - self.lower))
        return 2.0 * float(self.radius)


def project(feasible_set: FeasibleSet, p) -> np.ndarray:
    """Euclidean projection of ``p`` onto the set (idempotent, nonexpansive)."""
    return feasible_set.project(p)


# ---------------------------------------------------------------------------
# Smoothness constants
# ---------------------------------------------------------------------------


@dataclass
class SmoothnessConstants:
    """Declared Lipschitz / strong-convexity / boundedness constants.

    These constants are supplied by the user or testbed over a declared
    compact region rather than estimated from samples.  They are upper
    bounds (lower bound in the case of ``mu_g`` and ``mu_f``), so a
    testbed may declare looser values than the sharpest ones; every
    derived bound stays valid under loosening.

    ``mu_g``/``L_g`` bracket the inner Hessian spectrum.  ``L_fx``,
    ``L_fy``, ``C_fy``, ``Lbar_fy`` describe the outer gradient, and the
    remaining ``*_g*`` constants describe the mixed and inner Hessians of
    g.  ``mu_f`` is the declared strong convexity of the composed outer
    objective (0 when unknown), ``C_fx`` an optional bound on the outer
    partial gradient used only by the stochastic solver's strongly convex
    analysis.
    """

    mu_g: float
    L_g: float
    L_fx: float = 0.0
    L_fy: float = 0.0
    C_fy: float = 0.0
    Lbar_fy: float = 0.0
    L_gxy: float = 0.0
    L_gyy: float = 0.0
    Lbar_gxy: float = 0.0
    Lbar_gyy: float = 0.0
    C_gxy: float = 0.0
    mu_f: float = 0.0
    C_fx: float | None = None
    M_init: float | None = None
    D_X: float | None = None
    f_star: float | None = None

    def __post_init__(self):
        if self.mu_g <= 0:
            raise ValueError("mu_g must be positive")
        if self.L_g < self.mu_g:
            raise ValueError("L_g must be at least mu_g")
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not np.isfinite(v) and f.name not in ("D_X", "M_init"):
                raise ValueError(f"{f.name} must be finite")
            if f.name not in ("f_star",) and v is not None and v < 0:
                raise ValueError(f"{f.name} must be nonnegative")


@dataclass(frozen=True)
class DerivedConstants:
    """Constants derived from a :class:`SmoothnessConstants` declaration.

    ``C`` bounds the hypergradient approximation error per unit of inner
    inexactness, ``L_f`` is the smoothness constant of the composed outer
    objective, and ``Q_g`` the inner condition number.
    """

    C: float
    L_f: float
    Q_g: float


def derived_constants(c: SmoothnessConstants) -> DerivedConstants:
    """Compute the gradient-error constant C, composed smoothness L_f, and Q_g."""
    if c.mu_g <= 0:
        raise ValueError("mu_g must be positive")
    mu = c.mu_g
    C = c.L_fx + c.L_fy * c.C_gxy / mu + c.C_fy * (c.L_gxy / mu + c.L_gyy * c.C_gxy / mu**2)
    L_f = (
        (c.Lbar_fy + C) * c.C_gxy / mu
        + c.L_fx
        + c.C_fy * (c.Lbar_gxy * c.C_fy / mu + c.Lbar_gyy * c.C_gxy / mu**2)
    )
    return DerivedConstants(C=C, L_f=L_f, Q_g=c.L_g / mu)


# ---------------------------------------------------------------------------
# Oracle-call accounting
# ---------------------------------------------------------------------------


@dataclass
class OracleCounters:
    """Cumulative oracle call counts for one solver run.

    ``gc_f`` counts evaluations of the outer gradient pair (grad_x f,
    grad_y f), ``gc_g`` counts inner gradient evaluations, ``hc_g``
    counts second-derivative evaluations of g (mixed and inner Hessians
    combined).  Counters never decrease.
    """

    gc_f: int = 0
    gc_g: int = 0
    hc_g: int = 0

    def add(self, gc_f: int = 0, gc_g: int = 0, hc_g: int = 0) -> None:
        if gc_f < 0 or gc_g < 0 or hc_g < 0:
            raise ValueError("counter increments must be nonnegative")
        self.gc_f += gc_f
        self.gc_g += gc_g
        self.hc_g += hc_g

    def snapshot(self) -> tuple[int, int, int]:
        return (self.gc_f, self.gc_g, self.hc_g)


# ---------------------------------------------------------------------------
# Noise specification and RNG streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Per-component standard deviations of the stochastic oracle noise.

    Every sigma is the standard deviation of a single vector/matrix entry,
    so a query of an m-dimensional gradient has total noise variance
    sigma**2 * m.  ``totals`` converts to the aggregate standard
    deviations that enter theoretical bound formulas.
    """

    sigma_x: float = 0.0
    sigma_y: float = 0.0
    sigma_gy: float = 0.0
    sigma_gxy: float = 0.0
    sigma_gyy: float = 0.0

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "sigma_gy", "sigma_gxy", "sigma_gyy"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def totals(self, n: int, m: int) -> dict[str, float]:
        return {
            "sigma_x": self.sigma_x * math.sqrt(n),
            "sigma_y": self.sigma_y * math.sqrt(m),
            "sigma_gy": self.sigma_gy * math.sqrt(m),
            "sigma_gxy": self.sigma_gxy * math.sqrt(n * m),
            "sigma_gyy": self.sigma_gyy * math.sqrt(m * m),
        }


# One child seed per oracle kind so traces are replayable and streams can
# be swapped independently of each other.
STREAM_NAMES = ("xi", "zeta1", "zeta2", "zeta3", "hia_p", "r_draw")


def make_streams(seed: int, overrides: dict[str, int] | None = None) -> dict[str, np.random.Generator]:
    """Build the named RNG streams for one run.

    ``overrides`` maps a stream name to its own seed; all other streams
    derive from ``seed``.  Streams are independent by construction.
    """
    overrides = overrides or {}
    streams = {}
    for i, name in enumerate(STREAM_NAMES):
        if name in overrides:
            ss = np.random.SeedSequence(overrides[name])
        else:
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        streams[name] = np.random.default_rng(ss)
    return streams


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class ExactOracle:
    """Deterministic first/second order oracle around a problem instance.

    All counted queries go through this wrapper; analytic reference
    quantities (composed gradient, f_star) are read from the problem
    directly and never touch the counters.
    """

    mode = "exact"

    def __init__(self, problem):
        self.problem = problem
        self.counters = OracleCounters()

    @property
    def dim_x(self) -> int:
        return self.problem.dim_x

    @property
    def dim_y(self) -> int:
        return self.problem.dim_y

    @property
    def constants(self) -> SmoothnessConstants:
        return self.problem.constants

    def f(self, x, y) -> float:
        return self.problem.f(x, y)

    def grad_f_pair(self, x, y):
        """Return (grad_x f, grad_y f); counts as one outer gradient query."""
        self.counters.add(gc_f=1)
        return self.problem.grad_x_f(x, y), self.problem.grad_y_f(x, y)

    def grad_y_g(self, x, y):
        self.counters.add(gc_g=1)
        return self.problem.grad_y_g(x, y)

    def hess_xy_g(self, x, y):
        self.counters.add(hc_g=1)
        return self.problem.hess_xy_g(x, y)

    def hess_yy_g(self, x, y):
        self.counters.add(hc_g=1)
        return self.problem.hess_yy_g(x, y)

    # Fast path for the inner loop: the returned closure is uncounted,
    # callers charge gc_g once per gradient step they take.
    def inner_gradient_closure(self, x):
        return self.problem.inner_gradient_closure(x)

    def inner_diagonal(self, x):
        fn = getattr(self.problem, "inner_diagonal", None)
        return fn(x) if fn is not None else None

    def draw_inner_noise(self, t: int):
        return None


class StochasticOracle:
    """Stochastic oracle: unbiased noisy derivatives with declared variances.

    Each oracle kind draws from its own named, seeded stream (``xi`` for
    the outer gradient pair, ``zeta1``/``zeta2``/``zeta3`` for the inner
    gradient, mixed Hessian and inner Hessian).  With a sigma of zero the
    corresponding quantity is returned bit-identical to the exact oracle
    and no stream is consumed.

    Inner Hessian samples are perturbed symmetrically, then eigenvalue
    clamped to [0, L_g] so that ||I - sample/L_g|| <= 1 holds per sample;
    the clamp activation frequency is tracked because clamping costs
    unbiasedness whenever it fires.
    """

    mode = "stochastic"

    def __init__(self, problem, noise: NoiseSpec, seed: int,
                 stream_seeds: dict[str, int] | None = None):
        self.problem = problem
        self.noise = noise
        self.seed = int(seed)
        self.streams = make_streams(self.seed, stream_seeds)
        self.counters = OracleCounters()
        self.hess_yy_draws = 0
        self.hess_yy_clamped = 0

    @property
    def dim_x(self) -> int:
        return self.problem.dim_x

    @property
    def dim_y(self) -> int:
        return self.problem.dim_y

    @property
    def constants(self) -> SmoothnessConstants:
        return self.problem.constants

    @property
    def clamp_frequency(self) -> float:
        if self.hess_yy_draws == 0:
            return 0.0
        return self.hess_yy_clamped / self.hess_yy_draws

    def f(self, x, y) -> float:
        return self.problem.f(x, y)

    def grad_f_pair(self, x, y):
        gx = np.asarray(self.problem.grad_x_f(x, y), dtype=float)
        gy = np.asarray(self.problem.grad_y_f(x, y), dtype=float)
        rng = self.streams["xi"]
        if self.noise.sigma_x > 0:
            gx = gx + self.noise.sigma_x * rng.standard_normal(gx.shape)
        if self.noise.sigma_y > 0:
            gy = gy + self.noise.sigma_y * rng.standard_normal(gy.shape)
        self.counters.add(gc_f=1)
        return gx, gy

    def grad_y_g(self, x, y):
        g = np.asarray(self.problem.grad_y_g(x, y), dtype=float)
        if self.noise.sigma_gy > 0:
            g = g + self.noise.sigma_gy * self.streams["zeta1"].standard_normal(g.shape)
        self.counters.add(gc_g=1)
        return g

    def hess_xy_g(self, x, y):
        h = np.asarray(self.problem.hess_xy_g(x, y), dtype=float)
        if self.noise.sigma_gxy > 0:
            h = h + self.noise.sigma_gxy * self.streams["zeta2"].standard_normal(h.shape)
        self.counters.add(hc_g=1)
        return h

    def hess_yy_g(self, x, y):
        h = np.asarray(self.problem.hess_yy_g(x, y), dtype=float)
        self.counters.add(hc_g=1)
        if self.noise.sigma_gyy == 0:
            return h
        rng = self.streams["zeta3"]
        w = rng.standard_normal(h.shape)
        sample = h + self.noise.sigma_gyy * 0.5 * (w + w.T)
        self.hess_yy_draws += 1
        L_g = self.constants.L_g
        vals, vecs = np.linalg.eigh(sample)
        if vals[0] < 0.0 or vals[-1] > L_g:
            self.hess_yy_clamped += 1
            vals = np.clip(vals, 0.0, L_g)
            sample = (vecs * vals) @ vecs.T
        return sample

    def inner_gradient_closure(self, x):
        return self.problem.inner_gradient_closure(x)

    def inner_diagonal(self, x):
        fn = getattr(self.problem, "inner_diagonal", None)
        return fn(x) if fn is not None else None

    def draw_inner_noise(self, t: int):
        """Pre-draw t rows of inner-gradient noise from the zeta1 stream."""
        if self.noise.sigma_gy == 0 or t == 0:
            return None
        return self.noise.sigma_gy * self.streams["zeta1"].standard_normal((t, self.dim_y))
