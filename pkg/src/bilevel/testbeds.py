"""Analytic bilevel testbeds with closed-form inner solutions.

Every instance exposes the full oracle surface (values, partial
gradients, second derivatives of g) plus closed forms for y*(x), the
composed objective F(x) = f(x, y*(x)), its gradient, the unconstrained
minimizer and optimal value, and a set of declared smoothness constants
valid over a documented region.  Constants are declared as bounds, so a
few are intentionally loose: the composed-smoothness formula consumes
the x-direction Lipschitz constant of grad_x f through ``Lbar_fy`` (or
``L_fx`` when the problems decouple), and testbeds inflate those fields
just enough that the derived L_f dominates the true composed Hessian
norm.
"""

from __future__ import annotations

import math
from itertools import product as _iterproduct

import numpy as np
from scipy.optimize import minimize_scalar

from .problem import (
    ExactOracle,
    FeasibleSet,
    NoiseSpec,
    SmoothnessConstants,
    StochasticOracle,
)


def _spectral_norm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def _max_norm_over_set(feasible: FeasibleSet, fn_affine) -> float:
    """Max of ||v0 + J x|| over x in a box/ball set (exact for box, bound for ball)."""
    v0, J = fn_affine
    if feasible.kind == "box":
        n = feasible.lower.shape[0]
        if n <= 16:
            best = 0.0
            for corner in _iterproduct(*zip(feasible.lower, feasible.upper)):
                best = max(best, float(np.linalg.norm(v0 + J @ np.asarray(corner))))
            return best
        mid = 0.5 * (feasible.lower + feasible.upper)
        half = 0.5 * (feasible.upper - feasible.lower)
        return float(np.linalg.norm(v0 + J @ mid) + np.linalg.norm(np.abs(J) @ half))
    if feasible.kind == "ball":
        return float(np.linalg.norm(v0 + J @ feasible.center) + feasible.radius * _spectral_norm(J))
    return math.inf


class _AffineInnerProblem:
    """Shared machinery for testbeds whose inner solution is affine in x.

    Subclasses set ``_A`` (inner Hessian), ``_Bmat``, ``_bvec`` so that
    grad_y g = A y - B x - b, hence y*(x) = A^{-1}(B x + b).
    """

    dim_x: int
    dim_y: int

    def _ystar_coeffs(self):
        # J = A^{-1} B, c0 = A^{-1} b
        return self._J, self._c0

    def ystar(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._J @ x + self._c0

    def grad_y_g(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self._A @ y - self._Bmat @ x - self._bvec

    def hess_yy_g(self, x, y):
        return self._A.copy()

    def hess_xy_g(self, x, y):
        return -self._Bmat.T.copy()

    def inner_gradient_closure(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        A = self._A
        c = self._Bmat @ x + self._bvec
        return lambda y: A @ y - c

    def inner_diagonal(self, x):
        """(eigenvalues, offset) when grad_y g = lam * y - c componentwise."""
        A = self._A
        if not np.array_equal(A, np.diag(np.diag(A))):
            return None
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.diag(A).copy(), self._Bmat @ x + self._bvec

    def composed_value(self, x) -> float:
        return self.f(x, self.ystar(x))

    def exact_oracle(self) -> ExactOracle:
        return ExactOracle(self)

    def max_inner_start_distance(self, feasible: FeasibleSet, y0) -> float:
        """M = max over x in the set of ||y0 - y*(x)||."""
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        return _max_norm_over_set(feasible, (y0 - self._c0, -self._J))

    def max_x_norm(self, feasible: FeasibleSet) -> float:
        n = self.dim_x
        return _max_norm_over_set(feasible, (np.zeros(n), np.eye(n)))


class QuadraticBilevel(_AffineInnerProblem):
    """Quadratic bilevel instance.

        g(x, y) = (1/2) y'Ay - (Bx + b)'y
        f(x, y) = (1/2) x'Px + p'x + (1/2)(y - y_d)'Q(y - y_d)

    so grad_y g = Ay - Bx - b, y*(x) = A^{-1}(Bx + b), the mixed second
    derivative of g is -B', and the composed objective is an explicit
    quadratic in x with Hessian P + B'A^{-1}QA^{-1}B.  A self-check that
    grad_y g vanishes at y*(x) pins the sign convention.
    """

    def __init__(self, A, B, b, P, p, Q, y_d,
                 region: FeasibleSet | None = None,
                 y_radius: float | None = None,
                 L_g_margin: float = 0.0):
        self._A = np.atleast_2d(np.asarray(A, dtype=float))
        self._Bmat = np.atleast_2d(np.asarray(B, dtype=float))
        self._bvec = np.atleast_1d(np.asarray(b, dtype=float))
        self.P = np.atleast_2d(np.asarray(P, dtype=float))
        self.p = np.atleast_1d(np.asarray(p, dtype=float))
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.y_d = np.atleast_1d(np.asarray(y_d, dtype=float))
        self.dim_y, self.dim_x = self._Bmat.shape
        if self._A.shape != (self.dim_y, self.dim_y):
            raise ValueError("A must be (m, m) matching the rows of B")
        if not np.allclose(self._A, self._A.T):
            raise ValueError("A must be symmetric")
        eigs = np.linalg.eigvalsh(self._A)
        if eigs[0] <= 0:
            raise ValueError("A must be positive definite")
        if L_g_margin < 0:
            raise ValueError("L_g_margin must be nonnegative")
        # declared smoothness headroom above the true spectral max keeps
        # noisy Hessian samples inside [0, L_g] (the clamp stays inactive)
        self._mu_g, self._L_g = float(eigs[0]), float(eigs[-1]) + float(L_g_margin)

        self._J = np.linalg.solve(self._A, self._Bmat)
        self._c0 = np.linalg.solve(self._A, self._bvec)
        JtQ = self._J.T @ self.Q
        self.H_F = self.P + JtQ @ self._J
        self.H_F = 0.5 * (self.H_F + self.H_F.T)
        self._lin_F = self.p + JtQ @ (self._c0 - self.y_d)
        hf_eigs = np.linalg.eigvalsh(self.H_F)
        self.mu_f = float(max(hf_eigs[0], 0.0))
        self.L_f_true = float(max(hf_eigs[-1], 0.0))
        if hf_eigs[-1] > 1e-12 * max(1.0, abs(hf_eigs[0])):
            self.x_star = np.linalg.lstsq(self.H_F, -self._lin_F, rcond=None)[0]
        else:
            self.x_star = np.zeros(self.dim_x)

        if region is None:
            r = 2.0 * (float(np.linalg.norm(self.x_star)) + 1.0)
            region = FeasibleSet.ball(np.zeros(self.dim_x), r)
        self.region_x = region
        if y_radius is None:
            reach = self.max_inner_start_distance(region, np.zeros(self.dim_y))
            if not math.isfinite(reach):
                reach = 10.0
            y_radius = 2.0 * reach + float(np.linalg.norm(self.y_d)) + 1.0
        self.y_radius = float(y_radius)
        self.constants = self._declare_constants()

    def _declare_constants(self) -> SmoothnessConstants:
        norm_B = _spectral_norm(self._Bmat)
        norm_P = _spectral_norm(self.P)
        norm_Q = _spectral_norm(self.Q)
        if norm_B > 0:
            # route the x-smoothness of grad_x f through Lbar_fy so the
            # derived L_f covers the true composed Hessian norm
            L_fx = 0.0
            Lbar_fy = norm_P * self._mu_g / norm_B
        else:
            L_fx = norm_P
            Lbar_fy = 0.0
        C_fy = norm_Q * (self.y_radius + float(np.linalg.norm(self.y_d)))
        xr = self.max_x_norm(self.region_x)
        C_fx = norm_P * xr + float(np.linalg.norm(self.p)) if math.isfinite(xr) else None
        return SmoothnessConstants(
            mu_g=self._mu_g, L_g=self._L_g,
            L_fx=L_fx, L_fy=norm_Q, C_fy=C_fy, Lbar_fy=Lbar_fy,
            C_gxy=norm_B, mu_f=self.mu_f, C_fx=C_fx,
            f_star=self.f_star_unconstrained(),
        )

    @classmethod
    def from_spec(cls, n: int, m: int, inner_eigs, q_eigs=None, p_eigs=None,
                  coupling_scale: float = 1.0, seed: int = 0, rotate: bool = False,
                  region: FeasibleSet | None = None, y_radius: float | None = None,
                  L_g_margin: float = 0.0):
        """Build an instance from eigenvalue lists, so mu_g and L_g are exact.

        ``rotate`` conjugates the diagonal spectra by seeded orthogonal
        matrices; the offsets b, y_d, p are drawn from the same seed.
        """
        rng = np.random.default_rng(seed)
        inner_eigs = np.sort(np.asarray(inner_eigs, dtype=float))
        if inner_eigs.shape != (m,):
            raise ValueError("inner_eigs must list m eigenvalues")
        q_eigs = np.ones(m) if q_eigs is None else np.asarray(q_eigs, dtype=float)
        p_eigs = np.zeros(n) if p_eigs is None else np.asarray(p_eigs, dtype=float)

        def _sym(diag_vals, dim):
            D = np.diag(diag_vals)
            if not rotate:
                return D
            R, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            return R @ D @ R.T

        A = _sym(inner_eigs, m)
        Q = _sym(q_eigs, m)
        P = _sym(p_eigs, n)
        B = rng.standard_normal((m, n))
        nb = _spectral_norm(B)
        if nb > 0:
            B = B * (coupling_scale / nb)
        b = rng.standard_normal(m)
        y_d = rng.standard_normal(m)
        p = rng.standard_normal(n) * 0.5
        return cls(A, B, b, P, p, Q, y_d, region=region, y_radius=y_radius,
                   L_g_margin=L_g_margin)

    # outer objective ------------------------------------------------------
    def f(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        dy = y - self.y_d
        return float(0.5 * x @ self.P @ x + self.p @ x + 0.5 * dy @ self.Q @ dy)

    def grad_x_f(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.P @ x + self.p

    def grad_y_f(self, x, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self.Q @ (y - self.y_d)

    # composed closed forms ------------------------------------------------
    def composed_grad(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.H_F @ x + self._lin_F

    def f_star_unconstrained(self) -> float:
        return self.composed_value(self.x_star)


def scalar1d_instance() -> QuadraticBilevel:
    """Internal quadratic view of the fixed scalar instance (unused by Scalar1D)."""
    return QuadraticBilevel(A=[[2.0]], B=[[2.0]], b=[0.0], P=[[2.0]], p=[0.0],
                            Q=[[2.0]], y_d=[0.0])


class Scalar1D:
    """Fixed one-dimensional instance: g = (y - x)^2, f = x^2 + y^2.

    y*(x) = x, so the composed objective is 2 x^2 with minimizer 0 and
    optimal value 0.  The inner condition number is 1 and the
    hypergradient error constant is exactly 2, attained with equality,
    which makes this the canonical desk oracle for every bound.
    """

    dim_x = 1
    dim_y = 1

    def __init__(self, x_radius: float = 2.0, y_radius: float = 2.0):
        self.region_x = FeasibleSet.ball(np.zeros(1), x_radius)
        self.y_radius = float(y_radius)
        self.x_star = np.zeros(1)
        self.mu_f = 4.0
        self.H_F = np.array([[4.0]])
        self.constants = SmoothnessConstants(
            mu_g=2.0, L_g=2.0,
            L_fx=0.0, L_fy=2.0, C_fy=2.0 * y_radius, Lbar_fy=2.0,
            C_gxy=2.0, mu_f=4.0, C_fx=2.0 * x_radius, f_star=0.0,
        )

    def f(self, x, y) -> float:
        x = float(np.asarray(x).reshape(()) if np.ndim(x) == 0 else np.asarray(x)[0])
        y = float(np.asarray(y).reshape(()) if np.ndim(y) == 0 else np.asarray(y)[0])
        return x * x + y * y

    def grad_x_f(self, x, y):
        return 2.0 * np.atleast_1d(np.asarray(x, dtype=float))

    def grad_y_f(self, x, y):
        return 2.0 * np.atleast_1d(np.asarray(y, dtype=float))

    def grad_y_g(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return 2.0 * (y - x)

    def hess_yy_g(self, x, y):
        return np.array([[2.0]])

    def hess_xy_g(self, x, y):
        return np.array([[-2.0]])

    def inner_gradient_closure(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return lambda y: 2.0 * (y - x)

    def inner_diagonal(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([2.0]), 2.0 * x

    def ystar(self, x):
        return np.atleast_1d(np.asarray(x, dtype=float)).copy()

    def composed_value(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(2.0 * x @ x)

    def composed_grad(self, x):
        return 4.0 * np.atleast_1d(np.asarray(x, dtype=float))

    def f_star_unconstrained(self) -> float:
        return 0.0

    def exact_oracle(self) -> ExactOracle:
        return ExactOracle(self)

    def max_inner_start_distance(self, feasible: FeasibleSet, y0) -> float:
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        return _max_norm_over_set(feasible, (y0, -np.eye(1)))

    def max_x_norm(self, feasible: FeasibleSet) -> float:
        return _max_norm_over_set(feasible, (np.zeros(1), np.eye(1)))


class StackelbergQuad(_AffineInnerProblem):
    """Two-level quadratic market game with leader/follower production levels.

    Followers have decoupled strongly convex quadratic negative profits,
        g(x, y) = (1/2) y'Dy - (Bx + b)'y,   D diagonal positive,
    so their aggregate best response is linear, y*(x) = D^{-1}(Bx + b).
    Leaders pay a quadratic production cost plus a bilinear price-impact
    term coupling them to follower output:
        f(x, y) = (1/2) x'P0x + p0'x + x'Ry.
    The equilibrium (composed) problem is quadratic with Hessian
    P0 + RJ + J'R' where J = D^{-1}B; it is required positive definite.
    """

    def __init__(self, D, B, b, P0, p0, R,
                 region: FeasibleSet | None = None,
                 y_radius: float | None = None):
        D = np.atleast_2d(np.asarray(D, dtype=float))
        self._A = D
        self._Bmat = np.atleast_2d(np.asarray(B, dtype=float))
        self._bvec = np.atleast_1d(np.asarray(b, dtype=float))
        self.P0 = np.atleast_2d(np.asarray(P0, dtype=float))
        self.p0 = np.atleast_1d(np.asarray(p0, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.dim_y, self.dim_x = self._Bmat.shape
        eigs = np.linalg.eigvalsh(self._A)
        if eigs[0] <= 0:
            raise ValueError("follower Hessian must be positive definite")
        self._mu_g, self._L_g = float(eigs[0]), float(eigs[-1])
        self._J = np.linalg.solve(self._A, self._Bmat)
        self._c0 = np.linalg.solve(self._A, self._bvec)
        RJ = self.R @ self._J
        self.H_F = self.P0 + RJ + RJ.T
        self.H_F = 0.5 * (self.H_F + self.H_F.T)
        hf = np.linalg.eigvalsh(self.H_F)
        if hf[0] <= 0:
            raise ValueError("equilibrium problem is not strongly convex; shrink R")
        self.mu_f = float(hf[0])
        self.L_f_true = float(hf[-1])
        self._lin_F = self.p0 + self.R @ self._c0
        self.x_star = np.linalg.solve(self.H_F, -self._lin_F)
        if region is None:
            r = 2.0 * (float(np.linalg.norm(self.x_star)) + 1.0)
            region = FeasibleSet.ball(np.zeros(self.dim_x), r)
        self.region_x = region
        if y_radius is None:
            reach = self.max_inner_start_distance(region, np.zeros(self.dim_y))
            y_radius = 2.0 * (reach if math.isfinite(reach) else 10.0) + 1.0
        self.y_radius = float(y_radius)
        self.constants = self._declare_constants()

    @classmethod
    def from_spec(cls, n_leaders: int, n_followers: int, seed: int = 0,
                  price_impact: float = 0.3):
        rng = np.random.default_rng(seed)
        D = np.diag(rng.uniform(1.0, 3.0, size=n_followers))
        B = rng.uniform(0.2, 1.0, size=(n_followers, n_leaders))
        b = rng.uniform(0.5, 1.5, size=n_followers)
        P0 = np.diag(rng.uniform(1.0, 2.0, size=n_leaders))
        p0 = -rng.uniform(0.5, 1.5, size=n_leaders)
        R = price_impact * rng.uniform(0.1, 1.0, size=(n_leaders, n_followers))
        return cls(D, B, b, P0, p0, R)

    def _declare_constants(self) -> SmoothnessConstants:
        norm_B = _spectral_norm(self._Bmat)
        norm_R = _spectral_norm(self.R)
        norm_P0 = _spectral_norm(self.P0)
        xr = self.max_x_norm(self.region_x)
        C_fy = norm_R * xr if math.isfinite(xr) else norm_R * 10.0
        Lbar_fy = norm_R + (norm_P0 * self._mu_g / norm_B if norm_B > 0 else 0.0)
        L_fx = norm_R if norm_B > 0 else norm_R + norm_P0
        C_fx = norm_P0 * xr + float(np.linalg.norm(self.p0)) + norm_R * self.y_radius \
            if math.isfinite(xr) else None
        return SmoothnessConstants(
            mu_g=self._mu_g, L_g=self._L_g,
            L_fx=L_fx, L_fy=0.0, C_fy=C_fy, Lbar_fy=Lbar_fy,
            C_gxy=norm_B, mu_f=self.mu_f, C_fx=C_fx,
            f_star=self.f_star_unconstrained(),
        )

    def f(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(0.5 * x @ self.P0 @ x + self.p0 @ x + x @ self.R @ y)

    def grad_x_f(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return self.P0 @ x + self.p0 + self.R @ y

    def grad_y_f(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.R.T @ x

    def composed_grad(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.H_F @ x + self._lin_F

    def f_star_unconstrained(self) -> float:
        return self.composed_value(self.x_star)


class RidgeHyperTune:
    """Ridge-regression penalty weight tuned against a validation split.

    Inner problem over the coefficients theta, outer variable the scalar
    weight lam restricted to [lam_min, lam_max] with lam_min > 0:

        g(lam, theta) = (lam/T) ||A_tr theta - b_tr||^2 + ||theta||^2
        f(lam, theta) = (1/V) ||A_va theta - b_va||^2

    The regularizer keeps the inner strong convexity at 2 independently
    of lam, and theta(lam) has the normal-equation closed form.
    """

    dim_x = 1

    def __init__(self, T: int = 60, V: int = 40, d: int = 8, seed: int = 0,
                 lam_min: float = 0.1, lam_max: float = 10.0,
                 label_noise: float = 0.5):
        if lam_min <= 0:
            raise ValueError("lam_min must be positive")
        rng = np.random.default_rng(seed)
        self.T, self.V, self.d = T, V, d
        self.dim_y = d
        theta_true = rng.standard_normal(d)
        self.A_tr = rng.standard_normal((T, d))
        self.b_tr = self.A_tr @ theta_true + label_noise * rng.standard_normal(T)
        self.A_va = rng.standard_normal((V, d))
        self.b_va = self.A_va @ theta_true + label_noise * rng.standard_normal(V)
        self.lam_min, self.lam_max = float(lam_min), float(lam_max)
        self.region_x = FeasibleSet.box([lam_min], [lam_max])

        self._G = self.A_tr.T @ self.A_tr
        self._Atb = self.A_tr.T @ self.b_tr
        self._Gv = self.A_va.T @ self.A_va
        self._Avb = self.A_va.T @ self.b_va
        norm_G = _spectral_norm(self._G)
        norm_Gv = _spectral_norm(self._Gv)

        grid = np.linspace(lam_min, lam_max, 256)
        theta_norms = [float(np.linalg.norm(self.ystar([lam]))) for lam in grid]
        self.y_radius = 2.0 * max(theta_norms) + 1.0

        res = minimize_scalar(lambda lam: self.composed_value([lam]),
                              bounds=(lam_min, lam_max), method="bounded",
                              options={"xatol": 1e-12})
        self.x_star = np.array([float(res.x)])
        self._f_star = float(res.fun)

        C_gxy = (2.0 / T) * (norm_G * self.y_radius + float(np.linalg.norm(self._Atb)))
        C_fy = (2.0 / V) * (norm_Gv * self.y_radius + float(np.linalg.norm(self._Avb)))
        self.constants = SmoothnessConstants(
            mu_g=2.0,
            L_g=2.0 + (2.0 * lam_max / T) * norm_G,
            L_fx=0.0,
            L_fy=(2.0 / V) * norm_Gv,
            C_fy=C_fy,
            Lbar_fy=0.0,
            L_gxy=(2.0 / T) * norm_G,
            L_gyy=0.0,
            Lbar_gxy=0.0,
            Lbar_gyy=(2.0 / T) * norm_G,
            C_gxy=C_gxy,
            mu_f=0.0,
            C_fx=0.0,
            f_star=self._f_star,
        )
        self.mu_f = 0.0

    # oracle surface -------------------------------------------------------
    def f(self, x, y) -> float:
        theta = np.atleast_1d(np.asarray(y, dtype=float))
        r = self.A_va @ theta - self.b_va
        return float(r @ r) / self.V

    def grad_x_f(self, x, y):
        return np.zeros(1)

    def grad_y_f(self, x, y):
        theta = np.atleast_1d(np.asarray(y, dtype=float))
        return (2.0 / self.V) * (self.A_va.T @ (self.A_va @ theta - self.b_va))

    def grad_y_g(self, x, y):
        lam = float(np.atleast_1d(x)[0])
        theta = np.atleast_1d(np.asarray(y, dtype=float))
        return (2.0 * lam / self.T) * (self.A_tr.T @ (self.A_tr @ theta - self.b_tr)) + 2.0 * theta

    def hess_yy_g(self, x, y):
        lam = float(np.atleast_1d(x)[0])
        return (2.0 * lam / self.T) * self._G + 2.0 * np.eye(self.d)

    def hess_xy_g(self, x, y):
        theta = np.atleast_1d(np.asarray(y, dtype=float))
        row = (2.0 / self.T) * (self.A_tr.T @ (self.A_tr @ theta - self.b_tr))
        return row.reshape(1, self.d)

    def inner_gradient_closure(self, x):
        lam = float(np.atleast_1d(x)[0])
        w = 2.0 * lam / self.T
        A_tr, b_tr = self.A_tr, self.b_tr
        return lambda theta: w * (A_tr.T @ (A_tr @ theta - b_tr)) + 2.0 * theta

    def inner_diagonal(self, x):
        return None  # the regularized Gram matrix is dense

    # closed forms ---------------------------------------------------------
    def ystar(self, x) -> np.ndarray:
        lam = float(np.atleast_1d(x)[0])
        H = (lam / self.T) * self._G + np.eye(self.d)
        return np.linalg.solve(H, (lam / self.T) * self._Atb)

    def composed_value(self, x) -> float:
        return self.f(x, self.ystar(x))

    def composed_grad(self, x) -> np.ndarray:
        # F'(lam) = theta'(lam)' grad_theta f, with theta'(lam) obtained by
        # differentiating the stationarity condition of g.
        lam = float(np.atleast_1d(x)[0])
        theta = self.ystar([lam])
        H_g = self.hess_yy_g([lam], theta)
        rhs = (2.0 / self.T) * (self.A_tr.T @ (self.b_tr - self.A_tr @ theta))
        dtheta = np.linalg.solve(H_g, rhs)
        return np.array([float(dtheta @ self.grad_y_f([lam], theta))])

    def f_star_unconstrained(self) -> float:
        # minimum over the declared lam interval (the problem is only
        # posed on it)
        return self._f_star

    def exact_oracle(self) -> ExactOracle:
        return ExactOracle(self)

    def max_inner_start_distance(self, feasible: FeasibleSet, y0) -> float:
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        if feasible.kind == "box":
            lo, hi = float(feasible.lower[0]), float(feasible.upper[0])
        else:
            lo, hi = self.lam_min, self.lam_max
        grid = np.linspace(lo, hi, 2048)
        worst = max(float(np.linalg.norm(y0 - self.ystar([lam]))) for lam in grid)
        return 1.05 * worst  # numerical max over a dense grid, mildly inflated

    def max_x_norm(self, feasible: FeasibleSet) -> float:
        return max(abs(self.lam_min), abs(self.lam_max))


# ---------------------------------------------------------------------------
# Module-level conveniences
# ---------------------------------------------------------------------------


def analytic_ystar(problem, x) -> np.ndarray:
    """Exact inner minimizer of the testbed at x."""
    return problem.ystar(x)


def analytic_grad_f(problem, x) -> np.ndarray:
    """Exact gradient of the composed objective x -> f(x, y*(x))."""
    return problem.composed_grad(x)


def analytic_f_star(problem) -> float:
    """Optimal composed value of the testbed (unconstrained / declared region)."""
    return problem.f_star_unconstrained()


def make_stochastic(problem, noise, seed: int,
                    stream_seeds: dict[str, int] | None = None) -> StochasticOracle:
    """Wrap a testbed in a noisy oracle with independent named streams."""
    if isinstance(noise, dict):
        noise = NoiseSpec(**noise)
    return StochasticOracle(problem, noise, seed, stream_seeds=stream_seeds)
