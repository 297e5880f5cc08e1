"""Approximate hypergradients through the implicit function theorem.

With y*(x) the inner minimizer, the gradient of the composed objective
x -> f(x, y*(x)) is

    grad f = grad_x f - H_xy H_yy^{-1} grad_y f,

evaluated at (x, y*(x)).  Replacing y*(x) by any surrogate ybar gives the
approximate hypergradient; its error is at most C * ||y*(x) - ybar|| for
the constant C computed in :func:`bilevel.problem.derived_constants`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .problem import AssumptionViolation, SmoothnessConstants, derived_constants

# Cholesky pivots below sqrt(PIVOT_RTOL * L_g) indicate a numerically
# indefinite inner Hessian, i.e. a violated strong-convexity assumption.
PIVOT_RTOL = 1e-12


@dataclass
class HypergradResult:
    """Approximate hypergradient and optional a priori error bound."""

    grad: np.ndarray
    m_matrix_applied: bool
    error_bound: float | None = None


def _spd_solve(h_yy: np.ndarray, rhs: np.ndarray, scale: float) -> np.ndarray:
    """Solve h_yy @ v = rhs with a Cholesky factorization, never inverting.

    ``scale`` sets the pivot tolerance; pass L_g when known, otherwise a
    norm of the matrix itself.
    """
    try:
        factor = cho_factor(h_yy, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise AssumptionViolation(
            "inner Hessian is not positive definite; strong convexity of g fails"
        ) from exc
    piv = np.diag(factor[0])
    if np.min(piv) ** 2 < PIVOT_RTOL * scale:
        raise AssumptionViolation(
            "inner Hessian factorization pivot below tolerance; "
            "strong convexity of g is numerically violated"
        )
    return cho_solve(factor, rhs, check_finite=False)


def _pivot_scale(oracle, h_yy: np.ndarray) -> float:
    c = getattr(oracle, "constants", None)
    if c is not None:
        return c.L_g
    return float(np.max(np.abs(np.diag(h_yy)))) or 1.0


def hypergradient(oracle, x, ybar, ystar=None) -> HypergradResult:
    """Approximate gradient of the composed objective at x using ybar.

    Queries the oracle once for the outer gradient pair and twice for
    second derivatives of g (counted as such).  The correction term is
    obtained by a symmetric positive definite linear solve.  When
    ``ystar`` is supplied and constants are declared, the result carries
    the a priori error bound C * ||ystar - ybar||.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ybar = np.atleast_1d(np.asarray(ybar, dtype=float))
    gx, gy = oracle.grad_f_pair(x, ybar)
    h_xy = oracle.hess_xy_g(x, ybar)
    h_yy = oracle.hess_yy_g(x, ybar)
    v = _spd_solve(h_yy, gy, _pivot_scale(oracle, h_yy))
    grad = gx - h_xy @ v
    bound = None
    c = getattr(oracle, "constants", None)
    if ystar is not None and c is not None:
        bound = hypergrad_error_bound(c, float(np.linalg.norm(np.asarray(ystar) - ybar)))
    return HypergradResult(grad=grad, m_matrix_applied=True, error_bound=bound)


def implicit_jacobian(oracle, x, ystar) -> np.ndarray:
    """Jacobian dy*/dx of the inner solution map, shape (dim_y, dim_x).

    Differentiating the inner optimality condition grad_y g(x, y*(x)) = 0
    gives dy*/dx = -H_yy^{-1} H_xy^T, computed here by one
    multi-right-hand-side solve.  ``ystar`` must solve the inner problem
    to tolerance.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ystar = np.atleast_1d(np.asarray(ystar, dtype=float))
    h_xy = oracle.hess_xy_g(x, ystar)
    h_yy = oracle.hess_yy_g(x, ystar)
    return -_spd_solve(h_yy, np.asarray(h_xy, dtype=float).T, _pivot_scale(oracle, h_yy))


def hypergrad_error_bound(c: SmoothnessConstants, dist: float) -> float:
    """Upper bound C * dist on the hypergradient error at inner distance dist."""
    if dist < 0:
        raise ValueError("dist must be nonnegative")
    return derived_constants(c).C * dist
