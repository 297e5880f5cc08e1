"""Shared testbed instances and independent numerical oracles.

The finite-difference helpers here are the reference implementations
the library is checked against; they only consume closed-form testbed
values, never the code paths under test.
"""

import numpy as np
import pytest

from bilevel.problem import FeasibleSet
from bilevel.testbeds import QuadraticBilevel, RidgeHyperTune, Scalar1D, StackelbergQuad

FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


def fd_composed_grad(problem, x):
    """Central finite differences of x -> f(x, y*(x)) via the closed forms."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = FD_EPS * (1.0 + np.linalg.norm(x))
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (problem.composed_value(x + e) - problem.composed_value(x - e)) / (2.0 * h)
    return g


def fd_ystar_jacobian(problem, x):
    """Central finite differences of x -> y*(x), shape (dim_y, dim_x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = FD_EPS * (1.0 + np.linalg.norm(x))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((problem.ystar(x + e) - problem.ystar(x - e)) / (2.0 * h))
    return np.stack(cols, axis=1)


def quad_mild(**kwargs):
    """Well-conditioned strongly convex quadratic (deterministic rate runs)."""
    params = dict(n=2, m=2, inner_eigs=[1.0, 2.0], q_eigs=[1.0, 1.0],
                  p_eigs=[0.5, 0.5], coupling_scale=1.0, seed=11)
    params.update(kwargs)
    return QuadraticBilevel.from_spec(**params)


def quad_stoch():
    """The mild instance with smoothness headroom for noisy Hessian samples."""
    return quad_mild(L_g_margin=1.0)


def quad_bound():
    """Instance used for the strongly convex bound checks."""
    return QuadraticBilevel.from_spec(
        n=3, m=4, inner_eigs=[1.0, 1.3, 1.7, 2.0], q_eigs=[1.0, 0.8, 0.6, 0.4],
        p_eigs=[0.5, 0.7, 0.9], coupling_scale=1.0, seed=2)


def quad_spread():
    """Composed spectrum spread over five decades; the accelerated method's
    1/N^2 phase then covers the whole fitted window."""
    m = 10
    a = np.linspace(1.0, 2.0, m)
    targets = np.logspace(0, -5, m)
    rng = np.random.default_rng(5)
    return QuadraticBilevel(A=np.diag(a), B=np.eye(m), b=rng.standard_normal(m) * 0.5,
                            P=np.zeros((m, m)), p=np.zeros(m), Q=np.diag(targets * a**2),
                            y_d=rng.standard_normal(m) * 0.5)


def box_around(problem, radius: float) -> FeasibleSet:
    return FeasibleSet.box(problem.x_star - radius, problem.x_star + radius)


@pytest.fixture(scope="session")
def scalar():
    return Scalar1D()


@pytest.fixture(scope="session")
def ridge():
    return RidgeHyperTune(seed=0)


@pytest.fixture(scope="session")
def stackelberg():
    return StackelbergQuad.from_spec(2, 3, seed=1)
