"""Built-in invariant suite, runnable without a test framework.

Covers one quick check per subsystem: projections, derived constants,
hypergradient consistency against finite differences, inner-loop
contraction, Neumann-estimator bias by enumeration, schedule
recursions, counter identities and trace determinism.  Each check
prints a PASS/FAIL line; the suite returns the number of failures.
"""

from __future__ import annotations

import math

import numpy as np

from .aba import aba_run, aba_schedule, gamma_sequence
from .ba import ba_run, ba_schedule
from .bsa import bsa_run, bsa_schedule
from .hia import hia_bias_bound, hia_expected_matrix
from .hypergrad import hypergradient
from .inner import gd_inner
from .problem import FeasibleSet, NoiseSpec, derived_constants
from .testbeds import QuadraticBilevel, RidgeHyperTune, Scalar1D, StackelbergQuad, make_stochastic


def _fd_composed_grad(problem, x, h_scale=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = (np.finfo(float).eps ** (1.0 / 3.0)) * (1.0 + np.linalg.norm(x))
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (problem.composed_value(x + e) - problem.composed_value(x - e)) / (2.0 * h)
    return g


def _checks():
    rng = np.random.default_rng(20240817)

    def projections():
        ball = FeasibleSet.ball(np.zeros(3), 1.0)
        box = FeasibleSet.box([-1.0, -1.0], [1.0, 1.0])
        ok = True
        for _ in range(50):
            a, b = rng.normal(size=3) * 3, rng.normal(size=3) * 3
            pa, pb = ball.project(a), ball.project(b)
            ok &= np.allclose(ball.project(pa), pa)
            ok &= np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
            c = rng.normal(size=2) * 3
            ok &= np.allclose(box.project(box.project(c)), box.project(c))
        return ok

    def constants():
        d = derived_constants(Scalar1D().constants)
        return d.C == 2.0 and d.L_f == 4.0 and d.Q_g == 1.0

    def hypergrad_fd():
        ok = True
        for problem in (Scalar1D(), QuadraticBilevel.from_spec(2, 3, [1.0, 1.5, 3.0], seed=3),
                        StackelbergQuad.from_spec(2, 3, seed=5), RidgeHyperTune(seed=2)):
            x = problem.region_x.project(rng.normal(size=problem.dim_x))
            g = hypergradient(problem.exact_oracle(), x, problem.ystar(x)).grad
            fd = _fd_composed_grad(problem, x)
            ok &= np.linalg.norm(g - fd) <= 1e-6 * (1.0 + np.linalg.norm(fd))
        return ok

    def inner_contraction():
        qb = QuadraticBilevel.from_spec(2, 3, [1.0, 2.0, 10.0], seed=1)
        rho = (10.0 - 1.0) / (10.0 + 1.0)
        x = np.zeros(2)
        ystar = qb.ystar(x)
        y = np.array([3.0, -2.0, 1.0])
        oracle = qb.exact_oracle()
        ok = True
        for _ in range(30):
            err0 = np.linalg.norm(y - ystar)
            y = gd_inner(oracle, x, y, 1).y_final
            ok &= np.linalg.norm(y - ystar) <= rho * err0 + 1e-12
        return ok

    def neumann_bias():
        H = np.diag([1.0, 1.4, 2.0])
        ok = True
        for b in range(1, 8):
            E = hia_expected_matrix(H, 2.0, b)
            bias = np.linalg.norm(np.linalg.inv(H) - E, 2)
            bound = (1.0 / 1.0) * ((2.0 - 1.0) / 2.0) ** b
            ok &= bias <= bound * (1 + 1e-12) + 1e-15
        return ok

    def schedules():
        gam = gamma_sequence(lambda k: 2.0 / (k + 2.0), 3)
        ok = abs(gam[2] - 1.0 / 6.0) < 1e-15
        qb = QuadraticBilevel.from_spec(2, 2, [1.0, 2.0], p_eigs=[1.0, 1.0], seed=7)
        sched = aba_schedule("strongly_convex", qb.constants, 30)
        for k in range(30):
            resid = sched.theta[k] ** 2 - sched.alpha * qb.constants.mu_f / 4.0 \
                - (1 - sched.theta[k]) * sched.Gamma_bar[k]
            ok &= abs(resid) <= 1e-12
        return ok

    def counters_and_closed_form():
        s = Scalar1D()
        sched = ba_schedule("strongly_convex", s.constants, 6)
        tr = ba_run(s.exact_oracle(), FeasibleSet.all_space(), [1.0], [0.0], sched)
        ok = tr.gc_g[-1] == sum(k + 1 for k in range(6))
        ok &= tr.gc_f[-1] == 6 and tr.hc_g[-1] == 12
        ok &= abs(tr.xs[-1][0] - (2.0 / 3.0) ** 6) <= 1e-12
        return bool(ok)

    def stochastic_determinism():
        s = Scalar1D()
        noise = NoiseSpec(sigma_x=0.1, sigma_y=0.1, sigma_gy=0.1, sigma_gxy=0.1, sigma_gyy=0.1)
        sched = bsa_schedule("strongly_convex", s.constants, 15)
        runs = []
        for _ in range(2):
            oracle = make_stochastic(s, noise, seed=42)
            runs.append(bsa_run(oracle, FeasibleSet.ball([0.0], 2.0), [1.0], [0.0], sched))
        same = np.array_equal(runs[0].xs, runs[1].xs)
        zero = make_stochastic(s, NoiseSpec(), seed=1)
        exact = s.exact_oracle()
        x, y = np.array([0.7]), np.array([-0.2])
        bitwise = np.array_equal(zero.grad_y_g(x, y), exact.problem.grad_y_g(x, y))
        return bool(same and bitwise)

    def bias_bound_values():
        s = Scalar1D()
        c = QuadraticBilevel.from_spec(1, 2, [1.0, 2.0], seed=0).constants
        return hia_bias_bound(c, 3) == 0.125 and hia_bias_bound(s.constants, 5) == 0.0

    return [
        ("projection idempotent and nonexpansive", projections),
        ("derived constants on the scalar instance", constants),
        ("hypergradient matches finite differences", hypergrad_fd),
        ("inner gradient descent per-step contraction", inner_contraction),
        ("Neumann estimator bias by enumeration", neumann_bias),
        ("schedule recursions and product sequence", schedules),
        ("counter identities and scalar closed form", counters_and_closed_form),
        ("seeded runs are bit-reproducible", stochastic_determinism),
        ("bias bound values", bias_bound_values),
    ]


def selftest(verbose: bool = True) -> int:
    """Run the invariant suite; returns the number of failed checks."""
    failures = 0
    for name, fn in _checks():
        detail = ""
        try:
            ok = bool(fn())
        except Exception as exc:  # a crashed check is a failed check
            ok = False
            detail = f": {exc!r}"
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}{detail}")
        if not ok:
            failures += 1
    if verbose:
        total = len(_checks())
        print(f"{total - failures}/{total} checks passed")
    return failures
