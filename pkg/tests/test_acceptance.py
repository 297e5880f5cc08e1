"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; the plain test outcomes carry the same information.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from bilevel.aba import aba_run, aba_schedule
from bilevel.ba import ba_run, ba_schedule
from bilevel.bounds import bound_curve
from bilevel.bsa import bsa_ensemble, bsa_schedule
from bilevel.fitting import fit_rate
from bilevel.harness import (
    bound_inputs_for,
    complexity_at,
    constrained_optimum,
    run_experiment,
)
from bilevel.hia import hia_bias_bound, hia_expected_matrix
from bilevel.hypergrad import hypergradient
from bilevel.inner import gd_inner
from bilevel.problem import FeasibleSet, NoiseSpec, SmoothnessConstants, derived_constants
from bilevel.testbeds import QuadraticBilevel, RidgeHyperTune, Scalar1D
from conftest import box_around, fd_composed_grad, quad_bound, quad_mild, quad_spread, quad_stoch

NOISE = NoiseSpec(sigma_x=0.1, sigma_y=0.1, sigma_gy=0.1, sigma_gxy=0.1, sigma_gyy=0.1)
SEEDS = tuple(range(20))


@contextmanager
def criterion(num: int, title: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {num}] FAIL {title}")
        raise
    print(f"[criterion {num}] PASS {title}")


def test_c01_hypergradient_matches_finite_differences(ridge):
    with criterion(1, "hypergradient vs finite differences on 100 random points"):
        t0 = time.perf_counter()
        problems = [Scalar1D(), quad_mild(), quad_bound(), ridge]
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 100:
            problem = problems[checked % len(problems)]
            x = problem.region_x.project(rng.normal(size=problem.dim_x))
            g = hypergradient(problem.exact_oracle(), x, problem.ystar(x)).grad
            fd = fd_composed_grad(problem, x)
            rel = np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(fd))
            assert rel <= 1e-6, f"relative error {rel} on {type(problem).__name__}"
            checked += 1
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def test_c02_gradient_error_bound_sound_and_tight(ridge):
    with criterion(2, "approximation error within C * inner distance, tight on the scalar instance"):
        rng = np.random.default_rng(7)
        scalar = Scalar1D()
        problems = [scalar, quad_mild(), quad_bound(), ridge]
        best_ratio = 0.0
        checked = 0
        while checked < 1000:
            problem = problems[checked % len(problems)]
            C = derived_constants(problem.constants).C
            x = problem.region_x.project(rng.normal(size=problem.dim_x))
            ystar = problem.ystar(x)
            ybar = ystar + 0.3 * rng.normal(size=problem.dim_y)
            if np.linalg.norm(ybar) > problem.y_radius:
                continue
            err = np.linalg.norm(hypergradient(problem.exact_oracle(), x, ybar).grad
                                 - problem.composed_grad(x))
            dist = np.linalg.norm(ystar - ybar)
            assert err <= C * dist + 1e-10, "bound violated"
            if problem is scalar and dist > 1e-8:
                best_ratio = max(best_ratio, err / (C * dist))
            checked += 1
        assert best_ratio >= 0.99, f"scalar tightness ratio {best_ratio}"


def test_c03_inner_contraction_factor():
    with criterion(3, "inner descent contracts by (Q-1)/(Q+1) per step for Q in {1, 2, 10}"):
        for Q in (1.0, 2.0, 10.0):
            eigs = [1.0, Q] if Q > 1 else [1.0, 1.0]
            m = len(eigs)
            qb = QuadraticBilevel(A=np.diag(eigs), B=np.ones((m, 1)), b=np.zeros(m),
                                  P=np.eye(1), p=[0.0], Q=np.eye(m), y_d=np.zeros(m))
            rho = (Q - 1.0) / (Q + 1.0)
            oracle = qb.exact_oracle()
            x = np.array([0.4])
            ystar = qb.ystar(x)
            y = ystar + np.array([2.0, -1.5])
            err = np.linalg.norm(y - ystar)
            for _ in range(50):
                y = gd_inner(oracle, x, y, 1).y_final
                new_err = np.linalg.norm(y - ystar)
                assert new_err <= rho * err + 1e-12
                err = new_err
                if err == 0.0:
                    break


def test_c04_hessian_inverse_estimator_bias():
    with criterion(4, "enumerated estimator bias within (1/mu)((Q-1)/Q)^b for b = 1..10"):
        for Q in (1.5, 2.0, 3.0):
            mu, L = 1.0, Q
            eigs = np.linspace(mu, L, 8)  # m <= 10, endpoints included
            H = np.diag(eigs)
            c = SmoothnessConstants(mu_g=mu, L_g=L)
            H_inv = np.linalg.inv(H)
            for b in range(1, 11):
                bias = np.linalg.norm(H_inv - hia_expected_matrix(H, L, b), 2)
                assert bias <= hia_bias_bound(c, b) * (1 + 1e-12) + 1e-15


def test_c05_strongly_convex_bound_and_scalar_closed_form():
    with criterion(5, "strongly convex bound holds for N <= 200; scalar closed form to 1e-12"):
        qb = quad_bound()
        box = box_around(qb, 2.0)
        x0 = qb.x_star + np.array([1.5, -1.0, 0.8])
        y0 = np.zeros(4)
        sched = ba_schedule("strongly_convex", qb.constants, 200)
        tr = ba_run(qb.exact_oracle(), box, x0, y0, sched, cold_start=True)
        x_ref, f_star, _ = constrained_optimum(qb, box)
        inp = bound_inputs_for(qb, box, x0, y0, None, x_ref, f_star)
        bounds = bound_curve("ba/strongly_convex", 200, inp)
        assert np.all(tr.f_gap <= bounds + 1e-12), "gap exceeded the bound"

        scalar = Scalar1D()
        st = ba_run(scalar.exact_oracle(), FeasibleSet.all_space(), [1.0], [0.0],
                    ba_schedule("strongly_convex", scalar.constants, 30))
        expect = (2.0 / 3.0) ** np.arange(31)
        assert np.max(np.abs(st.xs.ravel() - expect) / expect) <= 1e-12


def test_c06_deterministic_rate_orders():
    with criterion(6, "log-log slopes: plain convex <= -0.9, accelerated <= -1.8, "
                      "nonconvex mean stationarity <= -0.9, each with r^2 >= 0.95"):
        t0 = time.perf_counter()
        qb = quad_mild()
        box = box_around(qb, 3.0)
        x0 = qb.x_star + np.array([2.5, -2.0])
        tr = ba_run(qb.exact_oracle(), box, x0, np.zeros(2),
                    ba_schedule("convex", qb.constants, 1000))
        fit = fit_rate(tr.f_gap, (10, 1000))
        assert fit.slope <= -0.9 and fit.r_squared >= 0.95, f"ba convex {fit}"

        qs = quad_spread()
        boxs = box_around(qs, 4.0)
        x0s = qs.x_star + 3.0 * np.ones(10)
        atr = aba_run(qs.exact_oracle(), boxs, x0s, np.zeros(10),
                      aba_schedule("convex", qs.constants, 1000))
        afit = fit_rate(atr.f_gap, (10, 1000))
        assert afit.slope <= -1.8 and afit.r_squared >= 0.95, f"accelerated {afit}"

        ntr = ba_run(qb.exact_oracle(), FeasibleSet.all_space(), x0, np.zeros(2),
                     ba_schedule("nonconvex", qb.constants, 1000), seed=3)
        running_mean = np.cumsum(ntr.grad_norm_sq) / np.arange(1, 1001)
        nfit = fit_rate(running_mean, (10, 1000))
        assert nfit.slope <= -0.9 and nfit.r_squared >= 0.95, f"nonconvex {nfit}"

        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_c07_stochastic_expected_rates():
    with criterion(7, "20-seed ensembles: strongly convex slope <= -0.8, "
                      "convex <= -0.4, nonconvex stationarity <= -0.4"):
        t0 = time.perf_counter()
        qb = quad_stoch()
        ball = FeasibleSet.ball(qb.x_star, 3.0)
        x0 = qb.x_star + np.array([2.0, -1.5])
        y0 = np.zeros(2)

        sched = bsa_schedule("strongly_convex", qb.constants, 2000, seeds=SEEDS)
        ens = bsa_ensemble(qb, NOISE, ball, x0, y0, sched)
        fit = fit_rate(ens.f_gap_mean, (50, 2000))
        lo = fit_rate(np.maximum(ens.f_gap_mean - 2 * ens.f_gap_se, 1e-300), (50, 2000))
        hi = fit_rate(ens.f_gap_mean + 2 * ens.f_gap_se, (50, 2000))
        print(f"    strongly convex slope {fit.slope:.3f} "
              f"(band {lo.slope:.3f}..{hi.slope:.3f})")
        assert fit.slope <= -0.8

        horizons = [50, 100, 200, 400, 800, 1600]
        gaps, ses = [], []
        for N in horizons:
            se_sched = bsa_schedule("convex", qb.constants, N, seeds=SEEDS)
            e = bsa_ensemble(qb, NOISE, ball, x0, y0, se_sched)
            gaps.append(e.final_f_gap_mean)
            ses.append(e.final_f_gap_se)
        cfit = fit_rate(gaps, (horizons[0], horizons[-1]), budgets=horizons)
        print(f"    convex slope {cfit.slope:.3f} "
              f"(stderrs {['%.1e' % s for s in ses]})")
        assert cfit.slope <= -0.4

        grads, gses = [], []
        for N in horizons:
            sn = bsa_schedule("nonconvex", qb.constants, N, seeds=SEEDS)
            e = bsa_ensemble(qb, NOISE, FeasibleSet.all_space(), x0, y0, sn)
            grads.append(e.grad_at_R_mean)
            gses.append(e.grad_at_R_se)
        nfit = fit_rate(grads, (horizons[0], horizons[-1]), budgets=horizons)
        print(f"    nonconvex slope {nfit.slope:.3f}")
        assert nfit.slope <= -0.4

        elapsed = time.perf_counter() - t0
        assert elapsed < 300.0, f"took {elapsed:.1f}s"


def test_c08_oracle_call_accounting_and_growth_exponent():
    with criterion(8, "counter identities exact; inner/outer call growth exponent 1.25 +/- 0.15"):
        scalar = Scalar1D()
        tr = ba_run(scalar.exact_oracle(), FeasibleSet.all_space(), [1.0], [0.0],
                    ba_schedule("strongly_convex", scalar.constants, 7))
        assert tr.gc_g[-1] == sum(k + 1 for k in range(7))
        assert tr.gc_f[-1] == 7
        assert tr.hc_g[-1] == 14

        qb = quad_stoch()
        sched = bsa_schedule("strongly_convex", qb.constants, 25, seeds=(3,))
        from bilevel.bsa import bsa_run
        from bilevel.testbeds import make_stochastic

        oracle = make_stochastic(qb, NOISE, 3)
        str_tr = bsa_run(oracle, FeasibleSet.ball(qb.x_star, 3.0),
                         qb.x_star + np.array([1.0, 0.5]), np.zeros(2), sched)
        assert str_tr.gc_g[-1] == sum(max(1, k) for k in range(25))
        assert str_tr.gc_f[-1] == 25
        assert str_tr.hc_g[-1] == np.sum(1 + str_tr.meta["p_used"])

        qc = quad_mild()
        box = box_around(qc, 8.0)
        x0 = qc.x_star + 5.0 * np.array([1.0, -0.8]) / np.linalg.norm([1.0, -0.8])
        ctr = ba_run(qc.exact_oracle(), box, x0, np.zeros(2),
                     ba_schedule("convex", qc.constants, 2000))
        eps_grid = np.logspace(-1, -3, 9)
        pts = [complexity_at(ctr, eps) for eps in eps_grid]
        assert all(p is not None for p in pts), "gap range not covered"
        gcf = np.log([p["gc_f"] for p in pts])
        gcg = np.log([p["gc_g"] for p in pts])
        exponent = float(np.polyfit(gcf, gcg, 1)[0])
        print(f"    growth exponent {exponent:.3f}")
        assert abs(exponent - 1.25) <= 0.15


def test_c09_trace_determinism(tmp_path):
    with criterion(9, "identical config and seed give byte-identical trace files"):
        det_cfg = {
            "testbed": {"kind": "quadratic", "n": 2, "m": 2, "inner_eigs": [1.0, 2.0],
                        "q_eigs": [1.0, 1.0], "p_eigs": [0.5, 0.5], "seed": 11},
            "solver": "ba", "convexity_class": "strongly_convex", "N": 30, "seed": 0,
        }
        run_experiment(det_cfg, tmp_path / "d1")
        run_experiment(det_cfg, tmp_path / "d2")
        assert (tmp_path / "d1/trace.csv").read_bytes() == (tmp_path / "d2/trace.csv").read_bytes()

        sto_cfg = {
            "testbed": {"kind": "quadratic", "n": 2, "m": 2, "inner_eigs": [1.0, 2.0],
                        "q_eigs": [1.0, 1.0], "p_eigs": [0.5, 0.5], "seed": 11,
                        "L_g_margin": 1.0},
            "solver": "bsa", "convexity_class": "nonconvex", "N": 40, "seed": 5,
            "noise": {"sigma_x": 0.1, "sigma_y": 0.1, "sigma_gy": 0.1,
                      "sigma_gxy": 0.1, "sigma_gyy": 0.1},
        }
        run_experiment(sto_cfg, tmp_path / "s1")
        run_experiment(sto_cfg, tmp_path / "s2")
        assert (tmp_path / "s1/trace.csv").read_bytes() == (tmp_path / "s2/trace.csv").read_bytes()
        run_experiment({**sto_cfg, "seed": 6}, tmp_path / "s3")
        assert (tmp_path / "s1/trace.csv").read_bytes() != (tmp_path / "s3/trace.csv").read_bytes()
