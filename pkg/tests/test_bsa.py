"""Stochastic solver: schedules, degeneracies, bias accounting, ensembles."""

import numpy as np
import pytest

from bilevel.aba import gamma_sequence
from bilevel.bsa import (
    bsa_ensemble,
    bsa_run,
    bsa_schedule,
    stochastic_hypergradient,
    weighted_average_weights,
)
from bilevel.hypergrad import hypergradient
from bilevel.problem import FeasibleSet, NoiseSpec, derived_constants
from bilevel.testbeds import QuadraticBilevel, make_stochastic
from conftest import quad_stoch


def constant_hessian_at_L():
    # inner Hessian identically L_g * I, so the depth-0 estimate is exact
    return QuadraticBilevel(A=2.0 * np.eye(2), B=np.eye(2), b=[0.1, -0.2],
                            P=np.eye(2), p=[0.0, 0.0], Q=np.eye(2), y_d=[0.0, 0.0])


class TestSchedule:
    def test_unit_condition_number_needs_one_sample(self, scalar):
        sched = bsa_schedule("nonconvex", scalar.constants, 10)
        assert all(sched.b_k(k) == 1 for k in range(10))

    def test_strongly_convex_stepsizes(self, scalar):
        sched = bsa_schedule("strongly_convex", scalar.constants, 10)
        mu_f = scalar.constants.mu_f
        assert sched.alpha(3) == pytest.approx(4.0 / (5.0 * mu_f))

    def test_horizon_tuned_stepsize(self, scalar):
        sched = bsa_schedule("convex", scalar.constants, 99)
        d = derived_constants(scalar.constants)
        assert sched.alpha(0) == pytest.approx(1.0 / (20.0 * d.L_f))
        assert sched.alpha(42) == sched.alpha(0)

    def test_inner_budget_floor(self, scalar):
        sched = bsa_schedule("strongly_convex", scalar.constants, 4)
        assert [sched.t_k(k) for k in range(4)] == [1, 1, 2, 3]
        exact = bsa_schedule("strongly_convex", scalar.constants, 4,
                             exact_paper_schedule=True)
        assert [exact.t_k(k) for k in range(4)] == [0, 1, 2, 3]

    def test_truncation_budget_growth(self):
        qb = quad_stoch()  # Q_g = 3 after the declared margin
        q = derived_constants(qb.constants).Q_g
        sched = bsa_schedule("strongly_convex", qb.constants, 1000)
        ln_ratio = np.log(q / (q - 1.0))
        for k in (0, 10, 100, 999):
            expect = max(1, int(np.ceil(np.log(k + 2) / (2 * ln_ratio))))
            assert sched.b_k(k) == expect

    def test_requires_mu_and_cfx(self):
        from bilevel.problem import SmoothnessConstants

        c = SmoothnessConstants(mu_g=1.0, L_g=2.0, L_fy=1.0, C_gxy=1.0, mu_f=0.0)
        with pytest.raises(ValueError):
            bsa_schedule("strongly_convex", c, 5)


class TestStochasticHypergradient:
    def test_zero_noise_b1_matches_deterministic(self):
        qb = constant_hessian_at_L()
        x = np.array([0.3, -0.1])
        ybar = np.array([0.2, 0.4])
        oracle = make_stochastic(qb, NoiseSpec(), seed=0)
        got = stochastic_hypergradient(oracle, x, ybar, 1)
        assert got.p_used == 0
        ref = hypergradient(qb.exact_oracle(), x, ybar).grad
        np.testing.assert_allclose(got.grad, ref, rtol=1e-14, atol=1e-15)

    def test_scalar_depth_zeroes_correction(self, scalar):
        # contraction factor I - H/L is exactly zero, so any p >= 1 leaves
        # only the outer partial gradient
        x = np.array([0.5])
        ybar = np.array([0.2])
        seen_positive = False
        for seed in range(10):
            oracle = make_stochastic(scalar, NoiseSpec(), seed=seed)
            got = stochastic_hypergradient(oracle, x, ybar, 8)
            if got.p_used >= 1:
                seen_positive = True
                np.testing.assert_allclose(got.grad, scalar.grad_x_f(x, ybar), atol=1e-15)
        assert seen_positive

    def test_counter_effects(self, scalar):
        oracle = make_stochastic(scalar, NoiseSpec(), seed=3)
        got = stochastic_hypergradient(oracle, np.array([0.5]), np.array([0.2]), 8)
        assert oracle.counters.gc_f == 1
        assert oracle.counters.hc_g == 1 + got.p_used
        assert got.samples == {"xi": 1, "zeta2": 1, "zeta3": got.p_used}

    def test_monte_carlo_mean_near_deterministic(self, scalar):
        # unit condition number: no truncation bias, so the sample mean sits
        # within Monte-Carlo error of the exact hypergradient
        x = np.array([0.5])
        ybar = np.array([0.2])
        oracle = make_stochastic(scalar, NoiseSpec(sigma_x=0.1, sigma_y=0.1), seed=11)
        draws = np.array([stochastic_hypergradient(oracle, x, ybar, 8).grad[0]
                          for _ in range(10_000)])
        ref = hypergradient(scalar.exact_oracle(), x, ybar).grad[0]
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - ref) <= 3.0 * se

    def test_bias_dominated_by_truncation_bound(self):
        qb = quad_stoch()
        c = qb.constants
        d = derived_constants(c)
        x = qb.x_star + np.array([0.5, -0.3])
        ybar = qb.ystar(x) + np.array([0.2, -0.1])
        ref = hypergradient(qb.exact_oracle(), x, ybar).grad
        noise = NoiseSpec(sigma_x=0.05, sigma_y=0.05, sigma_gy=0.05,
                          sigma_gxy=0.05, sigma_gyy=0.05)
        for b in (1, 4):
            oracle = make_stochastic(qb, noise, seed=123)
            draws = np.array([stochastic_hypergradient(oracle, x, ybar, b).grad
                              for _ in range(10_000)])
            bias = np.linalg.norm(draws.mean(axis=0) - ref)
            se = np.linalg.norm(draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0]))
            bound = (c.C_gxy * c.C_fy / c.mu_g) * ((d.Q_g - 1) / d.Q_g) ** b
            assert bias <= bound + 3.0 * se
            assert oracle.clamp_frequency < 0.01


class TestAveraging:
    def test_weight_normalization_identity(self):
        # Gamma_N * sum_k gamma_{k-1} / Gamma_k = 1 with gamma_0 = 1
        for N in (1, 2, 5, 20, 100):
            gammas = [1.0] + [2.0 / (k + 2.0) for k in range(1, N)]
            big_gamma = gamma_sequence(gammas, N)
            total = sum(gammas[k - 1] / big_gamma[k - 1] for k in range(1, N + 1))
            assert big_gamma[N - 1] * total == pytest.approx(1.0, abs=1e-12)

    def test_weighted_average_weights(self):
        w = weighted_average_weights(5)
        np.testing.assert_allclose(w, np.arange(1, 6) / 15.0, rtol=1e-15)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)


class TestRuns:
    def test_zero_noise_run_is_deterministic_and_decreasing(self, scalar):
        sched = bsa_schedule("strongly_convex", scalar.constants, 30)
        oracle = make_stochastic(scalar, NoiseSpec(), seed=0)
        tr = bsa_run(oracle, FeasibleSet.ball([0.0], 2.0), [1.0], [0.0], sched)
        rerun = bsa_run(make_stochastic(scalar, NoiseSpec(), seed=1),
                        FeasibleSet.ball([0.0], 2.0), [1.0], [0.0], sched)
        np.testing.assert_array_equal(tr.xs, rerun.xs)  # noise-free path ignores seeds
        assert np.all(np.diff(tr.f_gap[1:]) < 0)  # reported gap strictly decreases

    def test_fixed_point(self):
        qb = QuadraticBilevel(A=np.diag([1.0, 2.0]), B=np.eye(2), b=[0.0, 0.0],
                              P=np.eye(2), p=[0.0, 0.0], Q=np.eye(2), y_d=[0.0, 0.0])
        sched = bsa_schedule("strongly_convex", qb.constants, 10)
        oracle = make_stochastic(qb, NoiseSpec(), seed=0)
        tr = bsa_run(oracle, FeasibleSet.all_space(), np.zeros(2),
                     qb.ystar(np.zeros(2)), sched)
        np.testing.assert_array_equal(tr.xs, np.zeros((11, 2)))

    def test_counter_identities(self, scalar):
        sched = bsa_schedule("strongly_convex", scalar.constants, 4)
        oracle = make_stochastic(scalar, NoiseSpec(sigma_gy=0.1), seed=5)
        tr = bsa_run(oracle, FeasibleSet.ball([0.0], 2.0), [1.0], [0.0], sched)
        assert tr.gc_g[-1] == 1 + 1 + 2 + 3
        assert tr.gc_f[-1] == 4
        assert tr.hc_g[-1] == np.sum(1 + tr.meta["p_used"])

    def test_seed_determinism(self, scalar):
        noise = NoiseSpec(sigma_x=0.1, sigma_y=0.1, sigma_gy=0.1,
                          sigma_gxy=0.1, sigma_gyy=0.1)
        sched = bsa_schedule("convex", scalar.constants, 20)
        runs = []
        for _ in range(2):
            oracle = make_stochastic(scalar, noise, seed=77)
            runs.append(bsa_run(oracle, FeasibleSet.ball([0.0], 2.0), [1.0], [0.0], sched))
        np.testing.assert_array_equal(runs[0].xs, runs[1].xs)
        assert runs[0].R == runs[1].R

    def test_ensemble_summary_statistics(self):
        qb = quad_stoch()
        noise = NoiseSpec(sigma_x=0.1, sigma_y=0.1, sigma_gy=0.1,
                          sigma_gxy=0.1, sigma_gyy=0.1)
        sched = bsa_schedule("convex", qb.constants, 25, seeds=tuple(range(6)))
        ens = bsa_ensemble(qb, noise, FeasibleSet.ball(qb.x_star, 3.0),
                           qb.x_star + np.array([1.0, -1.0]), np.zeros(2), sched)
        gaps = np.vstack([t.f_gap for t in ens.traces])
        np.testing.assert_allclose(ens.f_gap_mean, gaps.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(ens.f_gap_se,
                                   gaps.std(axis=0, ddof=1) / np.sqrt(6), rtol=1e-12)
