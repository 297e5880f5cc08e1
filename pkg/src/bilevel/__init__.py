"""Bilevel optimization solvers with approximate hypergradients.

The library solves min_{x in X} f(x, y*(x)) with y*(x) the minimizer of
a strongly convex inner objective g(x, .).  It provides a deterministic
projected approximate-gradient solver, an accelerated variant, and a
stochastic variant whose Hessian-inverse corrections use a randomized
truncated Neumann-series estimator; plus analytic testbeds, theoretical
bound evaluation, oracle-call accounting and a benchmark harness that
verifies the convergence orders empirically.
"""

__version__ = "0.1.0"

from .problem import (
    AssumptionViolation,
    DerivedConstants,
    ExactOracle,
    FeasibleSet,
    NoiseSpec,
    OracleCounters,
    SmoothnessConstants,
    StochasticOracle,
    derived_constants,
    project,
)
from .hypergrad import HypergradResult, hypergrad_error_bound, hypergradient, implicit_jacobian
from .inner import InnerRunResult, gd_inner, sgd_inner
from .hia import (
    HiaEstimate,
    hia_apply,
    hia_bias_bound,
    hia_estimate,
    hia_expected_matrix,
    hia_second_moment_bound,
)
from .trace import RunTrace
from .ba import ScheduleSpec, ba_run, ba_schedule
from .aba import AbaSchedule, AbaState, aba_run, aba_schedule, gamma_sequence
from .bsa import (
    BsaSchedule,
    EnsembleSummary,
    StochasticHypergrad,
    bsa_ensemble,
    bsa_run,
    bsa_schedule,
    stochastic_hypergradient,
    weighted_average_weights,
)
from .testbeds import (
    QuadraticBilevel,
    RidgeHyperTune,
    Scalar1D,
    StackelbergQuad,
    analytic_f_star,
    analytic_grad_f,
    analytic_ystar,
    make_stochastic,
)
from .bounds import BoundInputs, BoundUnavailable, bound_curve, stochastic_constants
from .fitting import SlopeFit, fit_rate
from .harness import (
    ConfigError,
    ExperimentConfig,
    complexity_at,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
