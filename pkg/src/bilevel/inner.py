"""Inner minimization of g(x, .) by (stochastic) gradient descent.

The deterministic loop uses the constant step 2/(L_g + mu_g), which
contracts the distance to y*(x) by (Q_g - 1)/(Q_g + 1) per step on
smooth strongly convex problems.  The stochastic loop uses the
diminishing steps 1/(mu_g (t+2)); its expected distance after t steps is
bounded by sqrt(2/(t+2)) * max(initial distance, sigma/mu_g), where
sigma is the total inner gradient noise level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class InnerRunResult:
    y_final: np.ndarray
    iterations: int
    cumulative_grad_g_calls: int
    theoretical_bound: float | None = None


def gd_contraction_factor(Q_g: float) -> float:
    return (Q_g - 1.0) / (Q_g + 1.0)


def gd_inner(oracle, x, y0, t: int, ystar=None) -> InnerRunResult:
    """Run t exact gradient steps on g(x, .) from y0.

    Adds exactly t to the inner gradient counter.  When ``ystar`` is
    given, the returned bound is the t-step contraction of the initial
    distance.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    c = oracle.constants
    beta = 2.0 / (c.L_g + c.mu_g)
    y = np.array(y0, dtype=float, copy=True)
    grad = oracle.inner_gradient_closure(x)
    for _ in range(t):
        y = y - beta * grad(y)
    oracle.counters.add(gc_g=t)
    bound = None
    if ystar is not None:
        rho = gd_contraction_factor(c.L_g / c.mu_g)
        bound = rho**t * float(np.linalg.norm(np.asarray(ystar, dtype=float) - np.asarray(y0, dtype=float)))
    return InnerRunResult(y_final=y, iterations=t, cumulative_grad_g_calls=t, theoretical_bound=bound)


def sgd_bound(t: int, dist0: float, sigma_total: float, mu_g: float) -> float:
    """Expected-distance bound sqrt(2/(t+2)) * max(dist0, sigma/mu_g)."""
    return np.sqrt(2.0 / (t + 2.0)) * max(dist0, sigma_total / mu_g)


def _sgd_scan_diagonal(lam, c_vec, y0, t, mu, eps):
    """Unrolled stochastic recursion for a componentwise inner gradient.

    With grad_y g = lam * y - c the t-step recursion is linear per
    component, so the final iterate is a weighted sum over steps,
    computed with one reversed cumulative product instead of a Python
    loop.  Same stream consumption and stepsizes as the sequential path.
    """
    betas = 1.0 / (mu * (np.arange(t) + 2.0))
    factors = 1.0 - betas[:, None] * lam[None, :]
    suffix = np.ones((t + 1, lam.size))
    suffix[:t] = np.cumprod(factors[::-1], axis=0)[::-1]
    drive = c_vec[None, :] - (eps if eps is not None else 0.0)
    return suffix[0] * y0 + np.sum(suffix[1:] * (betas[:, None] * drive), axis=0)


def sgd_inner(oracle, x, y0, t: int, ystar=None) -> InnerRunResult:
    """Run t stochastic gradient steps on g(x, .) from y0.

    Noise rows for the whole run are pre-drawn from the oracle's inner
    gradient stream, so the trace is replayable from the stream seed.
    Problems whose inner Hessian is diagonal take a vectorized path that
    evaluates the same recursion without a per-step Python loop.  The
    recorded bound is on the expectation, taken with the gradient noise
    level (the inner loop never queries Hessians).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    c = oracle.constants
    mu = c.mu_g
    y = np.array(y0, dtype=float, copy=True)
    eps = oracle.draw_inner_noise(t)
    diag = oracle.inner_diagonal(x) if t > 0 else None
    if diag is not None:
        lam, c_vec = diag
        y = _sgd_scan_diagonal(np.asarray(lam, dtype=float),
                               np.asarray(c_vec, dtype=float), y, t, mu, eps)
    else:
        grad = oracle.inner_gradient_closure(x)
        if eps is None:
            for s in range(t):
                y = y - (1.0 / (mu * (s + 2.0))) * grad(y)
        else:
            for s in range(t):
                y = y - (1.0 / (mu * (s + 2.0))) * (grad(y) + eps[s])
    oracle.counters.add(gc_g=t)
    bound = None
    if ystar is not None:
        dist0 = float(np.linalg.norm(np.asarray(ystar, dtype=float) - np.asarray(y0, dtype=float)))
        sigma_total = getattr(oracle, "noise", None)
        sig = sigma_total.sigma_gy * np.sqrt(oracle.dim_y) if sigma_total is not None else 0.0
        bound = float(sgd_bound(t, dist0, sig, mu))
    return InnerRunResult(y_final=y, iterations=t, cumulative_grad_g_calls=t, theoretical_bound=bound)
