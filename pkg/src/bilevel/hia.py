"""Randomized truncated Neumann-series estimation of the inner Hessian inverse.

For a symmetric H with spectrum in [mu_g, L_g], the Neumann identity
H^{-1} = (1/L_g) sum_i (I - H/L_g)^i holds.  Truncating the series at a
random depth p drawn uniformly from {0, ..., b-1} and replacing each
factor by an independent Hessian sample gives the estimator

    (b/L_g) * prod_{i=1..p} (I - G_i/L_g),

whose expectation is the b-term partial sum; the remaining bias is at
most (1/mu_g) ((Q_g-1)/Q_g)^b in spectral norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import SmoothnessConstants


@dataclass
class HiaEstimate:
    h_yy: np.ndarray
    p_drawn: int
    b: int

    @property
    def hessian_samples_used(self) -> int:
        return self.p_drawn


def _draw_p(rng: np.random.Generator, b: int) -> int:
    return int(rng.integers(0, b))


def hia_estimate(oracle, x, y, b: int, rng: np.random.Generator) -> HiaEstimate:
    """Draw the truncation depth and the Hessian samples; return the matrix estimate.

    Samples accumulate left to right in draw order.  Charges ``p`` inner
    Hessian queries to the oracle counters; the depth draw itself comes
    from ``rng`` (a dedicated stream), not from the Hessian sample stream.
    """
    if b < 1:
        raise ValueError("b must be a positive integer")
    L_g = oracle.constants.L_g
    m = oracle.dim_y
    p = _draw_p(rng, b)
    est = np.eye(m)
    for _ in range(p):
        g_i = oracle.hess_yy_g(x, y)
        est = est @ (np.eye(m) - g_i / L_g)
    return HiaEstimate(h_yy=(b / L_g) * est, p_drawn=p, b=b)


def hia_apply(oracle, x, y, v, b: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Apply the estimator to a vector without materializing the product chain.

    Draws the same depth and samples as :func:`hia_estimate` (identical
    stream consumption) and applies the factors to ``v`` right to left,
    so the result equals ``hia_estimate(...).h_yy @ v`` up to rounding in
    O(p m^2) work.  Returns (vector, p).
    """
    if b < 1:
        raise ValueError("b must be a positive integer")
    L_g = oracle.constants.L_g
    p = _draw_p(rng, b)
    samples = [oracle.hess_yy_g(x, y) for _ in range(p)]
    w = np.array(v, dtype=float, copy=True)
    for g_i in reversed(samples):
        w = w - (g_i @ w) / L_g
    return (b / L_g) * w, p


def hia_expected_matrix(h: np.ndarray, L_g: float, b: int) -> np.ndarray:
    """Exact expectation of the estimator for a deterministic Hessian h.

    Enumerates the b equally likely truncation depths:
    (1/L_g) sum_{i=0}^{b-1} (I - h/L_g)^i.
    """
    m = h.shape[0]
    base = np.eye(m) - np.asarray(h, dtype=float) / L_g
    total = np.zeros_like(base)
    term = np.eye(m)
    for _ in range(b):
        total = total + term
        term = term @ base
    return total / L_g


def hia_bias_bound(c: SmoothnessConstants, b: int) -> float:
    """Spectral-norm bias bound (1/mu_g) ((Q_g - 1)/Q_g)**b of the estimator mean."""
    if b < 1:
        raise ValueError("b must be a positive integer")
    q = c.L_g / c.mu_g
    return (1.0 / c.mu_g) * ((q - 1.0) / q) ** b


def hia_second_moment_bound(c: SmoothnessConstants) -> float:
    """Bound 2/mu_g on the expected deviation norm of the estimator."""
    return 2.0 / c.mu_g
